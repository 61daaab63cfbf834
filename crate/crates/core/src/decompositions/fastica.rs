use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Decomposition, Prepared};
use crate::error::{Error, Result};
use crate::linalg;
use crate::signals::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FastIcaParams {
    /// Stop when `max_i (1 - |⟨w_i_new, w_i_old⟩|) < tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed of the random orthogonal starting point.
    pub seed: u64,
}

impl Default for FastIcaParams {
    fn default() -> Self {
        FastIcaParams {
            tol: 1e-4,
            max_iter: 1000,
            seed: 0,
        }
    }
}

/// Symmetric FastICA with the `tanh` (log cosh) contrast.
///
/// Iterates `W ← E[g(W z) zᵀ] - diag(E[g'(W z)]) W` followed by symmetric
/// decorrelation on sphered data `z`. The returned `W` includes the sphering matrix.
pub fn fastica(ds: &Dataset, params: &FastIcaParams) -> Result<Decomposition> {
    if !(params.tol > 0.0) || params.max_iter == 0 {
        return Err(Error::Validation(format!(
            "fastica needs tol > 0 and max_iter >= 1, got tol = {}, max_iter = {}",
            params.tol, params.max_iter
        )));
    }
    let started = Instant::now();
    let prep = Prepared::new(ds)?;
    let z = prep.sphered();
    let (n, t) = z.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut w = linalg::random_orthogonal(n, &mut rng);
    let mut converged = false;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    for it in 1..=params.max_iter {
        iterations = it;
        let y = &w * &z;
        let g = y.map(f64::tanh);
        let g_mean: Vec<f64> = g
            .row_iter()
            .map(|r| r.iter().map(|v| 1.0 - v * v).sum::<f64>() / t as f64)
            .collect();
        let mut w_new = &g * z.transpose() / t as f64;
        for i in 0..n {
            let scaled = w.row(i) * g_mean[i];
            let mut row = w_new.row_mut(i);
            row -= scaled;
        }
        let w_new = linalg::symmetric_decorrelation(&w_new)?;
        last_change = (0..n)
            .map(|i| 1.0 - w_new.row(i).dot(&w.row(i)).abs())
            .fold(0.0f64, f64::max);
        w = w_new;
        if last_change < params.tol {
            converged = true;
            break;
        }
    }
    let mut dec = prep.finish(&w, "fastica", params, started)?;
    dec.iterations_used = iterations;
    dec.converged = converged;
    if !converged {
        dec.warnings.push(format!(
            "no convergence in {} iterations (last change {last_change:e})",
            params.max_iter
        ));
    }
    Ok(dec)
}
