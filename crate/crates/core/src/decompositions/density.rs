use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::signals::Dataset;

/// Source density model of the likelihood objective.
///
/// `Logcosh` is `p(y) = 1 / (π cosh y)` with score `ψ = tanh`. `Extended` gives each
/// component a sign `s_i`: `-log p(y) = y²/2 + s_i log cosh y`, score `y + s_i tanh y`.
/// `s_i = +1` is a peaked (super-Gaussian) law and `s_i = -1` a bimodal
/// (sub-Gaussian) one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DensityModel {
    Logcosh,
    Extended { signs: Vec<f64> },
}

/// `log cosh y` without overflow.
pub(crate) fn logcosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl DensityModel {
    fn sign(&self, i: usize) -> Option<f64> {
        match self {
            DensityModel::Logcosh => None,
            DensityModel::Extended { signs } => Some(signs[i]),
        }
    }

    /// `-log p(y)` for component `i`.
    pub fn neg_log_density(&self, i: usize, y: f64) -> f64 {
        match self.sign(i) {
            None => logcosh(y) + std::f64::consts::PI.ln(),
            Some(s) => 0.5 * y * y + s * logcosh(y),
        }
    }

    pub fn score(&self, i: usize, y: f64) -> f64 {
        match self.sign(i) {
            None => y.tanh(),
            Some(s) => y + s * y.tanh(),
        }
    }

    pub fn score_derivative(&self, i: usize, y: f64) -> f64 {
        let t = y.tanh();
        match self.sign(i) {
            None => 1.0 - t * t,
            Some(s) => 1.0 + s * (1.0 - t * t),
        }
    }

    /// Extended model with signs chosen from `y`: `+1` where
    /// `Ê[1 - tanh² y] Ê[y²] - Ê[y tanh y] >= 0` (super-Gaussian side, ties included), else `-1`.
    pub(crate) fn extended_for(y: &DMatrix<f64>) -> Self {
        let t = y.ncols() as f64;
        let signs = y
            .row_iter()
            .map(|r| {
                let (mut d, mut m, mut v2) = (0.0, 0.0, 0.0);
                for &v in r.iter() {
                    let th = v.tanh();
                    d += 1.0 - th * th;
                    m += v * th;
                    v2 += v * v;
                }
                if (d / t) * (v2 / t) - m / t >= 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        DensityModel::Extended { signs }
    }

    pub(crate) fn check(&self, n: usize) -> Result<()> {
        if let DensityModel::Extended { signs } = self {
            if signs.len() != n {
                return Err(Error::shape(format!("{n} density signs"), format!("{}", signs.len())));
            }
        }
        Ok(())
    }

    /// `Σ_i Ê[-log p(y_i)]`, in nats.
    pub(crate) fn mean_neg_log(&self, y: &DMatrix<f64>) -> f64 {
        let t = y.ncols() as f64;
        let mut per_row = vec![0.0; y.nrows()];
        for col in y.column_iter() {
            for (i, &v) in col.iter().enumerate() {
                per_row[i] += self.neg_log_density(i, v);
            }
        }
        per_row.iter().map(|s| s / t).sum()
    }

    /// Relative gradient `Ê[ψ(y) yᵀ] - I`, with `Ê[ψ'(y_i)]` and `Ê[ψ'(y_i) y_i²]`.
    pub(crate) fn moments(&self, y: &DMatrix<f64>) -> Moments {
        let (n, t) = (y.nrows(), y.ncols());
        let mut psi = DMatrix::zeros(n, t);
        let mut psi_d = vec![0.0; n];
        let mut psi_d_y2 = vec![0.0; n];
        for (c, col) in y.column_iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                psi[(i, c)] = self.score(i, v);
                let d = self.score_derivative(i, v);
                psi_d[i] += d;
                psi_d_y2[i] += d * v * v;
            }
        }
        let tf = t as f64;
        let mut g = &psi * y.transpose() / tf;
        for i in 0..n {
            g[(i, i)] -= 1.0;
        }
        let y2: Vec<f64> = y.row_iter().map(|r| r.norm_squared() / tf).collect();
        Moments {
            gradient: g,
            psi_d: psi_d.into_iter().map(|v| v / tf).collect(),
            psi_d_y2: psi_d_y2.into_iter().map(|v| v / tf).collect(),
            y2,
        }
    }
}

pub(crate) struct Moments {
    pub gradient: DMatrix<f64>,
    /// `Ê[ψ'(y_i)]`
    pub psi_d: Vec<f64>,
    /// `Ê[ψ'(y_i) y_i²]`
    pub psi_d_y2: Vec<f64>,
    /// `Ê[y_i²]`
    pub y2: Vec<f64>,
}

/// `L(W) = -log|det W| - Ê[Σ_i log p(y_i)]` in nats, with `y = W x` on mean-removed data.
pub fn negative_log_likelihood(w: &DMatrix<f64>, ds: &Dataset, density: &DensityModel) -> Result<f64> {
    nll_on(w, &ds.centered(), density)
}

pub(crate) fn nll_on(w: &DMatrix<f64>, x: &DMatrix<f64>, density: &DensityModel) -> Result<f64> {
    if w.shape() != (x.nrows(), x.nrows()) {
        return Err(Error::shape(
            format!("{0}x{0} unmixing matrix", x.nrows()),
            format!("{}x{}", w.nrows(), w.ncols()),
        ));
    }
    density.check(w.nrows())?;
    let log_det = linalg::log2_abs_det(w)? * std::f64::consts::LN_2;
    let y = w * x;
    Ok(-log_det + density.mean_neg_log(&y))
}

/// Relative gradient `Ê[ψ(y) yᵀ] - I` of the likelihood loss at `W`.
pub fn relative_gradient(w: &DMatrix<f64>, ds: &Dataset, density: &DensityModel) -> Result<DMatrix<f64>> {
    let x = ds.centered();
    if w.shape() != (x.nrows(), x.nrows()) {
        return Err(Error::shape(
            format!("{0}x{0} unmixing matrix", x.nrows()),
            format!("{}x{}", w.nrows(), w.ncols()),
        ));
    }
    density.check(w.nrows())?;
    Ok(density.moments(&(w * x)).gradient)
}
