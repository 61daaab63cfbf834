use std::collections::VecDeque;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::density::{DensityModel, Moments};
use super::{Decomposition, Prepared};
use crate::error::{Error, Result};
use crate::linalg;
use crate::signals::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PicardParams {
    /// L-BFGS memory: number of past (step, gradient change) pairs kept.
    pub m: usize,
    /// Stop when the max-abs relative gradient falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Step halvings tried before falling back to the gradient direction.
    pub ls_max_backtracks: usize,
    /// Per-component sub/super-Gaussian density switching.
    pub extended: bool,
    /// Constrain `W` to rotations of the sphered data.
    pub orthogonal: bool,
    /// Eigenvalue floor of the Hessian approximation.
    pub lambda_min: f64,
    /// Random orthogonal starting point; identity when `None`.
    pub seed: Option<u64>,
}

impl Default for PicardParams {
    fn default() -> Self {
        PicardParams {
            m: 7,
            tol: 1e-6,
            max_iter: 1000,
            ls_max_backtracks: 10,
            extended: false,
            orthogonal: false,
            lambda_min: 1e-7,
            seed: None,
        }
    }
}

impl PicardParams {
    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.max_iter == 0 || self.ls_max_backtracks == 0 {
            return Err(Error::Validation(
                "picard m, max_iter and ls_max_backtracks must be >= 1".into(),
            ));
        }
        if !(self.tol > 0.0) || !(self.lambda_min > 0.0) {
            return Err(Error::Validation(format!(
                "picard tol and lambda_min must be positive, got {} and {}",
                self.tol, self.lambda_min
            )));
        }
        Ok(())
    }
}

/// Picard: L-BFGS on the likelihood loss in the relative parameterization
/// `W ← (I + D) W`, preconditioned by a block-diagonal Hessian approximation.
///
/// With `params.orthogonal` set this is [`picard_o`].
pub fn picard(ds: &Dataset, params: &PicardParams) -> Result<Decomposition> {
    params.validate()?;
    let started = Instant::now();
    let prep = Prepared::new(ds)?;
    let z = prep.sphered();
    let n = z.nrows();
    let w0 = match params.seed {
        Some(seed) => linalg::random_orthogonal(n, &mut ChaCha8Rng::seed_from_u64(seed)),
        None => DMatrix::identity(n, n),
    };
    let fit = Solver::new(&z, params).run(w0)?;
    let id = match (params.orthogonal, params.extended) {
        (false, false) => "picard",
        (false, true) => "picard-extended",
        (true, false) => "picard-o",
        (true, true) => "picard-o-extended",
    };
    let mut dec = prep.finish(&fit.w, id, params, started)?;
    dec.iterations_used = fit.iterations;
    dec.converged = fit.converged;
    dec.warnings = fit.warnings;
    dec.diagnostics.loss_trace = fit.loss_trace;
    dec.diagnostics.density_resets = fit.density_resets;
    dec.diagnostics.final_gradient_max_abs = Some(fit.gradient_max_abs);
    if params.orthogonal {
        dec.diagnostics.orthogonality_residual_max = Some(fit.ortho_residual_max);
    }
    Ok(dec)
}

/// Picard-O: Picard restricted to orthogonal `W` on sphered data, updated by
/// `W ← exp(D) W` with skew-symmetric `D`. Stops when the skew part of the relative
/// gradient is below `tol`.
pub fn picard_o(ds: &Dataset, params: &PicardParams) -> Result<Decomposition> {
    picard(
        ds,
        &PicardParams {
            orthogonal: true,
            ..params.clone()
        },
    )
}

struct Fit {
    w: DMatrix<f64>,
    iterations: usize,
    converged: bool,
    warnings: Vec<String>,
    loss_trace: Vec<f64>,
    density_resets: Vec<usize>,
    gradient_max_abs: f64,
    ortho_residual_max: f64,
}

struct State {
    w: DMatrix<f64>,
    y: DMatrix<f64>,
    loss: f64,
    moments: Moments,
    /// Gradient in the search space: full `G`, or its skew part when orthogonal.
    g: DMatrix<f64>,
}

struct Solver<'a> {
    z: &'a DMatrix<f64>,
    p: &'a PicardParams,
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

impl<'a> Solver<'a> {
    fn new(z: &'a DMatrix<f64>, p: &'a PicardParams) -> Self {
        Solver { z, p }
    }

    fn loss(&self, w: &DMatrix<f64>, y: &DMatrix<f64>, density: &DensityModel) -> Result<f64> {
        let data = density.mean_neg_log(y);
        if self.p.orthogonal {
            Ok(data)
        } else {
            Ok(-linalg::log2_abs_det(w)? * std::f64::consts::LN_2 + data)
        }
    }

    fn search_gradient(&self, g: &DMatrix<f64>) -> DMatrix<f64> {
        if self.p.orthogonal {
            (g - g.transpose()) * 0.5
        } else {
            g.clone()
        }
    }

    fn state(&self, w: DMatrix<f64>, y: DMatrix<f64>, density: &DensityModel) -> Result<State> {
        let loss = self.loss(&w, &y, density)?;
        let moments = density.moments(&y);
        let g = self.search_gradient(&moments.gradient);
        Ok(State { w, y, loss, moments, g })
    }

    /// Solves the Hessian approximation against `g` (returns `H⁻¹ g`).
    fn precondition(&self, g: &DMatrix<f64>, m: &Moments) -> DMatrix<f64> {
        let n = g.nrows();
        let lambda = self.p.lambda_min;
        let mut out = DMatrix::zeros(n, n);
        if self.p.orthogonal {
            let kappa: Vec<f64> = (0..n)
                .map(|i| m.psi_d[i] - (m.gradient[(i, i)] + 1.0))
                .collect();
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        let h = (0.5 * (kappa[i] + kappa[j])).max(lambda);
                        out[(i, j)] = g[(i, j)] / h;
                    }
                }
            }
            return out;
        }
        // 2x2 blocks [[h_ij, 1], [1, h_ji]] with h_ij = Ê[ψ'(y_i)] Ê[y_j²]
        let mut h = DMatrix::from_fn(n, n, |i, j| m.psi_d[i] * m.y2[j]);
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (h[(i, j)], h[(j, i)]);
                let smallest = 0.5 * (a + b - ((a - b) * (a - b) + 4.0).sqrt());
                if smallest < lambda {
                    h[(i, j)] += lambda - smallest;
                    h[(j, i)] += lambda - smallest;
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = if i == j {
                    g[(i, i)] / (m.psi_d_y2[i] + 1.0).max(lambda)
                } else {
                    (h[(j, i)] * g[(i, j)] - g[(j, i)]) / (h[(i, j)] * h[(j, i)] - 1.0)
                };
            }
        }
        out
    }

    fn lbfgs_direction(&self, st: &State, memory: &VecDeque<(DMatrix<f64>, DMatrix<f64>, f64)>) -> DMatrix<f64> {
        let mut q = st.g.clone();
        let mut alphas = Vec::with_capacity(memory.len());
        for (s, y, rho) in memory.iter().rev() {
            let a = rho * inner(s, &q);
            q -= y * a;
            alphas.push(a);
        }
        let mut r = self.precondition(&q, &st.moments);
        for ((s, y, rho), a) in memory.iter().zip(alphas.into_iter().rev()) {
            let b = rho * inner(y, &r);
            r += s * (a - b);
        }
        -r
    }

    fn step(&self, d: &DMatrix<f64>) -> DMatrix<f64> {
        let n = d.nrows();
        if self.p.orthogonal {
            d.exp()
        } else {
            DMatrix::identity(n, n) + d
        }
    }

    /// Backtracking: halve from the full step until the loss does not increase.
    fn line_search(&self, st: &State, d: &DMatrix<f64>, density: &DensityModel) -> Option<(f64, DMatrix<f64>, DMatrix<f64>, f64)> {
        let mut alpha = 1.0;
        for _ in 0..self.p.ls_max_backtracks {
            let t = self.step(&(d * alpha));
            let w = &t * &st.w;
            let y = &t * &st.y;
            if let Ok(loss) = self.loss(&w, &y, density) {
                if loss.is_finite() && loss <= st.loss {
                    return Some((alpha, w, y, loss));
                }
            }
            alpha *= 0.5;
        }
        None
    }

    fn run(&self, w0: DMatrix<f64>) -> Result<Fit> {
        let y0 = &w0 * self.z;
        let mut density = if self.p.extended {
            DensityModel::extended_for(&y0)
        } else {
            DensityModel::Logcosh
        };
        let mut st = self.state(w0, y0, &density)?;
        if !st.loss.is_finite() {
            return Err(Error::Numerical("initial loss is not finite".into()));
        }
        let mut memory: VecDeque<(DMatrix<f64>, DMatrix<f64>, f64)> = VecDeque::with_capacity(self.p.m);
        let mut fit = Fit {
            w: DMatrix::zeros(0, 0),
            iterations: 0,
            converged: false,
            warnings: Vec::new(),
            loss_trace: vec![st.loss],
            density_resets: Vec::new(),
            gradient_max_abs: f64::INFINITY,
            ortho_residual_max: linalg::max_abs_minus_identity(&(&st.w * st.w.transpose())),
        };

        for it in 1..=self.p.max_iter {
            if self.p.extended && it > 1 {
                let next = DensityModel::extended_for(&st.y);
                if next != density {
                    density = next;
                    memory.clear();
                    st = self.state(st.w, st.y, &density)?;
                    fit.density_resets.push(fit.loss_trace.len());
                    fit.loss_trace.push(st.loss);
                }
            }
            fit.gradient_max_abs = st.g.amax();
            if fit.gradient_max_abs < self.p.tol {
                fit.converged = true;
                break;
            }
            fit.iterations = it;

            let mut d = self.lbfgs_direction(&st, &memory);
            let mut found = self.line_search(&st, &d, &density);
            if found.is_none() {
                memory.clear();
                d = -st.g.clone();
                found = self.line_search(&st, &d, &density);
            }
            let Some((alpha, w, y, _)) = found else {
                fit.warnings.push(format!(
                    "line search failed at iteration {it} (max |gradient| = {:e})",
                    fit.gradient_max_abs
                ));
                break;
            };
            let next = self.state(w, y, &density)?;
            if !next.loss.is_finite() {
                return Err(Error::Numerical(format!("loss is not finite at iteration {it}")));
            }
            let s = &d * alpha;
            let dg = &next.g - &st.g;
            let sy = inner(&s, &dg);
            if sy > 0.0 {
                if memory.len() == self.p.m {
                    memory.pop_front();
                }
                memory.push_back((s, dg, 1.0 / sy));
            }
            st = next;
            fit.loss_trace.push(st.loss);
            if self.p.orthogonal {
                let r = linalg::max_abs_minus_identity(&(&st.w * st.w.transpose()));
                fit.ortho_residual_max = fit.ortho_residual_max.max(r);
            }
        }
        if !fit.converged && fit.warnings.is_empty() {
            fit.gradient_max_abs = st.g.amax();
            if fit.gradient_max_abs < self.p.tol {
                fit.converged = true;
            } else {
                fit.warnings.push(format!(
                    "max_iter = {} reached (max |gradient| = {:e})",
                    self.p.max_iter, fit.gradient_max_abs
                ));
            }
        }
        fit.w = st.w;
        Ok(fit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompositions::{amari_index, relative_gradient};
    use crate::signals::{synth_dataset, Mixing, SourceKind, SynthSpec};

    fn mixture(n: usize, t: usize, seed: u64) -> (Dataset, DMatrix<f64>) {
        let spec = SynthSpec::new(n, t, SourceKind::Laplacian, seed).with_mixing(Mixing::RandomGeneral);
        let (ds, truth) = synth_dataset(&spec).unwrap();
        (ds, truth.mixing)
    }

    fn assert_monotone(d: &Decomposition) {
        let trace = &d.diagnostics.loss_trace;
        let resets = &d.diagnostics.density_resets;
        for k in 1..trace.len() {
            if !resets.contains(&k) {
                assert!(trace[k] <= trace[k - 1], "loss increased at {k}: {} -> {}", trace[k - 1], trace[k]);
            }
        }
    }

    #[test]
    fn recovers_laplacian_mixture() {
        let (ds, a) = mixture(4, 50_000, 1);
        let d = picard(&ds, &PicardParams::default()).unwrap();
        assert!(d.converged, "{:?}", d.warnings);
        assert!(amari_index(&d.w, &a).unwrap() < 0.05);
        assert_monotone(&d);
    }

    #[test]
    fn exit_is_stationary() {
        let (ds, _) = mixture(3, 20_000, 2);
        let params = PicardParams { tol: 1e-8, ..Default::default() };
        let d = picard(&ds, &params).unwrap();
        assert!(d.converged, "{:?}", d.warnings);
        let g = relative_gradient(&d.w, &ds, &DensityModel::Logcosh).unwrap();
        assert!(g.amax() < 1e-8 * 1.01, "{}", g.amax());
    }

    #[test]
    fn orthogonal_variant_stays_orthogonal() {
        let (ds, a) = mixture(4, 50_000, 3);
        let d = picard_o(&ds, &PicardParams::default()).unwrap();
        assert!(d.converged, "{:?}", d.warnings);
        assert!(d.diagnostics.orthogonality_residual_max.unwrap() < 1e-6);
        let cov = linalg::covariance(&ds.centered());
        assert!(linalg::whiteness_residual(&d.w, &cov) < 1e-6);
        assert!(amari_index(&d.w, &a).unwrap() < 0.05);
        assert_monotone(&d);
    }

    #[test]
    fn extended_recovers_mixed_kurtosis() {
        let spec = SynthSpec::new(4, 50_000, SourceKind::Laplacian, 4)
            .with_kinds(vec![SourceKind::Laplacian, SourceKind::Uniform, SourceKind::Laplacian, SourceKind::Uniform])
            .with_mixing(Mixing::RandomGeneral);
        let (ds, truth) = synth_dataset(&spec).unwrap();
        for orthogonal in [false, true] {
            let p = PicardParams { extended: true, orthogonal, ..Default::default() };
            let d = picard(&ds, &p).unwrap();
            assert!(amari_index(&d.w, &truth.mixing).unwrap() < 0.05, "orthogonal = {orthogonal}");
            assert_monotone(&d);
        }
    }

    #[test]
    fn max_iter_reports_non_convergence() {
        let (ds, _) = mixture(3, 5000, 5);
        let d = picard(&ds, &PicardParams { max_iter: 2, tol: 1e-12, ..Default::default() }).unwrap();
        assert!(!d.converged);
        assert_eq!(d.iterations_used, 2);
        assert!(!d.warnings.is_empty());
    }

    #[test]
    fn random_start_is_seeded() {
        let (ds, _) = mixture(3, 5000, 6);
        let p = PicardParams { seed: Some(3), ..Default::default() };
        assert_eq!(picard(&ds, &p).unwrap().w, picard(&ds, &p).unwrap().w);
    }

    #[test]
    fn invalid_params_rejected() {
        let (ds, _) = mixture(2, 100, 7);
        assert!(picard(&ds, &PicardParams { m: 0, ..Default::default() }).is_err());
        assert!(picard(&ds, &PicardParams { tol: -1.0, ..Default::default() }).is_err());
    }
}
