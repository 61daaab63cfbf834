use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Decomposition, Prepared};
use crate::error::{Error, Result};
use crate::signals::Dataset;
use crate::stats;

/// Weight magnitude treated as divergence.
const MAX_WEIGHT: f64 = 1e8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InfomaxParams {
    /// Initial learning rate; `None` uses `1e-3 / ln(n)`.
    pub learning_rate: Option<f64>,
    /// Samples per block; `None` uses `ceil(sqrt(N / 3))`.
    pub block_size: Option<usize>,
    /// Learning-rate factor applied when successive weight changes turn by more
    /// than `anneal_degrees`.
    pub anneal_step: f64,
    pub anneal_degrees: f64,
    /// Stop once the squared weight change over one pass falls below this.
    pub weight_change_stop: f64,
    pub max_steps: usize,
    /// Learning-rate factor applied when a run diverges and is restarted.
    pub restart_factor: f64,
    pub max_restarts: usize,
    /// Learning rates below this end the run as converged.
    pub min_learning_rate: f64,
    /// Seed of the per-pass sample shuffling.
    pub seed: u64,
}

impl Default for InfomaxParams {
    fn default() -> Self {
        InfomaxParams {
            learning_rate: None,
            block_size: None,
            anneal_step: 0.9,
            anneal_degrees: 60.0,
            weight_change_stop: 1e-8,
            max_steps: 100_000,
            restart_factor: 0.9,
            max_restarts: 10,
            min_learning_rate: 1e-9,
            seed: 0,
        }
    }
}

impl InfomaxParams {
    fn validate(&self) -> Result<()> {
        let positive = [
            ("anneal_step", self.anneal_step),
            ("anneal_degrees", self.anneal_degrees),
            ("weight_change_stop", self.weight_change_stop),
            ("restart_factor", self.restart_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Validation(format!("infomax {name} must be positive, got {v}")));
            }
        }
        if let Some(l) = self.learning_rate {
            if !(l > 0.0) {
                return Err(Error::Validation(format!("infomax learning rate must be positive, got {l}")));
            }
        }
        if self.max_steps == 0 || self.block_size == Some(0) {
            return Err(Error::Validation("infomax max_steps and block_size must be >= 1".into()));
        }
        Ok(())
    }
}

enum PassOutcome {
    Finished { steps: usize, converged: bool },
    Diverged,
}

/// Infomax ICA by blockwise natural-gradient ascent on sphered data.
///
/// Plain mode uses the logistic nonlinearity, `ΔW = η (I + (1 - 2 g(u)) uᵀ) W` per
/// block. Extended mode switches each component between super- and sub-Gaussian
/// scores by the sign of its excess kurtosis,
/// `ΔW = η (I - K tanh(u) uᵀ - u uᵀ) W`, re-estimated after every pass.
pub fn infomax(ds: &Dataset, params: &InfomaxParams, extended: bool) -> Result<Decomposition> {
    params.validate()?;
    let started = Instant::now();
    let id = if extended { "extended-infomax" } else { "infomax" };
    let prep = Prepared::new(ds)?;
    let z = prep.sphered();
    let (n, t) = z.shape();
    let block = params
        .block_size
        .unwrap_or_else(|| ((t as f64 / 3.0).sqrt().ceil()) as usize)
        .min(t);
    let mut lrate = params
        .learning_rate
        .unwrap_or_else(|| 1e-3 / (n as f64).ln().max(f64::MIN_POSITIVE));
    let mut warnings = Vec::new();

    for restart in 0..=params.max_restarts {
        let mut w = DMatrix::<f64>::identity(n, n);
        match run_passes(&z, &mut w, &mut lrate, block, params, extended) {
            PassOutcome::Finished { steps, converged } => {
                if !converged {
                    warnings.push(format!("reached max_steps = {} before the weight-change stop", params.max_steps));
                }
                let mut dec = prep.finish(&w, id, params, started)?;
                dec.iterations_used = steps;
                dec.converged = converged;
                dec.warnings = warnings;
                return Ok(dec);
            }
            PassOutcome::Diverged => {
                lrate *= params.restart_factor;
                warnings.push(format!(
                    "weights diverged; restart {} with learning rate {lrate:e}",
                    restart + 1
                ));
            }
        }
    }
    Err(Error::Numerical(format!(
        "{id} diverged after {} learning-rate restarts",
        params.max_restarts
    )))
}

fn run_passes(
    z: &DMatrix<f64>,
    w: &mut DMatrix<f64>,
    lrate: &mut f64,
    block: usize,
    params: &InfomaxParams,
    extended: bool,
) -> PassOutcome {
    let (n, t) = z.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut perm: Vec<usize> = (0..t).collect();
    let mut signs = vec![1.0; n];
    let mut old_w = w.clone();
    let mut old_delta: Option<(DMatrix<f64>, f64)> = None;
    let mut xb = DMatrix::zeros(n, block);

    if extended {
        signs = kurtosis_signs(&(&*w * z));
    }
    for step in 1..=params.max_steps {
        perm.shuffle(&mut rng);
        for chunk in perm.chunks(block) {
            let b = chunk.len();
            if xb.ncols() != b {
                xb = DMatrix::zeros(n, b);
            }
            for (c, &s) in chunk.iter().enumerate() {
                xb.set_column(c, &z.column(s));
            }
            let u = &*w * &xb;
            let mut grad = DMatrix::<f64>::identity(n, n) * b as f64;
            if extended {
                let mut tu = u.map(f64::tanh);
                for (i, &k) in signs.iter().enumerate() {
                    tu.row_mut(i).scale_mut(k);
                }
                grad -= &tu * u.transpose();
                grad -= &u * u.transpose();
            } else {
                let y = u.map(|v| 1.0 - 2.0 / (1.0 + (-v).exp()));
                grad += &y * u.transpose();
            }
            *w += (grad * &*w) * *lrate;
        }
        if w.iter().any(|v| !v.is_finite() || v.abs() > MAX_WEIGHT) {
            return PassOutcome::Diverged;
        }
        if extended {
            signs = kurtosis_signs(&(&*w * z));
        }
        let delta = &*w - &old_w;
        let change = delta.norm_squared();
        // the reference direction only moves when the rate is annealed
        match &old_delta {
            Some((prev, prev_change)) if step > 2 => {
                let cos = (delta.dot(prev) / (change * prev_change).sqrt()).clamp(-1.0, 1.0);
                if cos.acos().to_degrees() > params.anneal_degrees {
                    *lrate *= params.anneal_step;
                    old_delta = Some((delta, change));
                }
            }
            None => old_delta = Some((delta, change)),
            _ => {}
        }
        old_w.copy_from(w);
        if step > 2 && change < params.weight_change_stop {
            return PassOutcome::Finished { steps: step, converged: true };
        }
        if *lrate < params.min_learning_rate {
            return PassOutcome::Finished { steps: step, converged: true };
        }
    }
    PassOutcome::Finished {
        steps: params.max_steps,
        converged: false,
    }
}

/// `+1` for non-negative excess kurtosis, `-1` otherwise.
fn kurtosis_signs(u: &DMatrix<f64>) -> Vec<f64> {
    u.row_iter()
        .map(|r| {
            if stats::excess_kurtosis(r.iter().copied()) >= 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompositions::amari_index;
    use crate::signals::{synth_dataset, Mixing, SourceKind, SynthSpec};

    #[test]
    fn recovers_two_laplacian_sources() {
        let spec = SynthSpec::new(2, 100_000, SourceKind::Laplacian, 1).with_mixing(Mixing::RandomGeneral);
        let (ds, truth) = synth_dataset(&spec).unwrap();
        let d = infomax(&ds, &InfomaxParams::default(), false).unwrap();
        let amari = amari_index(&d.w, &truth.mixing).unwrap();
        assert!(amari < 0.05, "amari {amari}");
        assert!(d.converged);
    }

    #[test]
    fn unmixed_input_is_a_fixed_point() {
        let spec = SynthSpec::new(3, 50_000, SourceKind::Laplacian, 2)
            .with_mixing(Mixing::Explicit { matrix: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]] });
        let (ds, _) = synth_dataset(&spec).unwrap();
        let d = infomax(&ds, &InfomaxParams::default(), false).unwrap();
        let amari = amari_index(&d.w, &DMatrix::identity(3, 3)).unwrap();
        assert!(amari < 0.1, "amari {amari}");
    }

    #[test]
    fn extended_handles_sub_gaussian_source() {
        let spec = SynthSpec::new(2, 100_000, SourceKind::Laplacian, 3)
            .with_kinds(vec![SourceKind::Laplacian, SourceKind::Uniform])
            .with_mixing(Mixing::RandomGeneral);
        let (ds, truth) = synth_dataset(&spec).unwrap();
        let ext = infomax(&ds, &InfomaxParams::default(), true).unwrap();
        assert!(amari_index(&ext.w, &truth.mixing).unwrap() < 0.05);
    }

    #[test]
    fn divergence_triggers_restarts_then_error() {
        let spec = SynthSpec::new(2, 2000, SourceKind::Laplacian, 4);
        let (ds, _) = synth_dataset(&spec).unwrap();
        let params = InfomaxParams {
            learning_rate: Some(1e3),
            max_restarts: 2,
            restart_factor: 0.5,
            ..Default::default()
        };
        let err = infomax(&ds, &params, false).unwrap_err();
        assert!(matches!(err, Error::Numerical(_)), "{err}");
    }

    #[test]
    fn invalid_params_rejected() {
        let spec = SynthSpec::new(2, 100, SourceKind::Laplacian, 4);
        let (ds, _) = synth_dataset(&spec).unwrap();
        let bad = InfomaxParams { weight_change_stop: 0.0, ..Default::default() };
        assert!(infomax(&ds, &bad, false).is_err());
    }

    #[test]
    fn deterministic_for_a_seed() {
        let spec = SynthSpec::new(3, 5000, SourceKind::Laplacian, 5).with_mixing(Mixing::RandomGeneral);
        let (ds, _) = synth_dataset(&spec).unwrap();
        let p = InfomaxParams { seed: 9, ..Default::default() };
        assert_eq!(infomax(&ds, &p, false).unwrap().w, infomax(&ds, &p, false).unwrap().w);
    }
}
