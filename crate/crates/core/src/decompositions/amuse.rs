use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Decomposition, Prepared};
use crate::error::{Error, Result};
use crate::linalg;
use crate::signals::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmuseParams {
    /// Lag in samples.
    pub lag: usize,
}

impl Default for AmuseParams {
    fn default() -> Self {
        AmuseParams { lag: 1 }
    }
}

/// AMUSE: sphere, then rotate onto the eigenvectors of the symmetrized lag-τ
/// covariance of the sphered data.
///
/// Sources are identifiable only when those eigenvalues are distinct. When the
/// smallest gap is below `4 / √N` (about the sampling noise of a lagged
/// correlation) the result is returned with `converged = false` and a warning.
pub fn amuse(ds: &Dataset, params: &AmuseParams) -> Result<Decomposition> {
    let started = Instant::now();
    let t = ds.n_samples();
    if params.lag == 0 || params.lag >= t {
        return Err(Error::Validation(format!(
            "AMUSE lag must be in 1..{t}, got {}",
            params.lag
        )));
    }
    let prep = Prepared::new(ds)?;
    let z = prep.sphered();
    let lag = params.lag;
    let head = z.columns(0, t - lag);
    let tail = z.columns(lag, t - lag);
    let mut c = head * tail.transpose() / (t - lag) as f64;
    c = (&c + c.transpose()) * 0.5;
    linalg::symmetrize(&mut c);
    let (values, vectors) = linalg::sorted_eigen(&c);
    let gap = values
        .windows(2)
        .map(|w| (w[0] - w[1]).abs())
        .fold(f64::INFINITY, f64::min);
    let threshold = 4.0 / (t as f64).sqrt();
    let mut dec = prep.finish(&vectors.transpose(), "amuse", params, started)?;
    dec.iterations_used = 1;
    if gap < threshold {
        dec.converged = false;
        dec.warnings.push(format!(
            "lag-{lag} eigenvalues are not separated (smallest gap {gap:.3e} < {threshold:.3e}); sources are not identifiable at this lag"
        ));
    }
    Ok(dec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use crate::decompositions::amari_index;
    use crate::signals::{synth_dataset, SourceKind, SynthSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn ar1_mixture(seed: u64) -> (Dataset, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = 50_000;
        let phis = [0.9, 0.3];
        let mut s = DMatrix::zeros(2, t);
        for (i, phi) in phis.iter().enumerate() {
            let mut prev = 0.0;
            for k in 0..t {
                prev = phi * prev + rng.sample::<f64, _>(StandardNormal);
                s[(i, k)] = prev;
            }
        }
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.6, -0.4, 1.2]);
        let ds = Dataset::with_default_labels("ar", &a * s, 100.0).unwrap();
        (ds, a)
    }

    #[test]
    fn separates_ar_sources() {
        let (ds, a) = ar1_mixture(1);
        let d = amuse(&ds, &AmuseParams::default()).unwrap();
        assert!(d.converged, "{:?}", d.warnings);
        assert!(amari_index(&d.w, &a).unwrap() < 0.05);
        let cov = linalg::covariance(&ds.centered());
        assert!(linalg::whiteness_residual(&d.w, &cov) < 1e-6);
    }

    #[test]
    fn iid_sources_warn() {
        let spec = SynthSpec::new(3, 20_000, SourceKind::Laplacian, 2);
        let (ds, _) = synth_dataset(&spec).unwrap();
        let d = amuse(&ds, &AmuseParams::default()).unwrap();
        assert!(!d.converged);
        assert!(d.warnings[0].contains("not identifiable"));
    }

    #[test]
    fn lag_validated() {
        let (ds, _) = ar1_mixture(3);
        assert!(amuse(&ds, &AmuseParams { lag: 0 }).is_err());
    }
}
