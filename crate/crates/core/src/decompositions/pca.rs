use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use super::Decomposition;
use crate::error::{Error, Result};
use crate::linalg;
use crate::signals::Dataset;

/// Symmetric sphering matrix `C^{-1/2}` of the data covariance.
pub fn sphere(ds: &Dataset) -> Result<DMatrix<f64>> {
    linalg::inverse_sqrt_spd(&linalg::covariance(&ds.centered()))
}

#[derive(Serialize)]
struct PcaParams {
    k: Option<usize>,
}

/// Principal components: rows of `W` are covariance eigenvectors by descending
/// eigenvalue, keeping the first `k` (all when `None`).
pub fn pca(ds: &Dataset, k: Option<usize>) -> Result<Decomposition> {
    let started = Instant::now();
    let n = ds.n_channels();
    let k_used = k.unwrap_or(n);
    if k_used == 0 || k_used > n {
        return Err(Error::Validation(format!(
            "PCA component count must be in 1..={n}, got {k_used}"
        )));
    }
    let cov = linalg::covariance(&ds.centered());
    let (values, vectors) = linalg::sorted_eigen(&cov);
    let largest = values[0];
    for (index, &eigenvalue) in values.iter().enumerate().take(k_used) {
        if !(eigenvalue > largest * linalg::RANK_TOLERANCE) {
            return Err(Error::RankDeficient { index, eigenvalue });
        }
    }
    let w = vectors.columns(0, k_used).transpose();
    let mut dec = Decomposition::from_unmixing(w, "pca", &PcaParams { k })?;
    dec.canonicalize(&cov)?;
    dec.wall_time_sec = started.elapsed().as_secs_f64();
    Ok(dec)
}
