//! Dense linear-algebra helpers on top of nalgebra.
//!
//! Multichannel data is held as an `n x N` [`DMatrix`]: one row per channel,
//! one column per time sample.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a covariance is treated as rank-deficient.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Subtracts each row's mean; returns the centered matrix and the means.
pub fn center_rows(x: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n_samples = x.ncols() as f64;
    let means: Vec<f64> = x.row_iter().map(|r| r.sum() / n_samples).collect();
    let mut centered = x.clone();
    for (i, m) in means.iter().enumerate() {
        centered.row_mut(i).add_scalar_mut(-m);
    }
    (centered, means)
}

/// Covariance `X Xᵀ / N` of already-centered rows.
pub fn covariance(centered: &DMatrix<f64>) -> DMatrix<f64> {
    let n_samples = centered.ncols() as f64;
    let mut c = centered * centered.transpose() / n_samples;
    symmetrize(&mut c);
    c
}

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
///
/// Eigenvector signs are fixed so that the largest-magnitude entry of each is positive.
pub fn sorted_eigen(sym: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sym.clone());
    let n = sym.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &k) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(k);
        let pivot = col.iter().copied().fold(0.0f64, |acc, v| {
            if v.abs() > acc.abs() {
                v
            } else {
                acc
            }
        });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        vectors.set_column(dst, &(col * sign));
    }
    (values, vectors)
}

/// Inverse principal square root `C^{-1/2}` of a symmetric positive-definite matrix.
pub fn inverse_sqrt_spd(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (values, vectors) = sorted_eigen(c);
    let largest = values.first().copied().unwrap_or(0.0);
    for (index, &eigenvalue) in values.iter().enumerate() {
        if !(eigenvalue > largest * RANK_TOLERANCE) || !eigenvalue.is_finite() {
            return Err(Error::RankDeficient { index, eigenvalue });
        }
    }
    let scale = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        values.len(),
        values.iter().map(|v| 1.0 / v.sqrt()),
    ));
    let mut s = &vectors * scale * vectors.transpose();
    symmetrize(&mut s);
    Ok(s)
}

/// `y = W x` with every output entry accumulated in the same fixed order.
///
/// Each row of the result depends only on the matching row of `W`, bit for bit, so
/// permuting the rows of `W` permutes the rows of the output exactly.
pub fn apply_unmixing(w: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(w.ncols(), x.nrows(), "unmixing matrix does not match data");
    let (k, n) = (w.nrows(), w.ncols());
    let mut y = DMatrix::zeros(k, x.ncols());
    let w_rows: Vec<Vec<f64>> = (0..k).map(|i| w.row(i).iter().copied().collect()).collect();
    for t in 0..x.ncols() {
        let xcol = x.column(t);
        for (i, wr) in w_rows.iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..n {
                acc += wr[j] * xcol[j];
            }
            y[(i, t)] = acc;
        }
    }
    y
}

/// log₂|det M| via LU decomposition.
///
/// Rows are put in a canonical order first, so any row permutation of `M` gives a
/// bit-identical result.
pub fn log2_abs_det(m: &DMatrix<f64>) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::shape(
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    let mut rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
    rows.sort_by(|a, b| {
        a.iter()
            .zip(b)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let canonical = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| rows[i][j]);
    let lu = canonical.lu();
    let u = lu.u();
    let mut acc = 0.0;
    for i in 0..u.nrows() {
        let d = u[(i, i)].abs();
        if d == 0.0 || !d.is_finite() {
            return Err(Error::Singular(format!("zero pivot at row {i}")));
        }
        acc += d.log2();
    }
    Ok(acc)
}

pub fn invert(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::shape(
            "square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Singular(format!("{}x{} matrix is not invertible", m.nrows(), m.ncols())))
}

/// 2-norm condition number from singular values.
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// max |W C Wᵀ - I|.
pub fn whiteness_residual(w: &DMatrix<f64>, cov: &DMatrix<f64>) -> f64 {
    let p = w * cov * w.transpose();
    max_abs_minus_identity(&p)
}

pub fn max_abs_minus_identity(p: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..p.nrows() {
        for j in 0..p.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((p[(i, j)] - target).abs());
        }
    }
    worst
}

/// Symmetric decorrelation `(W Wᵀ)^{-1/2} W`.
pub fn symmetric_decorrelation(w: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let s = inverse_sqrt_spd(&(w * w.transpose()))?;
    Ok(s * w)
}

/// Haar-distributed random orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inverse_sqrt_of_diagonal() {
        let c = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0]));
        let s = inverse_sqrt_spd(&c).unwrap();
        assert!((s[(0, 0)] - 0.5).abs() < 1e-14);
        assert!((s[(1, 1)] - 1.0).abs() < 1e-14);
        assert!(s[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn rank_deficiency_names_eigenvalue_index() {
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        match inverse_sqrt_spd(&c) {
            Err(Error::RankDeficient { index, .. }) => assert_eq!(index, 1),
            other => panic!("expected rank deficiency, got {other:?}"),
        }
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = random_orthogonal(6, &mut rng);
        assert!(max_abs_minus_identity(&(&q * q.transpose())) < 1e-12);
        assert!((log2_abs_det(&q).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn apply_unmixing_matches_product_and_permutes_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let w = DMatrix::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let x = DMatrix::from_fn(3, 50, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = apply_unmixing(&w, &x);
        assert!((&y - &w * &x).amax() < 1e-12);
        let mut wp = w.clone();
        wp.swap_rows(0, 2);
        let yp = apply_unmixing(&wp, &x);
        for t in 0..50 {
            assert_eq!(yp[(0, t)].to_bits(), y[(2, t)].to_bits());
            assert_eq!(yp[(2, t)].to_bits(), y[(0, t)].to_bits());
        }
    }

    #[test]
    fn log_det_of_singular_matrix_errors() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(log2_abs_det(&m), Err(Error::Singular(_))));
    }
}
