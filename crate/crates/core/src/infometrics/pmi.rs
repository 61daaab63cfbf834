use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::histogram::{BinnedSignal, Binning, BinningStrategy};
use super::discrete_entropy;
use crate::error::{Error, Result};

/// Two-dimensional histogram over the per-signal edges of its two axes.
#[derive(Debug, Clone, PartialEq)]
pub struct JointHistogram {
    bins: usize,
    edges_x: Vec<f64>,
    edges_y: Vec<f64>,
    /// Row-major `bins x bins` counts, `counts[k * bins + l]`.
    counts: Vec<u64>,
    n_samples: usize,
}

impl JointHistogram {
    pub(crate) fn from_binned(x: &BinnedSignal, y: &BinnedSignal) -> Self {
        let bins = x.bins();
        debug_assert_eq!(bins, y.bins());
        let mut counts = vec![0u64; bins * bins];
        for (&k, &l) in x.indices.iter().zip(&y.indices) {
            counts[k as usize * bins + l as usize] += 1;
        }
        JointHistogram {
            bins,
            edges_x: x.edges.clone(),
            edges_y: y.edges.clone(),
            counts,
            n_samples: x.indices.len(),
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn edges_x(&self) -> &[f64] {
        &self.edges_x
    }

    pub fn edges_y(&self) -> &[f64] {
        &self.edges_y
    }

    pub fn count(&self, k: usize, l: usize) -> u64 {
        self.counts[k * self.bins + l]
    }

    pub fn marginal_x(&self) -> Vec<u64> {
        self.counts.chunks(self.bins).map(|row| row.iter().sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<u64> {
        let mut out = vec![0u64; self.bins];
        for row in self.counts.chunks(self.bins) {
            for (o, c) in out.iter_mut().zip(row) {
                *o += c;
            }
        }
        out
    }

    /// Discrete joint entropy `H_ij` in bits.
    pub fn discrete_entropy(&self) -> f64 {
        discrete_entropy(&self.counts, self.n_samples)
    }

    /// Riemann plug-in differential joint entropy `h_ij` in bits.
    pub fn differential_entropy(&self) -> f64 {
        let n = self.n_samples as f64;
        let wx: Vec<f64> = self.edges_x.windows(2).map(|w| (w[1] - w[0]).log2()).collect();
        let wy: Vec<f64> = self.edges_y.windows(2).map(|w| (w[1] - w[0]).log2()).collect();
        let mut area = 0.0;
        for (k, row) in self.counts.chunks(self.bins).enumerate() {
            for (l, &c) in row.iter().enumerate() {
                if c > 0 {
                    area += c as f64 / n * (wx[k] + wy[l]);
                }
            }
        }
        self.discrete_entropy() + area
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::shape(
            format!("{} samples", x.len()),
            format!("{} samples", y.len()),
        ));
    }
    Ok(())
}

pub fn joint_histogram(
    x: &[f64],
    y: &[f64],
    bins: usize,
    strategy: BinningStrategy,
) -> Result<JointHistogram> {
    check_pair(x, y)?;
    let bx = BinnedSignal::new(x.iter().copied(), bins, strategy)?;
    let by = BinnedSignal::new(y.iter().copied(), bins, strategy)?;
    Ok(JointHistogram::from_binned(&bx, &by))
}

/// Discrete joint entropy `H_ij` of two equal-length signals, in bits.
pub fn joint_entropy(x: &[f64], y: &[f64], bins: usize, strategy: BinningStrategy) -> Result<f64> {
    Ok(joint_histogram(x, y, bins, strategy)?.discrete_entropy())
}

fn pmi_binned(x: &BinnedSignal, y: &BinnedSignal) -> f64 {
    let n = x.indices.len();
    let joint = JointHistogram::from_binned(x, y);
    let hx = discrete_entropy(&x.counts(), n);
    let hy = discrete_entropy(&y.counts(), n);
    (hx + hy - joint.discrete_entropy()).max(0.0)
}

/// Mutual information `H_i + H_j - H_ij` in bits, clamped at zero.
pub fn pmi(x: &[f64], y: &[f64], bins: usize, strategy: BinningStrategy) -> Result<f64> {
    check_pair(x, y)?;
    let bx = BinnedSignal::new(x.iter().copied(), bins, strategy)?;
    let by = BinnedSignal::new(y.iter().copied(), bins, strategy)?;
    Ok(pmi_binned(&bx, &by))
}

/// Symmetric matrix of pairwise mutual information with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct PmiMatrix {
    matrix: DMatrix<f64>,
    binning: Binning,
}

#[derive(Serialize, Deserialize)]
struct PmiMatrixJson {
    bins: usize,
    strategy: BinningStrategy,
    matrix: Vec<Vec<f64>>,
}

impl PmiMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn binning(&self) -> Binning {
        self.binning
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    /// Mean over all `n²` entries, zero diagonal included.
    pub fn mean(&self) -> f64 {
        self.matrix.iter().sum::<f64>() / self.matrix.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        let rows = self
            .matrix
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        Ok(serde_json::to_string_pretty(&PmiMatrixJson {
            bins: self.binning.bins,
            strategy: self.binning.strategy,
            matrix: rows,
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let j: PmiMatrixJson = serde_json::from_str(s)?;
        let n = j.matrix.len();
        if j.matrix.iter().any(|r| r.len() != n) {
            return Err(Error::shape(format!("{n} x {n} matrix"), "ragged rows"));
        }
        Ok(PmiMatrix {
            matrix: DMatrix::from_fn(n, n, |i, k| j.matrix[i][k]),
            binning: Binning::new(j.bins, j.strategy),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::signals::write_matrix_csv(&self.matrix, path)
    }
}

/// PMI between every pair of rows of `data`.
///
/// Each row is binned once; unordered pairs are evaluated in parallel and each
/// entry is written exactly once, so the result does not depend on thread count.
pub fn pmi_matrix(data: &DMatrix<f64>, binning: Binning) -> Result<PmiMatrix> {
    let n = data.nrows();
    if n < 2 {
        return Err(Error::Validation(format!("PMI needs at least 2 rows, got {n}")));
    }
    let binned: Vec<BinnedSignal> = (0..n)
        .into_par_iter()
        .map(|i| {
            BinnedSignal::new(data.row(i).iter().copied(), binning.bins, binning.strategy)
                .map_err(|e| e.context(format!("row {i}")))
        })
        .collect::<Result<_>>()?;
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| pmi_binned(&binned[i], &binned[j]))
        .collect();
    let mut matrix = DMatrix::zeros(n, n);
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        matrix[(i, j)] = v;
        matrix[(j, i)] = v;
    }
    Ok(PmiMatrix { matrix, binning })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infometrics::{build_histogram, marginal_entropy};
    use crate::stats;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn gaussian_pair(rho: f64, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = (1.0 - rho * rho).sqrt();
        (0..n)
            .map(|_| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                (a, rho * a + c * b)
            })
            .unzip()
    }

    /// Mean + 3 std of the PMI of `x` against 100 random permutations of `y`.
    fn surrogate_threshold(x: &[f64], y: &[f64], bins: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = y.to_vec();
        let vals: Vec<f64> = (0..100)
            .map(|_| {
                y.shuffle(&mut rng);
                pmi(x, &y, bins, BinningStrategy::EqualWidth).unwrap()
            })
            .collect();
        stats::mean(&vals) + 3.0 * stats::std_dev(&vals)
    }

    #[test]
    fn identical_signals_give_marginal_entropy() {
        let (x, _) = gaussian_pair(0.0, 5000, 1);
        let h = marginal_entropy(&build_histogram(&x, 32, BinningStrategy::EqualWidth).unwrap());
        let hij = joint_entropy(&x, &x, 32, BinningStrategy::EqualWidth).unwrap();
        assert!((hij - h.h_discrete).abs() < 1e-12);
        let m = pmi(&x, &x, 32, BinningStrategy::EqualWidth).unwrap();
        assert!((m - h.h_discrete).abs() < 1e-12);
    }

    #[test]
    fn two_cells_give_one_bit() {
        let h = joint_entropy(&[0.0, 1.0], &[0.0, 1.0], 2, BinningStrategy::EqualWidth).unwrap();
        assert!((h - 1.0).abs() < 1e-15);
    }

    #[test]
    fn independent_uniforms_joint_entropy_is_additive() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..200_000).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..200_000).map(|_| rng.random()).collect();
        let hx = marginal_entropy(&build_histogram(&x, 10, BinningStrategy::EqualWidth).unwrap());
        let hy = marginal_entropy(&build_histogram(&y, 10, BinningStrategy::EqualWidth).unwrap());
        let hij = joint_entropy(&x, &y, 10, BinningStrategy::EqualWidth).unwrap();
        let eps = hx.h_discrete + hy.h_discrete - hij;
        assert!((0.0..=0.01).contains(&eps), "eps = {eps}");
    }

    #[test]
    fn correlated_gaussian_mutual_information() {
        for (rho, seed) in [(0.5, 11u64), (0.9, 12)] {
            let (x, y) = gaussian_pair(rho, 200_000, seed);
            let expected = -0.5 * (1.0 - rho * rho).log2();
            let m = pmi(&x, &y, 64, BinningStrategy::EqualWidth).unwrap();
            assert!((m - expected).abs() < 0.05, "rho {rho}: {m} vs {expected}");
        }
    }

    #[test]
    fn independent_pair_below_surrogate_threshold() {
        let (x, _) = gaussian_pair(0.0, 200_000, 13);
        let (y, _) = gaussian_pair(0.0, 200_000, 14);
        let m = pmi(&x, &y, 64, BinningStrategy::EqualWidth).unwrap();
        let t = surrogate_threshold(&x, &y, 64, 15);
        assert!(m < t, "{m} >= {t}");
    }

    #[test]
    fn bin_widths_cancel() {
        let (x, y) = gaussian_pair(0.7, 20_000, 16);
        for strategy in [BinningStrategy::EqualWidth, BinningStrategy::EqualOccupancy] {
            let hx = marginal_entropy(&build_histogram(&x, 40, strategy).unwrap());
            let hy = marginal_entropy(&build_histogram(&y, 40, strategy).unwrap());
            let joint = joint_histogram(&x, &y, 40, strategy).unwrap();
            let differential = hx.h + hy.h - joint.differential_entropy();
            let discrete = pmi(&x, &y, 40, strategy).unwrap();
            assert!((differential - discrete).abs() < 1e-9);
        }
    }

    #[test]
    fn joint_marginals_match_histograms() {
        let (x, y) = gaussian_pair(0.3, 3000, 17);
        let joint = joint_histogram(&x, &y, 16, BinningStrategy::EqualOccupancy).unwrap();
        let hx = build_histogram(&x, 16, BinningStrategy::EqualOccupancy).unwrap();
        let hy = build_histogram(&y, 16, BinningStrategy::EqualOccupancy).unwrap();
        assert_eq!(joint.marginal_x(), hx.counts());
        assert_eq!(joint.marginal_y(), hy.counts());
        assert_eq!(joint.edges_x(), hx.edges());
    }

    #[test]
    fn matrix_of_identical_rows() {
        let (x, _) = gaussian_pair(0.0, 4000, 18);
        let data = DMatrix::from_fn(2, x.len(), |_, c| x[c]);
        let m = pmi_matrix(&data, Binning::new(32, BinningStrategy::EqualWidth)).unwrap();
        let h = marginal_entropy(&build_histogram(&x, 32, BinningStrategy::EqualWidth).unwrap());
        assert_eq!(m.matrix()[(0, 0)], 0.0);
        assert!((m.matrix()[(0, 1)] - h.h_discrete).abs() < 1e-12);
        assert_eq!(m.matrix()[(0, 1)], m.matrix()[(1, 0)]);
    }

    #[test]
    fn matrix_of_independent_rows_below_surrogate_threshold() {
        let n = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let data = DMatrix::from_fn(n, 50_000, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m = pmi_matrix(&data, Binning::new(64, BinningStrategy::EqualWidth)).unwrap();
        for i in 0..n {
            for j in i + 1..n {
                let xi: Vec<f64> = data.row(i).iter().copied().collect();
                let xj: Vec<f64> = data.row(j).iter().copied().collect();
                let t = surrogate_threshold(&xi, &xj, 64, 20 + i as u64);
                assert!(m.matrix()[(i, j)] < t);
            }
        }
    }

    #[test]
    fn monotone_transforms_leave_occupancy_matrix_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = DMatrix::from_fn(3, 5000, |r, _| {
            let v: f64 = rng.sample(StandardNormal);
            v + 0.3 * r as f64
        });
        let mixed = DMatrix::from_fn(3, 5000, |r, c| data[(r, c)] + 0.5 * data[((r + 1) % 3, c)]);
        let warped = mixed.map(|v| v.powi(3) + v.exp());
        let b = Binning::new(32, BinningStrategy::EqualOccupancy);
        let m0 = pmi_matrix(&mixed, b).unwrap();
        let m1 = pmi_matrix(&warped, b).unwrap();
        assert!((m0.matrix() - m1.matrix()).abs().max() < 1e-9);
    }

    #[test]
    fn matrix_error_names_row() {
        let mut data = DMatrix::from_fn(3, 20, |r, c| (r * 20 + c) as f64);
        data.row_mut(2).fill(1.0);
        let err = pmi_matrix(&data, Binning::new(4, BinningStrategy::EqualOccupancy)).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let (x, y) = gaussian_pair(0.5, 1000, 22);
        let data = DMatrix::from_fn(2, x.len(), |r, c| if r == 0 { x[c] } else { y[c] });
        let m = pmi_matrix(&data, Binning::default()).unwrap();
        let back = PmiMatrix::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    proptest! {
        #[test]
        fn pmi_is_symmetric_and_nonnegative(
            pairs in proptest::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 40..200),
            bins in 2usize..12,
        ) {
            let (x, y): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let a = pmi(&x, &y, bins, BinningStrategy::EqualWidth).unwrap();
            let b = pmi(&y, &x, bins, BinningStrategy::EqualWidth).unwrap();
            prop_assert_eq!(a, b);
            prop_assert!(a >= 0.0);
        }
    }
}
