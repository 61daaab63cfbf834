//! Histogram entropy estimates and the pairwise mutual information (PMI) matrix.
//!
//! Every entropy here is in bits. The differential entropy of a signal is estimated
//! from its histogram by a Riemann sum,
//!
//! `h = -Σ_k (b_k / N) log₂(b_k / (N Δ_k)) = H + Σ_k (b_k / N) log₂ Δ_k`,
//!
//! where `H` is the discrete entropy of the bin probabilities. When the joint
//! histogram of two signals reuses each signal's own edges, the `Δ` terms cancel in
//! `h_i + h_j - h_ij`, so mutual information reduces to `H_i + H_j - H_ij` whatever
//! the bin widths.

mod histogram;
mod pmi;

pub use histogram::{build_histogram, Binning, BinningStrategy, HistogramModel, DEFAULT_BINS};
pub use pmi::{
    joint_entropy, joint_histogram, pmi, pmi_matrix, JointHistogram, PmiMatrix,
};


use serde::{Deserialize, Serialize};

/// Marginal entropy estimate of one signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    /// Riemann plug-in differential entropy (bits).
    pub h: f64,
    /// Discrete entropy of the bin probabilities (bits).
    pub h_discrete: f64,
    /// Asymptotic variance of `h_discrete`.
    pub variance: f64,
    pub bins: usize,
}

/// `-Σ (c/N) log₂(c/N)` over nonzero counts.
///
/// Counts are summed in sorted order, so the value is independent of cell order
/// (a transposed joint histogram gives a bit-identical entropy).
pub(crate) fn discrete_entropy<'a, I>(counts: I, n: usize) -> f64
where
    I: IntoIterator<Item = &'a u64>,
{
    let mut nonzero: Vec<u64> = counts.into_iter().copied().filter(|&c| c > 0).collect();
    nonzero.sort_unstable();
    let n = n as f64;
    let mut h = 0.0;
    for c in nonzero {
        let p = c as f64 / n;
        h -= p * p.log2();
    }
    h
}

pub fn marginal_entropy(hist: &HistogramModel) -> EntropyEstimate {
    let n = hist.n_samples();
    let h_discrete = discrete_entropy(hist.counts(), n);
    let width_term: f64 = hist
        .counts()
        .iter()
        .zip(hist.widths())
        .filter(|(&c, _)| c > 0)
        .map(|(&c, w)| c as f64 / n as f64 * w.log2())
        .sum();
    EntropyEstimate {
        h: h_discrete + width_term,
        h_discrete,
        variance: entropy_variance(hist),
        bins: hist.bins(),
    }
}

/// Plug-in asymptotic variance of the discrete entropy,
/// `(Σ p (log₂ p)² - H²) / N`, clamped at zero.
pub fn entropy_variance(hist: &HistogramModel) -> f64 {
    let n = hist.n_samples() as f64;
    let (mut h, mut second) = (0.0, 0.0);
    for &c in hist.counts() {
        if c > 0 {
            let p = c as f64 / n;
            let l = p.log2();
            h -= p * l;
            second += p * l * l;
        }
    }
    ((second - h * h) / n).max(0.0)
}
