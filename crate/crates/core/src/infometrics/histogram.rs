use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of histogram bins per signal.
pub const DEFAULT_BINS: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinningStrategy {
    /// `B` equal bins spanning `[min, max]`.
    #[default]
    EqualWidth,
    /// Edges at sample quantiles; each bin holds about `N / B` samples.
    EqualOccupancy,
}

impl std::fmt::Display for BinningStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BinningStrategy::EqualWidth => "equal-width",
            BinningStrategy::EqualOccupancy => "equal-occupancy",
        })
    }
}

impl std::str::FromStr for BinningStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal-width" => Ok(BinningStrategy::EqualWidth),
            "equal-occupancy" => Ok(BinningStrategy::EqualOccupancy),
            other => Err(Error::Validation(format!("unknown binning strategy {other:?}"))),
        }
    }
}

/// Bin count and edge strategy, recorded with every metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Binning {
    pub bins: usize,
    pub strategy: BinningStrategy,
}

impl Default for Binning {
    fn default() -> Self {
        Binning {
            bins: DEFAULT_BINS,
            strategy: BinningStrategy::EqualWidth,
        }
    }
}

impl Binning {
    pub fn new(bins: usize, strategy: BinningStrategy) -> Self {
        Binning { bins, strategy }
    }
}

/// A signal reduced to per-sample bin indices plus the edges that produced them.
///
/// Marginal and joint histograms are both counted from these indices, so the axis
/// marginals of a joint histogram equal the per-signal histograms exactly.
#[derive(Debug, Clone)]
pub(crate) struct BinnedSignal {
    pub edges: Vec<f64>,
    pub indices: Vec<u32>,
}

impl BinnedSignal {
    pub fn new<I>(x: I, bins: usize, strategy: BinningStrategy) -> Result<Self>
    where
        I: IntoIterator<Item = f64>,
    {
        let x: Vec<f64> = x.into_iter().collect();
        if bins < 2 {
            return Err(Error::Validation(format!("need at least 2 bins, got {bins}")));
        }
        if x.len() < bins {
            return Err(Error::Validation(format!(
                "{} samples is fewer than {bins} bins",
                x.len()
            )));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!("non-finite sample at index {i}")));
        }
        let edges = match strategy {
            BinningStrategy::EqualWidth => equal_width_edges(&x, bins),
            BinningStrategy::EqualOccupancy => equal_occupancy_edges(&x, bins)?,
        };
        let indices = match strategy {
            BinningStrategy::EqualWidth => {
                let lo = edges[0];
                let width = (edges[bins] - lo) / bins as f64;
                x.iter()
                    .map(|&v| (((v - lo) / width) as usize).min(bins - 1) as u32)
                    .collect()
            }
            BinningStrategy::EqualOccupancy => {
                let interior = &edges[1..bins];
                x.iter()
                    .map(|&v| interior.partition_point(|&e| e <= v) as u32)
                    .collect()
            }
        };
        Ok(BinnedSignal { edges, indices })
    }

    pub fn bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.bins()];
        for &k in &self.indices {
            counts[k as usize] += 1;
        }
        counts
    }
}

fn equal_width_edges(x: &[f64], bins: usize) -> Vec<f64> {
    let (mut lo, mut hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if hi <= lo {
        // constant signal: unit span centred on the value, all mass in one bin
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|k| lo + k as f64 * width).collect();
    edges.push(hi);
    edges
}

fn equal_occupancy_edges(x: &[f64], bins: usize) -> Result<Vec<f64>> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if sorted[0] == sorted[n - 1] {
        return Err(Error::DegenerateHistogram(
            "constant signal has no quantile edges".into(),
        ));
    }
    let mut edges = Vec::with_capacity(bins + 1);
    edges.push(sorted[0]);
    for k in 1..bins {
        let prev = edges[k - 1];
        let mut edge = sorted[k * n / bins];
        if edge <= prev {
            // tie: widen the previous bin up to the next distinct value
            let next = sorted.partition_point(|&v| v <= prev);
            if next == n {
                return Err(Error::DegenerateHistogram(format!(
                    "fewer than {bins} distinct values"
                )));
            }
            edge = sorted[next];
        }
        edges.push(edge);
    }
    let top = sorted[n - 1];
    if top > edges[bins - 1] {
        edges.push(top);
    } else {
        // the maximum sits on the last interior edge; give the last bin the previous width
        let w = edges[bins - 1] - edges[bins - 2];
        edges.push(edges[bins - 1] + w);
    }
    Ok(edges)
}

/// Histogram of one signal: the `b(k)`, edges and widths of the Riemann entropy estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramModel {
    edges: Vec<f64>,
    counts: Vec<u64>,
    n_samples: usize,
    strategy: BinningStrategy,
}

impl HistogramModel {
    pub(crate) fn from_binned(binned: &BinnedSignal, strategy: BinningStrategy) -> Self {
        HistogramModel {
            edges: binned.edges.clone(),
            counts: binned.counts(),
            n_samples: binned.indices.len(),
            strategy,
        }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn strategy(&self) -> BinningStrategy {
        self.strategy
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Density estimate `b(k) / (N Δ_k)` per bin.
    pub fn density(&self) -> Vec<f64> {
        let n = self.n_samples as f64;
        self.counts
            .iter()
            .zip(self.widths())
            .map(|(&c, w)| c as f64 / (n * w))
            .collect()
    }

    /// Riemann sum `Σ p̂_k Δ_k`, which is one by construction.
    pub fn riemann_integral(&self) -> f64 {
        self.density()
            .iter()
            .zip(self.widths())
            .map(|(p, w)| p * w)
            .sum()
    }
}

pub fn build_histogram(
    x: &[f64],
    bins: usize,
    strategy: BinningStrategy,
) -> Result<HistogramModel> {
    let binned = BinnedSignal::new(x.iter().copied(), bins, strategy)?;
    Ok(HistogramModel::from_binned(&binned, strategy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_counts_within_binomial_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let h = build_histogram(&x, 10, BinningStrategy::EqualWidth).unwrap();
        let sigma = (100.0f64 * 0.9).sqrt();
        for &c in h.counts() {
            assert!((c as f64 - 100.0).abs() <= 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn equal_occupancy_counts_are_floor_or_ceil() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [8usize, 9, 10, 11, 1001] {
            let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let h = build_histogram(&x, 4, BinningStrategy::EqualOccupancy).unwrap();
            for &c in h.counts() {
                assert!(c as usize == n / 4 || c as usize == n.div_ceil(4), "n={n} c={c}");
            }
        }
    }

    #[test]
    fn equal_occupancy_with_as_many_samples_as_bins() {
        let x = [0.3, 0.1, 0.4, 0.2];
        let h = build_histogram(&x, 4, BinningStrategy::EqualOccupancy).unwrap();
        assert_eq!(h.counts(), &[1, 1, 1, 1]);
        assert!(h.widths().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn ties_widen_bins() {
        let x = [0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 2.0, 3.0];
        let h = build_histogram(&x, 4, BinningStrategy::EqualOccupancy).unwrap();
        assert_eq!(h.counts().iter().sum::<u64>(), 8);
        assert_eq!(h.counts()[0], 5);
        assert!(h.widths().iter().all(|&w| w > 0.0));
    }

    #[test]
    fn too_few_distinct_values_is_degenerate() {
        let x = [0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let err = build_histogram(&x, 4, BinningStrategy::EqualOccupancy).unwrap_err();
        assert!(matches!(err, Error::DegenerateHistogram(_)));
    }

    #[test]
    fn constant_signal() {
        let x = vec![2.5; 100];
        let h = build_histogram(&x, 8, BinningStrategy::EqualWidth).unwrap();
        assert_eq!(h.counts().iter().filter(|&&c| c > 0).count(), 1);
        let err = build_histogram(&x, 8, BinningStrategy::EqualOccupancy).unwrap_err();
        assert!(matches!(err, Error::DegenerateHistogram(_)));
    }

    #[test]
    fn extremes_land_in_outer_bins() {
        let x = [-3.0, -1.0, 0.0, 0.5, 2.0, 7.0];
        for strategy in [BinningStrategy::EqualWidth, BinningStrategy::EqualOccupancy] {
            let b = BinnedSignal::new(x.iter().copied(), 3, strategy).unwrap();
            assert_eq!(b.indices[0], 0);
            assert_eq!(b.indices[5], 2);
        }
    }

    #[test]
    fn invalid_inputs() {
        assert!(build_histogram(&[1.0, 2.0], 4, BinningStrategy::EqualWidth).is_err());
        assert!(build_histogram(&[1.0, 2.0, 3.0], 1, BinningStrategy::EqualWidth).is_err());
        assert!(build_histogram(&[1.0, f64::NAN, 3.0], 2, BinningStrategy::EqualWidth).is_err());
    }

    #[test]
    fn strategy_parses_and_displays() {
        for s in [BinningStrategy::EqualWidth, BinningStrategy::EqualOccupancy] {
            assert_eq!(s.to_string().parse::<BinningStrategy>().unwrap(), s);
        }
        assert!("quantile".parse::<BinningStrategy>().is_err());
    }

    proptest! {
        #[test]
        fn counts_sum_to_n_and_density_integrates_to_one(
            x in proptest::collection::vec(-1e3f64..1e3, 16..400),
            bins in 2usize..16,
            occupancy in any::<bool>(),
        ) {
            let strategy = if occupancy { BinningStrategy::EqualOccupancy } else { BinningStrategy::EqualWidth };
            if let Ok(h) = build_histogram(&x, bins, strategy) {
                prop_assert_eq!(h.counts().iter().sum::<u64>() as usize, x.len());
                prop_assert!(h.widths().iter().all(|&w| w > 0.0));
                prop_assert!((h.riemann_integral() - 1.0).abs() < 1e-12);
            } else {
                prop_assert!(occupancy);
            }
        }
    }
}
