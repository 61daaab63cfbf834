//! Mutual information reduction and remnant pairwise mutual information.
//!
//! For `y = W x` the reduction in total mutual information is
//!
//! `MIR = log₂|det W| + Σ h(x_i) - Σ h(y_i)`,
//!
//! which needs only one-dimensional entropy estimates. Channel entropies depend on
//! the data alone, so [`ChannelEntropies`] computes them once per dataset and every
//! algorithm is scored against the same cached sum.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::infometrics::{marginal_entropy, pmi_matrix, Binning, HistogramModel, PmiMatrix};
use crate::linalg;
use crate::signals::Dataset;
use crate::stats::order_free_sum;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MirReport {
    pub dataset_id: String,
    pub algorithm_id: String,
    pub mir_bits_per_sample: f64,
    pub mir_kbits_per_sec: f64,
    /// log₂|det W|, or ½ log₂ det(W Wᵀ) for a non-square W.
    pub log_det_w: f64,
    pub sum_h_x: f64,
    pub sum_h_y: f64,
    pub bins: usize,
    pub strategy: crate::infometrics::BinningStrategy,
    /// False when W had fewer rows than channels.
    pub square: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RemnantPmi {
    pub channel_mean_pmi: f64,
    pub component_mean_pmi: f64,
    pub percent: f64,
}

/// Differential entropy of every row, each computed independently of the others.
pub(crate) fn row_entropies(data: &DMatrix<f64>, binning: Binning, what: &str) -> Result<Vec<f64>> {
    (0..data.nrows())
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = data.row(i).iter().copied().collect();
            let hist = crate::infometrics::build_histogram(&row, binning.bins, binning.strategy)
                .map_err(|e| e.context(format!("{what} {i}")))?;
            Ok(entropy_of(&hist))
        })
        .collect()
}

fn entropy_of(hist: &HistogramModel) -> f64 {
    marginal_entropy(hist).h
}

/// Per-channel entropies of the mean-removed data of one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEntropies {
    centered: DMatrix<f64>,
    h: Vec<f64>,
    sum: f64,
    binning: Binning,
    dataset_id: String,
    srate: f64,
}

impl ChannelEntropies {
    pub fn new(ds: &Dataset, binning: Binning) -> Result<Self> {
        let centered = ds.centered();
        let h = row_entropies(&centered, binning, "channel")?;
        let sum = order_free_sum(&h);
        Ok(ChannelEntropies {
            centered,
            h,
            sum,
            binning,
            dataset_id: ds.id().to_string(),
            srate: ds.srate(),
        })
    }

    pub fn entropies(&self) -> &[f64] {
        &self.h
    }

    pub fn sum(&self) -> f64 {
        self.sum
    }

    pub fn binning(&self) -> Binning {
        self.binning
    }

    pub fn centered(&self) -> &DMatrix<f64> {
        &self.centered
    }

    /// Scores unmixing matrix `w` against the cached channel entropies.
    pub fn mir(&self, w: &DMatrix<f64>, algorithm_id: &str) -> Result<MirReport> {
        let n = self.centered.nrows();
        if w.ncols() != n || w.nrows() > n || w.nrows() == 0 {
            return Err(Error::shape(
                format!("k x {n} unmixing matrix with 1 <= k <= {n}"),
                format!("{}x{}", w.nrows(), w.ncols()),
            ));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("unmixing matrix has non-finite entries".into()));
        }
        let square = w.is_square();
        let log_det_w = if square {
            linalg::log2_abs_det(w)?
        } else {
            0.5 * linalg::log2_abs_det(&(w * w.transpose()))?
        };
        let y = linalg::apply_unmixing(w, &self.centered);
        let h_y = row_entropies(&y, self.binning, "component")?;
        let sum_h_y = order_free_sum(&h_y);
        let mir = log_det_w + self.sum - sum_h_y;
        Ok(MirReport {
            dataset_id: self.dataset_id.clone(),
            algorithm_id: algorithm_id.to_string(),
            mir_bits_per_sample: mir,
            mir_kbits_per_sec: mir * self.srate / 1000.0,
            log_det_w,
            sum_h_x: self.sum,
            sum_h_y,
            bins: self.binning.bins,
            strategy: self.binning.strategy,
            square,
        })
    }
}

/// MIR of unmixing matrix `w` on `ds` (channel means removed first).
pub fn mir(ds: &Dataset, w: &DMatrix<f64>, binning: Binning) -> Result<MirReport> {
    ChannelEntropies::new(ds, binning)?.mir(w, "")
}

/// Remnant PMI given an already computed channel PMI matrix.
pub fn remnant_pmi_from(
    channel: &PmiMatrix,
    centered: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<RemnantPmi> {
    if w.ncols() != centered.nrows() {
        return Err(Error::shape(
            format!("unmixing matrix with {} columns", centered.nrows()),
            format!("{}x{}", w.nrows(), w.ncols()),
        ));
    }
    let y = linalg::apply_unmixing(w, centered);
    let component = pmi_matrix(&y, channel.binning())?;
    let (c, k) = (channel.mean(), component.mean());
    if !(c > 0.0) {
        return Err(Error::Numerical(
            "channel PMI is zero; remnant percentage undefined".into(),
        ));
    }
    Ok(RemnantPmi {
        channel_mean_pmi: c,
        component_mean_pmi: k,
        percent: 100.0 * k / c,
    })
}

/// Mean component PMI as a percentage of mean channel PMI.
pub fn remnant_pmi(ds: &Dataset, w: &DMatrix<f64>, binning: Binning) -> Result<RemnantPmi> {
    let centered = ds.centered();
    let channel = pmi_matrix(&centered, binning)?;
    remnant_pmi_from(&channel, &centered, w)
}
