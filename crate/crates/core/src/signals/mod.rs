//! Multichannel time series, synthetic ground-truth mixtures and file I/O.

mod io;
mod synth;

pub use io::{
    header_path, load_dataset, read_matrix_binary, read_matrix_csv, save_dataset,
    write_matrix_binary, write_matrix_csv, BinaryHeader, DataFormat,
};
pub(crate) use io::write_atomic;
pub use synth::{synth_dataset, GroundTruth, Mixing, SourceKind, SynthSpec};

use std::collections::HashSet;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg;

/// A channels x samples recording with its sampling rate and channel labels.
///
/// Immutable once constructed; all invariants are checked by [`Dataset::new`].
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    id: String,
    data: DMatrix<f64>,
    srate: f64,
    labels: Vec<String>,
}

impl Dataset {
    pub fn new(
        id: impl Into<String>,
        data: DMatrix<f64>,
        srate: f64,
        labels: Vec<String>,
    ) -> Result<Self> {
        let (n, n_samples) = data.shape();
        if n < 2 {
            return Err(Error::Validation(format!(
                "dataset needs at least 2 channels, got {n}"
            )));
        }
        if n_samples < n {
            return Err(Error::Validation(format!(
                "dataset needs at least as many samples as channels ({n}), got {n_samples}"
            )));
        }
        if !(srate > 0.0 && srate.is_finite()) {
            return Err(Error::Validation(format!(
                "sampling rate must be positive, got {srate}"
            )));
        }
        if labels.len() != n {
            return Err(Error::shape(
                format!("{n} channel labels"),
                format!("{} labels", labels.len()),
            ));
        }
        let mut seen = HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::Validation(format!("duplicate channel label {l:?}")));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            // column-major storage
            let (row, col) = (pos % n, pos / n);
            return Err(Error::Validation(format!(
                "non-finite value at channel {row}, sample {col}"
            )));
        }
        Ok(Dataset {
            id: id.into(),
            data,
            srate,
            labels,
        })
    }

    /// Builds a dataset with labels `C01`, `C02`, ...
    pub fn with_default_labels(
        id: impl Into<String>,
        data: DMatrix<f64>,
        srate: f64,
    ) -> Result<Self> {
        let labels = default_labels("C", data.nrows());
        Self::new(id, data, srate, labels)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn srate(&self) -> f64 {
        self.srate
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    /// Data with each channel's mean removed.
    pub fn centered(&self) -> DMatrix<f64> {
        linalg::center_rows(&self.data).0
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

pub(crate) fn default_labels(prefix: &str, n: usize) -> Vec<String> {
    let width = n.to_string().len().max(2);
    (1..=n).map(|i| format!("{prefix}{i:0width$}")).collect()
}
