//! Evaluation workbench for linear blind source separation of multichannel recordings.
//!
//! Decompositions are scored by mutual information reduction, remnant pairwise
//! mutual information and the dipolarity of their scalp maps.

pub mod decompositions;
pub mod dipfit;
pub mod error;
pub mod harness;
pub mod infometrics;
pub mod linalg;
pub mod mir;
mod rows;
pub mod signals;
pub mod stats;

pub use decompositions::{amari_index, Algorithm, Decomposition, Diagnostics};
pub use dipfit::{dipolarity, fit_dipole, DipolarityReport, Dipole, DipoleFit, HeadModel, Montage};
pub use error::{Error, Result};
pub use infometrics::{pmi_matrix, Binning, BinningStrategy, PmiMatrix};
pub use mir::{mir, remnant_pmi, ChannelEntropies, MirReport, RemnantPmi};
pub use signals::{load_dataset, save_dataset, synth_dataset, Dataset, SynthSpec};
pub use harness::{run_benchmark, BenchConfig, BenchReport};
