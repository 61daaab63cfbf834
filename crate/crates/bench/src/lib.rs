//! Benchmark fixtures.

use icabench_core::decompositions::{Algorithm, PicardParams};
use icabench_core::dipfit::{HeadModel, Montage};
use icabench_core::signals::{synth_dataset, Dataset, Mixing, SourceKind, SynthSpec};

/// Laplacian sources through a random general mixing matrix.
pub fn mixture(n_sources: usize, n_samples: usize, seed: u64) -> Dataset {
    let spec = SynthSpec::new(n_sources, n_samples, SourceKind::Laplacian, seed).with_mixing(Mixing::RandomGeneral);
    synth_dataset(&spec).expect("valid synthetic spec").0
}

/// Unmixing matrix fitted by Picard with default parameters.
pub fn fitted_unmixing(ds: &Dataset) -> nalgebra::DMatrix<f64> {
    Algorithm::Picard(PicardParams::default()).run(ds).expect("picard converges").w
}

/// The default four-shell head and 71-electrode montage.
pub fn head_and_montage() -> (HeadModel, Montage) {
    (HeadModel::default(), Montage::default())
}
