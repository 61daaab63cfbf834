//! Seeded synthetic mixtures with known mixing matrices.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{default_labels, Dataset};
use crate::dipfit::{Dipole, ForwardModel, HeadModel, Montage};
use crate::error::{Error, Result};
use crate::linalg;

/// Random-general mixing matrices are redrawn until their condition number is below this.
pub const MAX_MIXING_CONDITION: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    Laplacian,
    Uniform,
    Gaussian,
    Logistic,
    Bimodal,
}

impl SourceKind {
    fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            SourceKind::Laplacian => {
                let u: f64 = rng.random_range(f64::EPSILON..1.0) - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            SourceKind::Uniform => rng.random_range(-1.0..1.0),
            SourceKind::Gaussian => rng.sample(StandardNormal),
            SourceKind::Logistic => {
                // open interval keeps the logit finite
                let u: f64 = rng.random_range(f64::EPSILON..1.0);
                (u / (1.0 - u)).ln()
            }
            SourceKind::Bimodal => {
                let centre = if rng.random::<bool>() { 1.0 } else { -1.0 };
                centre + 0.3 * rng.sample::<f64, _>(StandardNormal)
            }
        }
    }

    /// Sign of the population excess kurtosis: +1 super-Gaussian, -1 sub-Gaussian, 0 Gaussian.
    pub fn kurtosis_sign(self) -> i8 {
        match self {
            SourceKind::Laplacian | SourceKind::Logistic => 1,
            SourceKind::Uniform | SourceKind::Bimodal => -1,
            SourceKind::Gaussian => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mixing {
    RandomOrthogonal,
    RandomGeneral,
    /// Row-major square matrix.
    Explicit { matrix: Vec<Vec<f64>> },
    /// Columns are scalp projections of random dipoles on a spherical-cap montage
    /// with one electrode per source (see [`Montage::spherical_cap`]).
    Dipolar,
}

fn default_srate() -> f64 {
    250.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub n_sources: usize,
    pub n_samples: usize,
    /// One kind per source, or a single kind applied to all sources.
    pub source_kinds: Vec<SourceKind>,
    pub mixing: Mixing,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_db: Option<f64>,
    pub seed: u64,
    #[serde(default = "default_srate")]
    pub srate: f64,
}

impl SynthSpec {
    pub fn new(n_sources: usize, n_samples: usize, kind: SourceKind, seed: u64) -> Self {
        SynthSpec {
            id: None,
            n_sources,
            n_samples,
            source_kinds: vec![kind],
            mixing: Mixing::RandomGeneral,
            noise_db: None,
            seed,
            srate: default_srate(),
        }
    }

    pub fn with_kinds(mut self, kinds: Vec<SourceKind>) -> Self {
        self.source_kinds = kinds;
        self
    }

    pub fn with_mixing(mut self, mixing: Mixing) -> Self {
        self.mixing = mixing;
        self
    }

    pub fn with_noise_db(mut self, db: f64) -> Self {
        self.noise_db = Some(db);
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = Some(id.into());
        self
    }

    pub fn kinds(&self) -> Vec<SourceKind> {
        if self.source_kinds.len() == 1 {
            vec![self.source_kinds[0]; self.n_sources]
        } else {
            self.source_kinds.clone()
        }
    }

    pub fn dataset_id(&self) -> String {
        self.id
            .clone()
            .unwrap_or_else(|| format!("synth-{}", self.seed))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sources < 2 {
            return Err(Error::Validation(format!(
                "n_sources must be at least 2, got {}",
                self.n_sources
            )));
        }
        if self.n_samples < self.n_sources {
            return Err(Error::Validation(format!(
                "n_samples ({}) must be at least n_sources ({})",
                self.n_samples, self.n_sources
            )));
        }
        let k = self.source_kinds.len();
        if k != 1 && k != self.n_sources {
            return Err(Error::Validation(format!(
                "source_kinds has {k} entries; expected 1 or {}",
                self.n_sources
            )));
        }
        let gaussians = self
            .kinds()
            .iter()
            .filter(|&&k| k == SourceKind::Gaussian)
            .count();
        if gaussians > 1 {
            return Err(Error::Validation(format!(
                "{gaussians} gaussian sources: at most one is identifiable"
            )));
        }
        if let Mixing::Explicit { matrix } = &self.mixing {
            if matrix.len() != self.n_sources || matrix.iter().any(|r| r.len() != self.n_sources)
            {
                return Err(Error::shape(
                    format!("{n}x{n} mixing matrix", n = self.n_sources),
                    format!("{} rows", matrix.len()),
                ));
            }
        }
        if let Some(db) = self.noise_db {
            if !db.is_finite() {
                return Err(Error::Validation("noise_db must be finite".into()));
            }
        }
        if !(self.srate > 0.0) {
            return Err(Error::Validation("srate must be positive".into()));
        }
        Ok(())
    }
}

/// The mixing matrix and the standardized sources behind a synthetic dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub mixing: DMatrix<f64>,
    pub sources: DMatrix<f64>,
}

/// Generates a mixture `A · s (+ noise)` from independent standardized sources.
///
/// Deterministic for a fixed seed. Sources are drawn first (row by row), then the
/// mixing matrix, then the noise, all from one ChaCha8 stream.
pub fn synth_dataset(spec: &SynthSpec) -> Result<(Dataset, GroundTruth)> {
    spec.validate()?;
    let n = spec.n_sources;
    let n_samples = spec.n_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut sources = DMatrix::zeros(n, n_samples);
    for (i, kind) in spec.kinds().into_iter().enumerate() {
        let mut row: Vec<f64> = (0..n_samples).map(|_| kind.draw(&mut rng)).collect();
        standardize(&mut row);
        for (t, v) in row.into_iter().enumerate() {
            sources[(i, t)] = v;
        }
    }

    let (mixing, labels) = match &spec.mixing {
        Mixing::RandomOrthogonal => (linalg::random_orthogonal(n, &mut rng), default_labels("C", n)),
        Mixing::RandomGeneral => (random_general(n, &mut rng), default_labels("C", n)),
        Mixing::Explicit { matrix } => {
            let m = DMatrix::from_fn(n, n, |i, j| matrix[i][j]);
            if !linalg::condition_number(&m).is_finite() {
                return Err(Error::Singular("explicit mixing matrix".into()));
            }
            (m, default_labels("C", n))
        }
        Mixing::Dipolar => dipolar_mixing(n, &mut rng)?,
    };

    let mut data = &mixing * &sources;
    if let Some(db) = spec.noise_db {
        let ratio = 10f64.powf(db / 10.0);
        for i in 0..n {
            let row = data.row(i);
            let m = row.mean();
            let var = row.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n_samples as f64;
            let noise = Normal::new(0.0, (var / ratio).sqrt())
                .map_err(|e| Error::Validation(e.to_string()))?;
            for t in 0..n_samples {
                data[(i, t)] += noise.sample(&mut rng);
            }
        }
    }

    let ds = Dataset::new(spec.dataset_id(), data, spec.srate, labels)?;
    Ok((ds, GroundTruth { mixing, sources }))
}

fn standardize(x: &mut [f64]) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n).sqrt();
    let sd = if sd > 0.0 { sd } else { 1.0 };
    for v in x.iter_mut() {
        *v = (*v - m) / sd;
    }
}

fn random_general<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DMatrix<f64> {
    loop {
        let m = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
        if linalg::condition_number(&m) < MAX_MIXING_CONDITION {
            return m;
        }
    }
}

fn dipolar_mixing<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<(DMatrix<f64>, Vec<String>)> {
    let head = HeadModel::default();
    let montage = Montage::spherical_cap(n, head.outer_radius(), 0);
    let forward = ForwardModel::new(&head, crate::dipfit::DEFAULT_MAX_DEGREE)?;
    let positions = montage.scalp_positions(&head);
    let r_max = 0.8 * head.inner_radius();
    let mut mixing = DMatrix::zeros(n, n);
    for j in 0..n {
        // upper half of the inner sphere, under the electrode cap
        let position = loop {
            let p = [
                rng.random_range(-r_max..r_max),
                rng.random_range(-r_max..r_max),
                rng.random_range(0.0..r_max),
            ];
            if (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() < r_max {
                break p;
            }
        };
        let mut moment: [f64; 3] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let norm = moment.iter().map(|v| v * v).sum::<f64>().sqrt();
        moment.iter_mut().for_each(|v| *v /= norm);
        let map = forward.raw_potentials(&Dipole { position, moment }, &positions)?;
        let scale = map.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (i, v) in map.iter().enumerate() {
            mixing[(i, j)] = v / scale;
        }
    }
    let labels = montage.electrodes.iter().map(|e| e.label.clone()).collect();
    Ok((mixing, labels))
}
