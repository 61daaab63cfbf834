use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::decompositions::Algorithm;
use crate::dipfit::{default_thresholds, FitOptions, HeadModel, Montage};
use crate::error::{Error, Result};
use crate::infometrics::{Binning, BinningStrategy, DEFAULT_BINS};
use crate::signals::{load_dataset, synth_dataset, DataFormat, Dataset, SynthSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    Mir,
    Pmi,
    Dipolarity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    Synth(SynthSpec),
    File {
        path: PathBuf,
        /// Required for CSV files; binary files carry it in their header.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        srate: Option<f64>,
    },
}

impl DatasetSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DatasetSource::Synth(spec) => synth_dataset(spec).map(|(ds, _)| ds),
            DatasetSource::File { path, srate } => {
                let format = DataFormat::from_path(path, srate.unwrap_or(f64::NAN));
                load_dataset(path, format)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmEntry {
    /// Report label; defaults to the algorithm id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub algorithm: Algorithm,
}

impl AlgorithmEntry {
    pub fn new(algorithm: Algorithm) -> Self {
        AlgorithmEntry { label: None, algorithm }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.algorithm.id())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub datasets: Vec<DatasetSource>,
    pub algorithms: Vec<AlgorithmEntry>,
    #[serde(default = "default_metrics")]
    pub metrics: BTreeSet<Metric>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub binning: BinningStrategy,
    /// Electrode CSV; without one, a spherical cap matching each dataset's channel count is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub montage: Option<PathBuf>,
    #[serde(default)]
    pub exclude: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_model: Option<PathBuf>,
    #[serde(default = "default_thresholds")]
    pub nd_thresholds: Vec<f64>,
    #[serde(default)]
    pub fit: FitOptions,
    /// Timing repetitions per cell.
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    /// When set, replaces the seed of every seeded algorithm and offsets synthetic dataset seeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

fn default_metrics() -> BTreeSet<Metric> {
    [Metric::Mir, Metric::Pmi].into_iter().collect()
}

fn default_bins() -> usize {
    DEFAULT_BINS
}

fn default_repetitions() -> usize {
    5
}

impl BenchConfig {
    pub fn new(datasets: Vec<DatasetSource>, algorithms: Vec<Algorithm>) -> Self {
        BenchConfig {
            datasets,
            algorithms: algorithms.into_iter().map(AlgorithmEntry::new).collect(),
            metrics: default_metrics(),
            bins: DEFAULT_BINS,
            binning: BinningStrategy::default(),
            montage: None,
            exclude: BTreeSet::new(),
            head_model: None,
            nd_thresholds: default_thresholds(),
            fit: FitOptions::default(),
            repetitions: default_repetitions(),
            seed: None,
            threads: None,
            output_dir: None,
        }
    }

    /// Reads a JSON config; relative paths are taken from the config's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: BenchConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.datasets {
            if let DatasetSource::File { path, .. } = d {
                fix(path);
            }
        }
        for a in &mut self.algorithms {
            if let Algorithm::Import { path } = &mut a.algorithm {
                if Path::new(path.as_str()).is_relative() {
                    *path = base.join(&*path).to_string_lossy().into_owned();
                }
            }
        }
        self.montage.as_mut().map(fix);
        self.head_model.as_mut().map(fix);
        self.output_dir.as_mut().map(fix);
    }

    pub fn binning(&self) -> Binning {
        Binning::new(self.bins, self.binning)
    }

    pub fn has(&self, metric: Metric) -> bool {
        self.metrics.contains(&metric)
    }

    /// Checks everything that can be checked without running a decomposition.
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Validation("config lists no datasets".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::Validation("config lists no algorithms".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Validation("repetitions must be >= 1".into()));
        }
        if self.bins < 2 {
            return Err(Error::Validation(format!("bins must be >= 2, got {}", self.bins)));
        }
        if self.threads == Some(0) {
            return Err(Error::Validation("threads must be >= 1".into()));
        }
        if let Some(t) = self.nd_thresholds.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::Validation(format!("nd thresholds must be in (0, 1], got {t}")));
        }
        let mut labels = BTreeSet::new();
        for a in &self.algorithms {
            if !labels.insert(a.label()) {
                return Err(Error::Validation(format!(
                    "algorithm label {:?} appears twice; set distinct labels",
                    a.label()
                )));
            }
        }
        let mut synth_ids = BTreeSet::new();
        for (i, d) in self.datasets.iter().enumerate() {
            match d {
                DatasetSource::Synth(spec) => {
                    spec.validate().map_err(|e| e.context(format!("dataset {i}")))?;
                    if !synth_ids.insert(spec.dataset_id()) {
                        return Err(Error::Validation(format!(
                            "synthetic dataset id {:?} appears twice",
                            spec.dataset_id()
                        )));
                    }
                }
                DatasetSource::File { path, srate } => {
                    if !path.is_file() {
                        return Err(Error::Validation(format!("dataset file {} does not exist", path.display())));
                    }
                    if matches!(DataFormat::from_path(path, 0.0), DataFormat::Csv { .. })
                        && !srate.is_some_and(|s| s > 0.0)
                    {
                        return Err(Error::Validation(format!(
                            "CSV dataset {} needs a positive srate",
                            path.display()
                        )));
                    }
                }
            }
        }
        if self.has(Metric::Dipolarity) {
            self.head()?;
            self.montage_file()?;
        }
        Ok(())
    }

    pub fn head(&self) -> Result<HeadModel> {
        match &self.head_model {
            Some(p) => HeadModel::load(p),
            None => Ok(HeadModel::default()),
        }
    }

    fn montage_file(&self) -> Result<Option<Montage>> {
        self.montage
            .as_ref()
            .map(|p| Montage::from_csv(p, self.exclude.clone()))
            .transpose()
    }

    /// The configured montage, or a spherical cap with `n_channels` electrodes.
    pub fn montage_for(&self, n_channels: usize, head: &HeadModel) -> Result<Montage> {
        match self.montage_file()? {
            Some(m) => Ok(m),
            None => {
                let cap = Montage::spherical_cap(n_channels, head.outer_radius(), 0);
                Montage::new(cap.electrodes, self.exclude.clone())
            }
        }
    }

    /// The algorithm with the config seed applied.
    pub fn seeded(&self, algorithm: &Algorithm) -> Algorithm {
        match self.seed {
            Some(seed) => algorithm.with_seed(seed),
            None => algorithm.clone(),
        }
    }

    /// The dataset source with the config seed applied.
    pub fn seeded_source(&self, source: &DatasetSource) -> DatasetSource {
        match (source, self.seed) {
            (DatasetSource::Synth(spec), Some(seed)) => {
                let mut spec = spec.clone();
                if spec.id.is_none() {
                    spec.id = Some(spec.dataset_id());
                }
                spec.seed = spec.seed.wrapping_add(seed);
                DatasetSource::Synth(spec)
            }
            _ => source.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decompositions::PicardParams;
    use crate::signals::SourceKind;

    fn synth(seed: u64) -> DatasetSource {
        DatasetSource::Synth(SynthSpec::new(3, 1000, SourceKind::Laplacian, seed))
    }

    #[test]
    fn parses_a_minimal_config() {
        let json = r#"{
            "datasets": [{"synth": {"n_sources": 3, "n_samples": 1000, "source_kinds": ["laplacian"], "mixing": {"kind": "random-general"}, "seed": 4}}],
            "algorithms": [{"algorithm": "pca"}, {"algorithm": "picard", "tol": 1e-4, "label": "picard-loose"}]
        }"#;
        let cfg: BenchConfig = serde_json::from_str(json).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.bins, 128);
        assert_eq!(cfg.repetitions, 5);
        assert_eq!(cfg.nd_thresholds.len(), 40);
        assert_eq!(cfg.algorithms[1].label(), "picard-loose");
        assert_eq!(cfg.algorithms[1].algorithm.tolerance(), Some(1e-4));
        assert!(cfg.has(Metric::Mir) && !cfg.has(Metric::Dipolarity));
    }

    #[test]
    fn round_trips_through_json() {
        let mut cfg = BenchConfig::new(vec![synth(1)], vec![Algorithm::Picard(PicardParams::default())]);
        cfg.metrics.insert(Metric::Dipolarity);
        let back: BenchConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn validation_errors() {
        let empty = BenchConfig::new(vec![], vec![Algorithm::Identity]);
        assert!(empty.validate().is_err());
        let mut reps = BenchConfig::new(vec![synth(1)], vec![Algorithm::Identity]);
        reps.repetitions = 0;
        assert!(reps.validate().is_err());
        let dup = BenchConfig::new(vec![synth(1)], vec![Algorithm::Identity, Algorithm::Identity]);
        assert!(dup.validate().unwrap_err().to_string().contains("twice"));
        let missing = BenchConfig::new(
            vec![DatasetSource::File { path: "/nonexistent/x.f64".into(), srate: None }],
            vec![Algorithm::Identity],
        );
        assert!(missing.validate().is_err());
        assert!(serde_json::from_str::<BenchConfig>(r#"{"datasets": [], "algorithms": [], "bogus": 1}"#).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(
            &path,
            r#"{"datasets": [{"file": {"path": "d.csv", "srate": 100}}], "algorithms": [{"algorithm": "import", "path": "w/{dataset}.csv"}]}"#,
        )
        .unwrap();
        let cfg = BenchConfig::load(&path).unwrap();
        match &cfg.datasets[0] {
            DatasetSource::File { path, .. } => assert_eq!(path, &dir.path().join("d.csv")),
            other => panic!("{other:?}"),
        }
        match &cfg.algorithms[0].algorithm {
            Algorithm::Import { path } => assert!(path.starts_with(dir.path().to_str().unwrap())),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seed_overrides() {
        let mut cfg = BenchConfig::new(vec![synth(1)], vec![Algorithm::Picard(PicardParams::default())]);
        assert_eq!(cfg.seeded(&cfg.algorithms[0].algorithm), cfg.algorithms[0].algorithm);
        cfg.seed = Some(9);
        match cfg.seeded(&cfg.algorithms[0].algorithm) {
            Algorithm::Picard(p) => assert_eq!(p.seed, Some(9)),
            other => panic!("{other:?}"),
        }
        match cfg.seeded_source(&cfg.datasets[0]) {
            DatasetSource::Synth(s) => {
                assert_eq!(s.seed, 10);
                assert_eq!(s.dataset_id(), "synth-1");
            }
            other => panic!("{other:?}"),
        }
    }
}
