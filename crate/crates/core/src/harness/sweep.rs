use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AlgorithmEntry, BenchConfig, Metric};
use super::run::{prepare, score, thread_pool, MeanStd};
use crate::decompositions::{Algorithm, PicardParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceCell {
    pub tolerance: f64,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mir_bits_per_sample: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterations_used: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceMean {
    pub tolerance: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mir_bits_per_sample: Option<MeanStd>,
}

/// Mean MIR of another configured algorithm, drawn as a horizontal line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceLine {
    pub algorithm: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mir_bits_per_sample: Option<MeanStd>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSweep {
    pub algorithm: String,
    pub datasets: Vec<String>,
    /// Tolerance-major, in the requested order.
    pub cells: Vec<ToleranceCell>,
    pub means: Vec<ToleranceMean>,
    pub references: Vec<ReferenceLine>,
    pub n_errors: usize,
}

/// Runs `algorithm` (a configured label, or `picard` with defaults) at each
/// tolerance on every dataset and reports MIR. The other configured algorithms
/// are run once each as reference lines.
pub fn tolerance_sweep(cfg: &BenchConfig, algorithm: &str, tolerances: &[f64]) -> Result<ToleranceSweep> {
    if tolerances.is_empty() || tolerances.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Validation("tolerances must be positive".into()));
    }
    if tolerances.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::Validation("tolerances must be strictly descending".into()));
    }
    let entry = match cfg.algorithms.iter().find(|a| a.label() == algorithm) {
        Some(e) => e.clone(),
        None if algorithm == "picard" => AlgorithmEntry::new(Algorithm::Picard(PicardParams::default())),
        None => {
            return Err(Error::Validation(format!("algorithm {algorithm:?} is not in the config")));
        }
    };
    if entry.algorithm.tolerance().is_none() {
        return Err(Error::Validation(format!("algorithm {algorithm:?} has no stopping tolerance")));
    }
    let pool = thread_pool(cfg.threads)?;
    pool.install(|| {
        let prep = prepare(cfg, &[Metric::Mir])?;
        let mir_of = |alg: &Algorithm, d: usize| -> std::result::Result<(f64, usize, bool), String> {
            let ctx = prep.contexts[d].as_ref().map_err(|e| format!("dataset: {e}"))?;
            let dec = cfg.seeded(alg).run(&ctx.dataset).map_err(|e| format!("decomposition: {e}"))?;
            let m = ctx
                .entropies
                .as_ref()
                .expect("mir requested")
                .mir(&dec.w, algorithm)
                .map_err(|e| format!("metrics: {e}"))?;
            Ok((m.mir_bits_per_sample, dec.iterations_used, dec.converged))
        };
        let jobs: Vec<(usize, usize)> = (0..tolerances.len())
            .flat_map(|t| (0..prep.ids.len()).map(move |d| (t, d)))
            .collect();
        let cells: Vec<ToleranceCell> = jobs
            .par_iter()
            .map(|&(t, d)| {
                let tol = tolerances[t];
                let r = mir_of(&entry.algorithm.with_tolerance(tol), d);
                ToleranceCell {
                    tolerance: tol,
                    dataset: prep.ids[d].clone(),
                    mir_bits_per_sample: r.as_ref().ok().map(|v| v.0),
                    iterations_used: r.as_ref().ok().map(|v| v.1),
                    converged: r.as_ref().ok().map(|v| v.2),
                    error: r.err(),
                }
            })
            .collect();
        let means = tolerances
            .iter()
            .map(|&tol| ToleranceMean {
                tolerance: tol,
                mir_bits_per_sample: MeanStd::of(
                    &cells
                        .iter()
                        .filter(|c| c.tolerance == tol)
                        .filter_map(|c| c.mir_bits_per_sample)
                        .collect::<Vec<_>>(),
                ),
            })
            .collect();
        let references = cfg
            .algorithms
            .iter()
            .filter(|a| a.label() != algorithm)
            .map(|a| {
                let values: Vec<f64> = (0..prep.ids.len())
                    .into_par_iter()
                    .filter_map(|d| mir_of(&a.algorithm, d).ok().map(|v| v.0))
                    .collect();
                ReferenceLine {
                    algorithm: a.label(),
                    tolerance: a.algorithm.tolerance(),
                    mir_bits_per_sample: MeanStd::of(&values),
                }
            })
            .collect();
        let n_errors = cells.iter().filter(|c| c.error.is_some()).count();
        Ok(ToleranceSweep {
            algorithm: algorithm.to_string(),
            datasets: prep.ids.clone(),
            cells,
            means,
            references,
            n_errors,
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostInfo {
    pub os: String,
    pub arch: String,
    pub available_parallelism: usize,
}

impl HostInfo {
    pub fn current() -> Self {
        HostInfo {
            os: std::env::consts::OS.to_string(),
            arch: std::env::consts::ARCH.to_string(),
            available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub algorithm: String,
    pub dataset: String,
    /// Decomposition wall-clock seconds of every repetition.
    pub samples_sec: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition_sec: Option<MeanStd>,
    /// Seconds spent on the configured metrics for one decomposition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics_sec: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub repetitions: usize,
    /// Timing runs are serial.
    pub threads: usize,
    pub host: HostInfo,
    pub rows: Vec<TimingRow>,
    /// Per algorithm: mean and spread of the per-dataset mean times.
    pub per_algorithm: Vec<(String, Option<MeanStd>)>,
    pub n_errors: usize,
}

/// Times every decomposition `cfg.repetitions` times, one cell at a time.
///
/// Metric evaluation is timed once per cell and reported separately.
pub fn time_algorithms(cfg: &BenchConfig) -> Result<TimingReport> {
    cfg.validate()?;
    let metrics: Vec<Metric> = cfg.metrics.iter().copied().collect();
    let pool = thread_pool(Some(1))?;
    pool.install(|| {
        let prep = prepare(cfg, &metrics)?;
        let mut rows = Vec::new();
        for entry in &cfg.algorithms {
            let algorithm = cfg.seeded(&entry.algorithm);
            for (d, id) in prep.ids.iter().enumerate() {
                let mut row = TimingRow {
                    algorithm: entry.label(),
                    dataset: id.clone(),
                    samples_sec: Vec::new(),
                    decomposition_sec: None,
                    metrics_sec: None,
                    error: None,
                };
                let ctx = match &prep.contexts[d] {
                    Ok(c) => c,
                    Err(e) => {
                        row.error = Some(format!("dataset: {e}"));
                        rows.push(row);
                        continue;
                    }
                };
                let mut last = None;
                for _ in 0..cfg.repetitions {
                    let started = Instant::now();
                    match algorithm.run(&ctx.dataset) {
                        Ok(dec) => {
                            row.samples_sec.push(started.elapsed().as_secs_f64());
                            last = Some(dec);
                        }
                        Err(e) => {
                            row.error = Some(format!("decomposition: {e}"));
                            break;
                        }
                    }
                }
                if row.error.is_none() {
                    if let Some(dec) = last {
                        let started = Instant::now();
                        match score(cfg, ctx, &prep.head, &entry.label(), &dec) {
                            Ok(_) => row.metrics_sec = Some(started.elapsed().as_secs_f64()),
                            Err(e) => row.error = Some(format!("metrics: {e}")),
                        }
                    }
                    row.decomposition_sec = MeanStd::of(&row.samples_sec);
                }
                rows.push(row);
            }
        }
        let per_algorithm = cfg
            .algorithms
            .iter()
            .map(|a| {
                let means: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.algorithm == a.label() && r.error.is_none())
                    .filter_map(|r| r.decomposition_sec.map(|m| m.mean))
                    .collect();
                (a.label(), MeanStd::of(&means))
            })
            .collect();
        let n_errors = rows.iter().filter(|r| r.error.is_some()).count();
        Ok(TimingReport {
            repetitions: cfg.repetitions,
            threads: 1,
            host: HostInfo::current(),
            rows,
            per_algorithm,
            n_errors,
        })
    })
}
