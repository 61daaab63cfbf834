use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AlgorithmEntry, BenchConfig, Metric};
use crate::decompositions::Decomposition;
use crate::dipfit::{dipolarity, DipolarityReport, HeadModel, Montage};
use crate::error::{Error, Result};
use crate::infometrics::{pmi_matrix, PmiMatrix};
use crate::mir::{remnant_pmi_from, ChannelEntropies, MirReport, RemnantPmi};
use crate::signals::Dataset;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (`n - 1`); zero for a single value.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(MeanStd {
            mean: stats::mean(values),
            std: stats::std_dev(values),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mir: Option<MirReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remnant_pmi: Option<RemnantPmi>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dipolarity: Option<DipolarityReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSummary {
    pub algorithm_id: String,
    pub params_digest: String,
    pub iterations_used: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl From<&Decomposition> for DecompositionSummary {
    fn from(d: &Decomposition) -> Self {
        DecompositionSummary {
            algorithm_id: d.algorithm_id.clone(),
            params_digest: d.params_digest.clone(),
            iterations_used: d.iterations_used,
            converged: d.converged,
            warnings: d.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTiming {
    pub decomposition_sec: f64,
    pub metrics_sec: f64,
}

/// One (algorithm, dataset) cell: metrics, or the error that stopped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub algorithm: String,
    pub dataset: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decomposition: Option<DecompositionSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<CellMetrics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<CellTiming>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl CellReport {
    pub fn mir(&self) -> Option<&MirReport> {
        self.metrics.as_ref()?.mir.as_ref()
    }

    pub fn remnant_pmi(&self) -> Option<&RemnantPmi> {
        self.metrics.as_ref()?.remnant_pmi.as_ref()
    }

    pub fn dipolarity(&self) -> Option<&DipolarityReport> {
        self.metrics.as_ref()?.dipolarity.as_ref()
    }
}

/// Cross-dataset statistics of one algorithm, over the cells where each metric exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub n_cells: usize,
    pub n_errors: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mir_bits_per_sample: Option<MeanStd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mir_kbits_per_sec: Option<MeanStd>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remnant_pmi_percent: Option<MeanStd>,
    /// One entry per configured rv threshold.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nd_percent: Vec<MeanStd>,
}

/// Algorithms of one dataset ranked by MIR, compared with the ranking by mean MIR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOrdering {
    pub dataset: String,
    pub by_mir: Vec<String>,
    pub matches_overall: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: Option<u64>,
    pub bins: usize,
    pub binning: crate::infometrics::BinningStrategy,
    pub nd_thresholds: Vec<f64>,
    /// Raw stopping tolerance per algorithm label; tolerances of different algorithms are not comparable.
    pub tolerances: BTreeMap<String, Option<f64>>,
    pub threads: usize,
    /// Channel means are removed before every decomposition and metric.
    pub channel_means_removed: bool,
    pub significance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub provenance: Provenance,
    pub algorithms: Vec<String>,
    pub datasets: Vec<String>,
    /// Algorithm-major, in configuration order.
    pub cells: Vec<CellReport>,
    pub summary: Vec<AlgorithmSummary>,
    pub orderings: Vec<DatasetOrdering>,
    pub n_errors: usize,
}

impl BenchReport {
    pub fn cell(&self, algorithm: &str, dataset: &str) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.algorithm == algorithm && c.dataset == dataset)
    }

    pub fn cells_of<'a>(&'a self, algorithm: &'a str) -> impl Iterator<Item = &'a CellReport> + 'a {
        self.cells.iter().filter(move |c| c.algorithm == algorithm)
    }

    pub fn summary_of(&self, algorithm: &str) -> Option<&AlgorithmSummary> {
        self.summary.iter().find(|s| s.algorithm == algorithm)
    }

    /// Cells with timings removed, for comparing runs.
    pub fn metric_section(&self) -> serde_json::Value {
        let cells: Vec<CellReport> = self
            .cells
            .iter()
            .map(|c| CellReport {
                timing: None,
                ..c.clone()
            })
            .collect();
        serde_json::json!({ "cells": cells, "summary": self.summary, "orderings": self.orderings })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::signals::write_atomic(path, serde_json::to_string_pretty(self)?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }

    /// One row per cell: MIR and remnant PMI columns, empty where missing.
    pub fn write_cells_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from(
            "algorithm,dataset,mir_bits_per_sample,mir_kbits_per_sec,log_det_w,sum_h_x,sum_h_y,remnant_pmi_percent,channel_mean_pmi,component_mean_pmi,decomposition_sec,error\n",
        );
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for c in &self.cells {
            let m = c.mir();
            let r = c.remnant_pmi();
            let row = [
                c.algorithm.clone(),
                c.dataset.clone(),
                opt(m.map(|m| m.mir_bits_per_sample)),
                opt(m.map(|m| m.mir_kbits_per_sec)),
                opt(m.map(|m| m.log_det_w)),
                opt(m.map(|m| m.sum_h_x)),
                opt(m.map(|m| m.sum_h_y)),
                opt(r.map(|r| r.percent)),
                opt(r.map(|r| r.channel_mean_pmi)),
                opt(r.map(|r| r.component_mean_pmi)),
                opt(c.timing.map(|t| t.decomposition_sec)),
                c.error.as_deref().map(csv_quote).unwrap_or_default(),
            ];
            out.push_str(&row.join(","));
            out.push('\n');
        }
        crate::signals::write_atomic(path, out.as_bytes())
    }
}

pub(crate) fn csv_quote(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A loaded dataset with the channel-side quantities shared by all its cells.
pub(crate) struct DatasetContext {
    pub dataset: Dataset,
    pub entropies: Option<ChannelEntropies>,
    pub channel_pmi: Option<PmiMatrix>,
    pub montage: Option<Montage>,
}

pub(crate) struct Prepared {
    pub ids: Vec<String>,
    pub contexts: Vec<std::result::Result<DatasetContext, String>>,
    pub head: HeadModel,
}

/// Loads every dataset and computes channel entropies and PMI once per dataset.
pub(crate) fn prepare(cfg: &BenchConfig, metrics: &[Metric]) -> Result<Prepared> {
    cfg.validate()?;
    let head = cfg.head()?;
    let binning = cfg.binning();
    let contexts: Vec<std::result::Result<DatasetContext, String>> = cfg
        .datasets
        .par_iter()
        .map(|source| {
            let dataset = cfg.seeded_source(source).load().map_err(|e| e.to_string())?;
            let entropies = if metrics.contains(&Metric::Mir) {
                Some(ChannelEntropies::new(&dataset, binning).map_err(|e| e.to_string())?)
            } else {
                None
            };
            let channel_pmi = if metrics.contains(&Metric::Pmi) {
                Some(pmi_matrix(&dataset.centered(), binning).map_err(|e| e.to_string())?)
            } else {
                None
            };
            let montage = if metrics.contains(&Metric::Dipolarity) {
                Some(cfg.montage_for(dataset.n_channels(), &head).map_err(|e| e.to_string())?)
            } else {
                None
            };
            Ok(DatasetContext {
                dataset,
                entropies,
                channel_pmi,
                montage,
            })
        })
        .collect();
    let ids: Vec<String> = cfg
        .datasets
        .iter()
        .zip(&contexts)
        .enumerate()
        .map(|(i, (source, ctx))| match ctx {
            Ok(c) => c.dataset.id().to_string(),
            Err(_) => match cfg.seeded_source(source) {
                super::DatasetSource::Synth(s) => s.dataset_id(),
                super::DatasetSource::File { path, .. } => path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| format!("dataset-{i}")),
            },
        })
        .collect();
    let mut seen = std::collections::BTreeSet::new();
    if let Some(dup) = ids.iter().find(|id| !seen.insert(id.as_str())) {
        return Err(Error::Validation(format!("dataset id {dup:?} appears twice")));
    }
    Ok(Prepared { ids, contexts, head })
}

/// Runs the configured metrics on one decomposition.
pub(crate) fn score(
    cfg: &BenchConfig,
    ctx: &DatasetContext,
    head: &HeadModel,
    label: &str,
    dec: &Decomposition,
) -> Result<CellMetrics> {
    let mir = ctx.entropies.as_ref().map(|e| e.mir(&dec.w, label)).transpose()?;
    let remnant_pmi = ctx
        .channel_pmi
        .as_ref()
        .map(|c| remnant_pmi_from(c, &ctx.dataset.centered(), &dec.w))
        .transpose()?;
    let dipolarity = ctx
        .montage
        .as_ref()
        .map(|m| dipolarity(&dec.a, m, head, &cfg.fit, &cfg.nd_thresholds))
        .transpose()?;
    Ok(CellMetrics {
        mir,
        remnant_pmi,
        dipolarity,
    })
}

pub(crate) fn run_cell(
    cfg: &BenchConfig,
    entry: &AlgorithmEntry,
    dataset_id: &str,
    ctx: &std::result::Result<DatasetContext, String>,
    head: &HeadModel,
) -> CellReport {
    let label = entry.label();
    let mut cell = CellReport {
        algorithm: label.clone(),
        dataset: dataset_id.to_string(),
        decomposition: None,
        metrics: None,
        timing: None,
        error: None,
    };
    let ctx = match ctx {
        Ok(c) => c,
        Err(e) => {
            cell.error = Some(format!("dataset: {e}"));
            return cell;
        }
    };
    let algorithm = cfg.seeded(&entry.algorithm);
    let started = Instant::now();
    let dec = match algorithm.run(&ctx.dataset) {
        Ok(d) => d,
        Err(e) => {
            cell.error = Some(format!("decomposition: {e}"));
            return cell;
        }
    };
    let decomposition_sec = started.elapsed().as_secs_f64();
    cell.decomposition = Some(DecompositionSummary::from(&dec));
    let started = Instant::now();
    match score(cfg, ctx, head, &label, &dec) {
        Ok(m) => cell.metrics = Some(m),
        Err(e) => cell.error = Some(format!("metrics: {e}")),
    }
    cell.timing = Some(CellTiming {
        decomposition_sec,
        metrics_sec: started.elapsed().as_secs_f64(),
    });
    cell
}

pub(crate) fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t);
    }
    b.build().map_err(|e| Error::Validation(format!("cannot start worker pool: {e}")))
}

/// Runs every (algorithm, dataset) cell and summarizes the metrics.
///
/// Configuration problems fail before any decomposition runs. After that, a
/// failing cell is recorded in the report and the rest of the grid continues.
/// When `output_dir` is set, `report.json` and `cells.csv` are written there.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let pool = thread_pool(cfg.threads)?;
    let metrics: Vec<Metric> = cfg.metrics.iter().copied().collect();
    let report = pool.install(|| -> Result<BenchReport> {
        let prep = prepare(cfg, &metrics)?;
        let jobs: Vec<(usize, usize)> = (0..cfg.algorithms.len())
            .flat_map(|a| (0..prep.ids.len()).map(move |d| (a, d)))
            .collect();
        let cells: Vec<CellReport> = jobs
            .par_iter()
            .map(|&(a, d)| run_cell(cfg, &cfg.algorithms[a], &prep.ids[d], &prep.contexts[d], &prep.head))
            .collect();
        Ok(assemble(cfg, prep.ids, cells, rayon::current_num_threads()))
    })?;
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        report.save(&dir.join("report.json"))?;
        report.write_cells_csv(&dir.join("cells.csv"))?;
    }
    Ok(report)
}

pub(crate) fn assemble(cfg: &BenchConfig, datasets: Vec<String>, cells: Vec<CellReport>, threads: usize) -> BenchReport {
    let algorithms: Vec<String> = cfg.algorithms.iter().map(AlgorithmEntry::label).collect();
    let summary: Vec<AlgorithmSummary> = algorithms
        .iter()
        .map(|a| summarize(a, cells.iter().filter(|c| &c.algorithm == a), cfg.nd_thresholds.len()))
        .collect();
    let orderings = orderings(&algorithms, &datasets, &cells, &summary);
    let n_errors = cells.iter().filter(|c| c.error.is_some()).count();
    BenchReport {
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            bins: cfg.bins,
            binning: cfg.binning,
            nd_thresholds: cfg.nd_thresholds.clone(),
            tolerances: cfg
                .algorithms
                .iter()
                .map(|a| (a.label(), a.algorithm.tolerance()))
                .collect(),
            threads,
            channel_means_removed: true,
            significance: super::SIGNIFICANCE.to_string(),
        },
        algorithms,
        datasets,
        cells,
        summary,
        orderings,
        n_errors,
    }
}

fn summarize<'a>(algorithm: &str, cells: impl Iterator<Item = &'a CellReport>, n_thresholds: usize) -> AlgorithmSummary {
    let cells: Vec<&CellReport> = cells.collect();
    let collect = |f: &dyn Fn(&CellReport) -> Option<f64>| -> Vec<f64> { cells.iter().filter_map(|c| f(c)).collect() };
    let nd_percent = (0..n_thresholds)
        .filter_map(|k| MeanStd::of(&collect(&|c| c.dipolarity().map(|d| d.nd_percent[k]))))
        .collect();
    AlgorithmSummary {
        algorithm: algorithm.to_string(),
        n_cells: cells.len(),
        n_errors: cells.iter().filter(|c| c.error.is_some()).count(),
        mir_bits_per_sample: MeanStd::of(&collect(&|c| c.mir().map(|m| m.mir_bits_per_sample))),
        mir_kbits_per_sec: MeanStd::of(&collect(&|c| c.mir().map(|m| m.mir_kbits_per_sec))),
        remnant_pmi_percent: MeanStd::of(&collect(&|c| c.remnant_pmi().map(|r| r.percent))),
        nd_percent,
    }
}

fn rank_by_mir<'a>(items: impl Iterator<Item = (&'a str, f64)>) -> Vec<String> {
    let mut v: Vec<(&str, f64)> = items.collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    v.into_iter().map(|(a, _)| a.to_string()).collect()
}

fn orderings(
    algorithms: &[String],
    datasets: &[String],
    cells: &[CellReport],
    summary: &[AlgorithmSummary],
) -> Vec<DatasetOrdering> {
    let overall = rank_by_mir(
        summary
            .iter()
            .filter_map(|s| s.mir_bits_per_sample.map(|m| (s.algorithm.as_str(), m.mean))),
    );
    datasets
        .iter()
        .map(|d| {
            let by_mir = rank_by_mir(cells.iter().filter(|c| &c.dataset == d).filter_map(|c| {
                algorithms
                    .contains(&c.algorithm)
                    .then(|| c.mir().map(|m| (c.algorithm.as_str(), m.mir_bits_per_sample)))
                    .flatten()
            }));
            let restricted: Vec<&String> = overall.iter().filter(|a| by_mir.contains(a)).collect();
            DatasetOrdering {
                dataset: d.clone(),
                matches_overall: restricted.iter().copied().eq(by_mir.iter()),
                by_mir,
            }
        })
        .collect()
}

/// Output location helper for the CLI and plots.
pub fn report_path(dir: &Path) -> PathBuf {
    dir.join("report.json")
}
