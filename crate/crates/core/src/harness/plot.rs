use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::regress::regress;
use super::run::{csv_quote, BenchReport, MeanStd};
use super::svg::{color, range, Chart};
use super::sweep::{TimingReport, ToleranceSweep};
use crate::error::{Error, Result};
use crate::signals::write_atomic;

/// Ellipse radii in the ND% scatter, in cross-dataset standard deviations.
pub const ELLIPSE_STD: f64 = 0.2;
/// rv threshold of the ND% scatter when the report has it.
pub const SCATTER_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// Mean ND% against rv threshold, one curve per algorithm.
    DipolarityCurves,
    /// Mean ND% against mean MIR and mean remnant PMI with ±0.2 std ellipses.
    NdScatter,
    /// MIR per dataset, grouped by algorithm.
    MirBars,
    /// Mean MIR below the best algorithm.
    MirDifference,
    /// Mean decomposition time per algorithm.
    Runtime,
    /// Mean MIR against stopping tolerance with reference lines.
    Tolerance,
}

impl PlotKind {
    pub const ALL: [PlotKind; 6] = [
        PlotKind::DipolarityCurves,
        PlotKind::NdScatter,
        PlotKind::MirBars,
        PlotKind::MirDifference,
        PlotKind::Runtime,
        PlotKind::Tolerance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlotKind::DipolarityCurves => "dipolarity-curves",
            PlotKind::NdScatter => "nd-scatter",
            PlotKind::MirBars => "mir-bars",
            PlotKind::MirDifference => "mir-difference",
            PlotKind::Runtime => "runtime",
            PlotKind::Tolerance => "tolerance",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PlotKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = PlotKind::ALL.iter().map(|k| k.name()).collect();
                Error::Validation(format!("unknown plot kind {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

/// Report a plot is drawn from.
#[derive(Debug, Clone, Copy)]
pub enum PlotSource<'a> {
    Bench(&'a BenchReport),
    Timing(&'a TimingReport),
    Tolerance(&'a ToleranceSweep),
}

/// Writes `<kind>.svg` (two SVGs for the scatter) and `<kind>.csv` with the plotted values.
pub fn emit_plots(source: PlotSource<'_>, kind: PlotKind, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = match (kind, source) {
        (PlotKind::DipolarityCurves, PlotSource::Bench(r)) => dipolarity_curves(r)?,
        (PlotKind::NdScatter, PlotSource::Bench(r)) => nd_scatter(r)?,
        (PlotKind::MirBars, PlotSource::Bench(r)) => mir_bars(r)?,
        (PlotKind::MirDifference, PlotSource::Bench(r)) => mir_difference(r)?,
        (PlotKind::Runtime, PlotSource::Bench(r)) => runtime_from_bench(r),
        (PlotKind::Runtime, PlotSource::Timing(t)) => runtime_from_timing(t),
        (PlotKind::Tolerance, PlotSource::Tolerance(s)) => tolerance(s),
        _ => {
            return Err(Error::Validation(format!(
                "{kind} plot cannot be drawn from this kind of report"
            )))
        }
    };
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = out_dir.join(name);
        write_atomic(&path, contents.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

type Files = Vec<(String, String)>;

fn missing(kind: PlotKind, metric: &str) -> Error {
    Error::MissingMetric(format!("{kind} plot needs the {metric} metric"))
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut out = format!("{header}\n");
    for r in rows {
        out.push_str(&r.into_iter().map(|c| csv_quote(&c)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

fn dipolarity_curves(r: &BenchReport) -> Result<Files> {
    let kind = PlotKind::DipolarityCurves;
    let series: Vec<(&str, &Vec<MeanStd>)> = r
        .summary
        .iter()
        .filter(|s| !s.nd_percent.is_empty())
        .map(|s| (s.algorithm.as_str(), &s.nd_percent))
        .collect();
    if series.is_empty() {
        return Err(missing(kind, "dipolarity"));
    }
    let t = &r.provenance.nd_thresholds;
    let mut chart = Chart::new(
        "Near-dipolar components",
        "residual variance threshold (%)",
        "ND (%)",
        range(t.iter().map(|v| 100.0 * v)),
        range(series.iter().flat_map(|s| s.1.iter().map(|m| m.mean))),
    );
    let mut rows = Vec::new();
    for (i, (alg, nd)) in series.iter().enumerate() {
        let pts: Vec<(f64, f64)> = t.iter().zip(nd.iter()).map(|(t, m)| (100.0 * t, m.mean)).collect();
        chart.line(&pts, color(i), false);
        chart.legend(alg, color(i));
        for (t, m) in t.iter().zip(nd.iter()) {
            rows.push(vec![alg.to_string(), t.to_string(), m.mean.to_string(), m.std.to_string(), m.n.to_string()]);
        }
    }
    Ok(vec![
        (format!("{kind}.svg"), chart.render()),
        (format!("{kind}.csv"), csv("algorithm,threshold,nd_percent_mean,nd_percent_std,n", rows)),
    ])
}

/// Index of the configured threshold closest to the scatter threshold.
fn scatter_index(r: &BenchReport) -> usize {
    r.provenance
        .nd_thresholds
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - SCATTER_THRESHOLD).abs().total_cmp(&(b.1 - SCATTER_THRESHOLD).abs()))
        .map_or(0, |(i, _)| i)
}

fn nd_scatter(r: &BenchReport) -> Result<Files> {
    let kind = PlotKind::NdScatter;
    let k = scatter_index(r);
    let points: Vec<_> = r
        .summary
        .iter()
        .filter_map(|s| Some((s.algorithm.as_str(), *s.nd_percent.get(k)?, s.mir_bits_per_sample?, s.remnant_pmi_percent)))
        .collect();
    if r.summary.iter().all(|s| s.nd_percent.is_empty()) {
        return Err(missing(kind, "dipolarity"));
    }
    if points.is_empty() {
        return Err(missing(kind, "mir"));
    }
    let threshold = r.provenance.nd_thresholds[k];
    let mut files = Vec::new();
    let axes: [(&str, &str, Box<dyn Fn(&(&str, MeanStd, MeanStd, Option<MeanStd>)) -> Option<MeanStd>>); 2] = [
        ("mir", "MIR (bits/sample)", Box::new(|p| Some(p.2))),
        ("remnant-pmi", "remnant PMI (%)", Box::new(|p| p.3)),
    ];
    for (suffix, label, get) in axes.iter() {
        let pts: Vec<_> = points.iter().filter_map(|p| Some((p.0, p.1, get(p)?))).collect();
        if pts.is_empty() {
            continue;
        }
        let mut chart = Chart::new(
            &format!("ND at rv < {}% against {label}", 100.0 * threshold),
            &format!("ND (%) at rv < {}%", 100.0 * threshold),
            label,
            range(pts.iter().flat_map(|p| [p.1.mean - ELLIPSE_STD * p.1.std, p.1.mean + ELLIPSE_STD * p.1.std])),
            range(pts.iter().flat_map(|p| [p.2.mean - ELLIPSE_STD * p.2.std, p.2.mean + ELLIPSE_STD * p.2.std])),
        );
        for (i, (alg, x, y)) in pts.iter().enumerate() {
            chart.ellipse(x.mean, y.mean, ELLIPSE_STD * x.std, ELLIPSE_STD * y.std, color(i));
            chart.marker(x.mean, y.mean, color(i));
            chart.legend(alg, color(i));
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.1.mean).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.2.mean).collect();
        if let Ok(fit) = regress(&xs, &ys) {
            let (lo, hi) = range(xs.iter().copied());
            chart.line(
                &[(lo, fit.intercept + fit.slope * lo), (hi, fit.intercept + fit.slope * hi)],
                "#555555",
                true,
            );
        }
        files.push((format!("{kind}-{suffix}.svg"), chart.render()));
    }
    let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
    let rows = points.iter().map(|(alg, nd, mir, rem)| {
        vec![
            alg.to_string(),
            threshold.to_string(),
            nd.mean.to_string(),
            nd.std.to_string(),
            mir.mean.to_string(),
            mir.std.to_string(),
            opt(rem.map(|m| m.mean)),
            opt(rem.map(|m| m.std)),
            (ELLIPSE_STD * nd.std).to_string(),
            (ELLIPSE_STD * mir.std).to_string(),
            opt(rem.map(|m| ELLIPSE_STD * m.std)),
        ]
    });
    files.push((
        format!("{kind}.csv"),
        csv(
            "algorithm,threshold,nd_percent_mean,nd_percent_std,mir_mean,mir_std,remnant_pmi_mean,remnant_pmi_std,ellipse_rx,ellipse_ry_mir,ellipse_ry_remnant_pmi",
            rows,
        ),
    ));
    Ok(files)
}

fn mir_bars(r: &BenchReport) -> Result<Files> {
    let kind = PlotKind::MirBars;
    if !r.cells.iter().any(|c| c.mir().is_some()) {
        return Err(missing(kind, "mir"));
    }
    let n_alg = r.algorithms.len() as f64;
    let width = 0.8 / n_alg;
    let values: Vec<(usize, usize, f64)> = r
        .datasets
        .iter()
        .enumerate()
        .flat_map(|(d, ds)| {
            r.algorithms.iter().enumerate().filter_map(move |(a, alg)| {
                Some((d, a, r.cell(alg, ds)?.mir()?.mir_kbits_per_sec))
            })
        })
        .collect();
    let mut chart = Chart::new(
        "MIR per dataset",
        "dataset",
        "MIR (kbits/s)",
        (-0.5, r.datasets.len() as f64 - 0.5),
        range(values.iter().map(|v| v.2).chain([0.0])),
    );
    for &(d, a, v) in &values {
        let x = d as f64 - 0.4 + width * (a as f64 + 0.5);
        chart.bar(x, width * 0.9, v, color(a));
    }
    for (d, ds) in r.datasets.iter().enumerate() {
        chart.label_x(d as f64, ds);
    }
    for (a, alg) in r.algorithms.iter().enumerate() {
        chart.legend(alg, color(a));
    }
    let rows = values.iter().map(|&(d, a, v)| {
        let cell = r.cell(&r.algorithms[a], &r.datasets[d]).expect("cell exists");
        vec![
            r.datasets[d].clone(),
            r.algorithms[a].clone(),
            v.to_string(),
            cell.mir().map(|m| m.mir_bits_per_sample.to_string()).unwrap_or_default(),
        ]
    });
    let order = r.orderings.iter().map(|o| {
        vec![o.dataset.clone(), o.by_mir.join(" > "), o.matches_overall.to_string()]
    });
    Ok(vec![
        (format!("{kind}.svg"), chart.render()),
        (format!("{kind}.csv"), csv("dataset,algorithm,mir_kbits_per_sec,mir_bits_per_sample", rows)),
        (format!("{kind}-ordering.csv"), csv("dataset,order_by_mir,matches_overall", order)),
    ])
}

fn mir_difference(r: &BenchReport) -> Result<Files> {
    let kind = PlotKind::MirDifference;
    let mut means: Vec<(&str, MeanStd)> = r
        .summary
        .iter()
        .filter_map(|s| Some((s.algorithm.as_str(), s.mir_kbits_per_sec?)))
        .collect();
    if means.is_empty() {
        return Err(missing(kind, "mir"));
    }
    means.sort_by(|a, b| b.1.mean.total_cmp(&a.1.mean).then_with(|| a.0.cmp(b.0)));
    let best = means[0].1.mean;
    let diffs: Vec<f64> = means.iter().map(|m| best - m.1.mean).collect();
    let mut chart = Chart::new(
        &format!("MIR below {}", means[0].0),
        "algorithm",
        "MIR difference (kbits/s)",
        (-0.5, means.len() as f64 - 0.5),
        range(diffs.iter().copied().chain([0.0])),
    );
    for (i, ((alg, _), d)) in means.iter().zip(&diffs).enumerate() {
        chart.bar(i as f64, 0.6, *d, color(i));
        chart.label_x(i as f64, alg);
    }
    let rows = means
        .iter()
        .zip(&diffs)
        .map(|((alg, m), d)| vec![alg.to_string(), m.mean.to_string(), m.std.to_string(), d.to_string()]);
    Ok(vec![
        (format!("{kind}.svg"), chart.render()),
        (format!("{kind}.csv"), csv("algorithm,mir_kbits_per_sec_mean,mir_kbits_per_sec_std,difference_from_best", rows)),
    ])
}

fn runtime_chart(rows: &[(String, MeanStd)]) -> Files {
    let kind = PlotKind::Runtime;
    let mut chart = Chart::new(
        "Decomposition time",
        "algorithm",
        "wall-clock time (s)",
        (-0.5, rows.len() as f64 - 0.5),
        range(rows.iter().map(|r| r.1.mean + r.1.std).chain([0.0])),
    );
    for (i, (alg, m)) in rows.iter().enumerate() {
        chart.bar(i as f64, 0.6, m.mean, color(i));
        chart.label_x(i as f64, alg);
    }
    let csv_rows = rows
        .iter()
        .map(|(a, m)| vec![a.clone(), m.mean.to_string(), m.std.to_string(), m.n.to_string()]);
    vec![
        (format!("{kind}.svg"), chart.render()),
        (format!("{kind}.csv"), csv("algorithm,seconds_mean,seconds_std,n", csv_rows)),
    ]
}

fn runtime_from_bench(r: &BenchReport) -> Files {
    let rows: Vec<(String, MeanStd)> = r
        .algorithms
        .iter()
        .filter_map(|a| {
            let t: Vec<f64> = r.cells_of(a).filter_map(|c| c.timing.map(|t| t.decomposition_sec)).collect();
            Some((a.clone(), MeanStd::of(&t)?))
        })
        .collect();
    runtime_chart(&rows)
}

fn runtime_from_timing(t: &TimingReport) -> Files {
    let rows: Vec<(String, MeanStd)> = t
        .per_algorithm
        .iter()
        .filter_map(|(a, m)| Some((a.clone(), (*m)?)))
        .collect();
    runtime_chart(&rows)
}

fn tolerance(s: &ToleranceSweep) -> Files {
    let kind = PlotKind::Tolerance;
    let pts: Vec<(f64, f64)> = s
        .means
        .iter()
        .filter_map(|m| Some((-m.tolerance.log10(), m.mir_bits_per_sample?.mean)))
        .collect();
    let refs: Vec<(&str, f64)> = s
        .references
        .iter()
        .filter_map(|r| Some((r.algorithm.as_str(), r.mir_bits_per_sample?.mean)))
        .collect();
    let (x0, x1) = range(pts.iter().map(|p| p.0));
    let mut chart = Chart::new(
        &format!("{} MIR against stopping tolerance", s.algorithm),
        "-log10(tolerance)",
        "MIR (bits/sample)",
        (x0, x1),
        range(pts.iter().map(|p| p.1).chain(refs.iter().map(|r| r.1))),
    );
    chart.line(&pts, color(0), false);
    for &(x, y) in &pts {
        chart.marker(x, y, color(0));
    }
    chart.legend(&s.algorithm, color(0));
    for (i, (alg, v)) in refs.iter().enumerate() {
        chart.line(&[(x0, *v), (x1, *v)], color(i + 1), true);
        chart.legend(alg, color(i + 1));
    }
    let mut rows: Vec<Vec<String>> = s
        .means
        .iter()
        .map(|m| {
            vec![
                s.algorithm.clone(),
                m.tolerance.to_string(),
                m.mir_bits_per_sample.map(|v| v.mean.to_string()).unwrap_or_default(),
                m.mir_bits_per_sample.map(|v| v.std.to_string()).unwrap_or_default(),
                "false".into(),
            ]
        })
        .collect();
    rows.extend(s.references.iter().map(|r| {
        vec![
            r.algorithm.clone(),
            r.tolerance.map(|t| t.to_string()).unwrap_or_default(),
            r.mir_bits_per_sample.map(|v| v.mean.to_string()).unwrap_or_default(),
            r.mir_bits_per_sample.map(|v| v.std.to_string()).unwrap_or_default(),
            "true".into(),
        ]
    }));
    vec![
        (format!("{kind}.svg"), chart.render()),
        (format!("{kind}.csv"), csv("algorithm,tolerance,mir_mean,mir_std,reference", rows)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::tests::fake_report;

    fn read_csv(path: &Path) -> Vec<Vec<String>> {
        std::fs::read_to_string(path)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect()
    }

    #[test]
    fn scatter_csv_has_one_row_per_algorithm() {
        let dir = tempfile::tempdir().unwrap();
        let r = fake_report();
        let files = emit_plots(PlotSource::Bench(&r), PlotKind::NdScatter, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let rows = read_csv(&dir.path().join("nd-scatter.csv"));
        assert_eq!(rows.len(), 3);
        for row in &rows {
            assert_eq!(row[1], "0.05");
            let nd_std: f64 = row[3].parse().unwrap();
            let mir_std: f64 = row[5].parse().unwrap();
            assert_eq!(row[8].parse::<f64>().unwrap(), ELLIPSE_STD * nd_std);
            assert_eq!(row[9].parse::<f64>().unwrap(), ELLIPSE_STD * mir_std);
        }
        let picard = rows.iter().find(|r| r[0] == "picard").unwrap();
        assert!((picard[2].parse::<f64>().unwrap() - 250.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn difference_plot_is_sorted_and_non_negative() {
        let dir = tempfile::tempdir().unwrap();
        emit_plots(PlotSource::Bench(&fake_report()), PlotKind::MirDifference, dir.path()).unwrap();
        let rows = read_csv(&dir.path().join("mir-difference.csv"));
        let order: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
        assert_eq!(order, vec!["picard", "sphere", "identity"]);
        let diffs: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
        assert_eq!(diffs[0], 0.0);
        assert!(diffs.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn curves_and_bars() {
        let dir = tempfile::tempdir().unwrap();
        let r = fake_report();
        emit_plots(PlotSource::Bench(&r), PlotKind::DipolarityCurves, dir.path()).unwrap();
        assert_eq!(read_csv(&dir.path().join("dipolarity-curves.csv")).len(), 9);
        emit_plots(PlotSource::Bench(&r), PlotKind::MirBars, dir.path()).unwrap();
        assert_eq!(read_csv(&dir.path().join("mir-bars.csv")).len(), 6);
        let ordering = read_csv(&dir.path().join("mir-bars-ordering.csv"));
        assert!(ordering.iter().all(|r| r[2] == "true"));
        emit_plots(PlotSource::Bench(&r), PlotKind::Runtime, dir.path()).unwrap();
        assert_eq!(read_csv(&dir.path().join("runtime.csv")).len(), 3);
        assert!(std::fs::read_to_string(dir.path().join("runtime.svg")).unwrap().contains("<rect"));
    }

    #[test]
    fn missing_metric_names_the_plot() {
        let dir = tempfile::tempdir().unwrap();
        let mut r = fake_report();
        for c in &mut r.cells {
            c.metrics.as_mut().unwrap().dipolarity = None;
        }
        for s in &mut r.summary {
            s.nd_percent.clear();
        }
        let err = emit_plots(PlotSource::Bench(&r), PlotKind::DipolarityCurves, dir.path()).unwrap_err();
        assert!(matches!(err, Error::MissingMetric(_)));
        assert!(err.to_string().contains("dipolarity-curves"));
        assert!(emit_plots(PlotSource::Bench(&r), PlotKind::Tolerance, dir.path()).is_err());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in PlotKind::ALL {
            assert_eq!(k.name().parse::<PlotKind>().unwrap(), k);
        }
        assert!("fig9".parse::<PlotKind>().is_err());
    }
}
