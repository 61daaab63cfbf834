use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use super::run::BenchReport;
use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Two-sided p-value of the t-test on the slope, `n - 2` degrees of freedom.
    pub p_value: f64,
    pub n_points: usize,
}

impl RegressionResult {
    /// `-log10(p)`, the significance scale used in plots.
    pub fn neg_log10_p(&self) -> f64 {
        -self.p_value.log10()
    }
}

/// Ordinary least squares of `y` on `x`.
pub fn regress(x: &[f64], y: &[f64]) -> Result<RegressionResult> {
    if x.len() != y.len() {
        return Err(Error::shape(format!("{} y values", x.len()), format!("{}", y.len())));
    }
    let n = x.len();
    if n < 3 {
        return Err(Error::DegenerateRegression(format!("need at least 3 points, got {n}")));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Validation("regression input has non-finite values".into()));
    }
    let (mx, my) = (stats::mean(x), stats::mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateRegression("regressor is constant".into()));
    }
    if !(syy > 0.0) {
        return Err(Error::DegenerateRegression("response is constant".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let r = b - intercept - slope * a;
            r * r
        })
        .sum();
    let r_squared = (1.0 - sse / syy).clamp(0.0, 1.0);
    let df = (n - 2) as f64;
    let se = (sse / df / sxx).sqrt();
    let t = slope / se;
    // P(|T| > t) = I_{df/(df+t²)}(df/2, 1/2); an exact fit gives t = ∞
    let p = if t.is_finite() {
        beta_reg(df / 2.0, 0.5, df / (df + t * t))
    } else {
        0.0
    };
    Ok(RegressionResult {
        slope,
        intercept,
        r_squared,
        p_value: p.clamp(f64::MIN_POSITIVE, 1.0),
        n_points: n,
    })
}

/// A regression at one threshold, or why it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFit {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regression: Option<RegressionResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub neg_log10_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degenerate: Option<String>,
}

impl SweepFit {
    fn from(r: Result<RegressionResult>) -> Self {
        match r {
            Ok(r) => SweepFit {
                neg_log10_p: Some(r.neg_log10_p()),
                regression: Some(r),
                degenerate: None,
            },
            Err(e) => SweepFit {
                regression: None,
                neg_log10_p: None,
                degenerate: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    /// Per-algorithm mean ND% at this threshold, in report order.
    pub nd_percent: Vec<f64>,
    /// Mean MIR regressed on mean ND%.
    pub mir: SweepFit,
    /// Mean remnant PMI regressed on mean ND%, when the report has PMI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub remnant_pmi: Option<SweepFit>,
}

/// Per-algorithm means used as regression points.
struct AlgorithmPoint {
    rv: Vec<Vec<Option<f64>>>,
    mir: f64,
    remnant: Option<f64>,
}

/// For each threshold, regresses per-algorithm mean MIR (and remnant PMI) on
/// per-algorithm mean ND%. Only cells with all required metrics contribute.
pub fn threshold_sweep(report: &BenchReport, thresholds: &[f64]) -> Result<Vec<ThresholdRow>> {
    if !report.cells.iter().any(|c| c.dipolarity().is_some()) {
        return Err(Error::MissingMetric("threshold sweep needs the dipolarity metric".into()));
    }
    if !report.cells.iter().any(|c| c.mir().is_some()) {
        return Err(Error::MissingMetric("threshold sweep needs the mir metric".into()));
    }
    let with_pmi = report.cells.iter().any(|c| c.remnant_pmi().is_some());
    let points: Vec<AlgorithmPoint> = report
        .algorithms
        .iter()
        .filter_map(|a| {
            let cells: Vec<_> = report
                .cells_of(a)
                .filter(|c| c.dipolarity().is_some() && c.mir().is_some() && (!with_pmi || c.remnant_pmi().is_some()))
                .collect();
            if cells.is_empty() {
                return None;
            }
            let mir: Vec<f64> = cells.iter().map(|c| c.mir().unwrap().mir_bits_per_sample).collect();
            let remnant: Vec<f64> = cells.iter().filter_map(|c| c.remnant_pmi().map(|r| r.percent)).collect();
            Some(AlgorithmPoint {
                rv: cells.iter().map(|c| c.dipolarity().unwrap().rv()).collect(),
                mir: stats::mean(&mir),
                remnant: with_pmi.then(|| stats::mean(&remnant)),
            })
        })
        .collect();
    let mir_y: Vec<f64> = points.iter().map(|p| p.mir).collect();
    let remnant_y: Vec<f64> = points.iter().filter_map(|p| p.remnant).collect();
    Ok(thresholds
        .iter()
        .map(|&t| {
            let x: Vec<f64> = points
                .iter()
                .map(|p| {
                    let per_cell: Vec<f64> = p.rv.iter().map(|rv| nd_of(rv, t)).collect();
                    stats::mean(&per_cell)
                })
                .collect();
            ThresholdRow {
                threshold: t,
                mir: SweepFit::from(regress(&x, &mir_y)),
                remnant_pmi: with_pmi.then(|| SweepFit::from(regress(&x, &remnant_y))),
                nd_percent: x,
            }
        })
        .collect())
}

fn nd_of(rv: &[Option<f64>], t: f64) -> f64 {
    if rv.is_empty() {
        return 0.0;
    }
    100.0 * rv.iter().filter(|r| matches!(r, Some(v) if *v < t)).count() as f64 / rv.len() as f64
}
