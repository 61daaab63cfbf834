//! Benchmark orchestration: algorithm × dataset grids, regressions across
//! algorithms, tolerance sweeps, timing runs and plot files.

mod config;
mod plot;
mod regress;
mod run;
mod svg;
mod sweep;

pub use config::{AlgorithmEntry, BenchConfig, DatasetSource, Metric};
pub use plot::{emit_plots, PlotKind, PlotSource, ELLIPSE_STD, SCATTER_THRESHOLD};
pub use regress::{regress, threshold_sweep, RegressionResult, SweepFit, ThresholdRow};
pub use run::{
    report_path, run_benchmark, AlgorithmSummary, BenchReport, CellMetrics, CellReport, CellTiming,
    DatasetOrdering, DecompositionSummary, MeanStd, Provenance,
};
pub use sweep::{
    time_algorithms, tolerance_sweep, HostInfo, ReferenceLine, TimingReport, TimingRow, ToleranceCell,
    ToleranceMean, ToleranceSweep,
};

/// How regression significance is computed, as recorded in reports.
pub const SIGNIFICANCE: &str = "two-sided t-test p-value of the OLS slope (n - 2 degrees of freedom)";
