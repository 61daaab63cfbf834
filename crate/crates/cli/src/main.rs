//! `icabench`: synthesize data, run decompositions, score them and run benchmark grids.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use icabench_core::decompositions::{import_decomposition, Algorithm, Decomposition};
use icabench_core::dipfit::{default_thresholds, dipolarity, FitOptions, HeadModel, Montage};
use icabench_core::harness::{
    emit_plots, run_benchmark, threshold_sweep, time_algorithms, tolerance_sweep, BenchConfig, BenchReport,
    PlotKind, PlotSource, TimingReport, ToleranceSweep,
};
use icabench_core::infometrics::{pmi_matrix, Binning, BinningStrategy, DEFAULT_BINS};
use icabench_core::mir::{mir, remnant_pmi};
use icabench_core::signals::{
    load_dataset, read_matrix_csv, save_dataset, synth_dataset, write_matrix_csv, DataFormat, Dataset, Mixing,
    SourceKind, SynthSpec,
};

const THREADS_ENV: &str = "ICABENCH_THREADS";

#[derive(Parser)]
#[command(name = "icabench", version, about = "Evaluate blind source separation by mutual information reduction and dipolarity")]
struct Cli {
    /// Worker threads (overridden by ICABENCH_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic mixture with known ground truth
    Synth(SynthArgs),
    /// Run one decomposition and write its unmixing matrix
    Decompose(DecomposeArgs),
    /// Score an unmixing matrix or a set of component maps
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Run benchmark grids
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Plots and regressions from saved reports
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Copy, Clone, ValueEnum)]
enum BinningArg {
    EqualWidth,
    EqualOccupancy,
}

impl From<BinningArg> for BinningStrategy {
    fn from(b: BinningArg) -> Self {
        match b {
            BinningArg::EqualWidth => BinningStrategy::EqualWidth,
            BinningArg::EqualOccupancy => BinningStrategy::EqualOccupancy,
        }
    }
}

#[derive(Args)]
struct BinningArgs {
    /// Histogram bins per signal
    #[arg(long, default_value_t = DEFAULT_BINS)]
    bins: usize,
    #[arg(long, value_enum, default_value = "equal-width")]
    binning: BinningArg,
}

impl BinningArgs {
    fn binning(&self) -> Binning {
        Binning::new(self.bins, self.binning.into())
    }
}

#[derive(Args)]
struct DataArgs {
    /// Recording: CSV (labels header, one row per sample) or binary payload with a `.json` header
    #[arg(long)]
    data: PathBuf,
    /// Sampling rate of a CSV recording
    #[arg(long)]
    srate: Option<f64>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let format = DataFormat::from_path(&self.data, self.srate.unwrap_or(f64::NAN));
        if matches!(format, DataFormat::Csv { .. }) && self.srate.is_none() {
            bail!("--srate is required for CSV recordings");
        }
        load_dataset(&self.data, format).with_context(|| format!("loading {}", self.data.display()))
    }
}

#[derive(Copy, Clone, ValueEnum)]
enum MixingArg {
    RandomOrthogonal,
    RandomGeneral,
    Dipolar,
}

#[derive(Args)]
struct SynthArgs {
    /// Synthesis spec JSON; replaces the flags below
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    sources: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Source distributions, cycled over the sources
    #[arg(long, value_delimiter = ',', default_value = "laplacian")]
    kind: Vec<String>,
    #[arg(long, value_enum, default_value = "random-general")]
    mixing: MixingArg,
    /// Additive Gaussian sensor noise, dB below the mean channel power
    #[arg(long)]
    noise_db: Option<f64>,
    #[arg(long, default_value_t = 250.0)]
    srate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    id: Option<String>,
    /// Also write the true mixing matrix as CSV
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Output recording; `.csv` writes CSV, anything else binary plus a JSON header
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DecomposeArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Algorithm JSON, e.g. {"algorithm": "picard", "tol": 1e-7}
    #[arg(long, conflicts_with = "algorithm")]
    config: Option<PathBuf>,
    /// Algorithm with default parameters
    #[arg(long, default_value = "picard")]
    algorithm: String,
    /// Stopping tolerance override
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Full decomposition JSON (unmixing, mixing and diagnostics)
    #[arg(long)]
    report: Option<PathBuf>,
    /// Unmixing matrix CSV
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Mutual information reduction of an unmixing matrix
    Mir {
        #[command(flatten)]
        data: DataArgs,
        /// Unmixing matrix CSV (or raw binary)
        #[arg(long)]
        unmixing: PathBuf,
        #[command(flatten)]
        binning: BinningArgs,
        /// Report JSON; printed when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise mutual information of channels, or of components with remnant PMI
    Pmi {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        unmixing: Option<PathBuf>,
        #[command(flatten)]
        binning: BinningArgs,
        /// Matrix output; `.csv` writes the bare matrix, anything else JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Equivalent dipole fits of component maps
    Dipolarity {
        /// Mixing matrix CSV, one column per component map
        #[arg(long, conflicts_with = "unmixing", required_unless_present = "unmixing")]
        mixing: Option<PathBuf>,
        /// Unmixing matrix CSV, inverted to get the maps
        #[arg(long)]
        unmixing: Option<PathBuf>,
        /// Electrode CSV (label,x_mm,y_mm,z_mm); a spherical cap when omitted
        #[arg(long)]
        montage: Option<PathBuf>,
        /// Head model JSON
        #[arg(long)]
        head: Option<PathBuf>,
        /// Electrode labels left out of the fits
        #[arg(long, value_delimiter = ',')]
        exclude: Vec<String>,
        /// Residual-variance thresholds for ND%
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
        /// Report JSON; printed when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// Benchmark config JSON
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long, value_enum)]
    binning: Option<BinningArg>,
    /// Output directory (overrides the config's)
    #[arg(long)]
    out: Option<PathBuf>,
}

impl BenchArgs {
    fn load(&self, threads: Option<usize>) -> Result<BenchConfig> {
        let mut cfg = BenchConfig::load(&self.config)?;
        if self.seed.is_some() {
            cfg.seed = self.seed;
        }
        if let Some(b) = self.bins {
            cfg.bins = b;
        }
        if let Some(b) = self.binning {
            cfg.binning = b.into();
        }
        if self.out.is_some() {
            cfg.output_dir = self.out.clone();
        }
        if threads.is_some() {
            cfg.threads = threads;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Every algorithm on every dataset; writes report.json and cells.csv
    Run(BenchArgs),
    /// MIR of one algorithm across stopping tolerances; writes tolerance.json
    SweepTolerance {
        #[command(flatten)]
        args: BenchArgs,
        /// Configured algorithm label
        #[arg(long, default_value = "picard")]
        algorithm: String,
        /// Strictly descending tolerances
        #[arg(long, value_delimiter = ',', default_value = "1e-1,1e-2,1e-3,1e-4,1e-5,1e-6,1e-7,1e-8")]
        tolerances: Vec<f64>,
    },
    /// Serial wall-clock timing over repetitions; writes timing.json
    Time(BenchArgs),
}

#[derive(Subcommand)]
enum ReportCommand {
    /// SVG plots with CSVs of the plotted values
    Plot {
        /// A bench, timing or tolerance report JSON
        #[arg(long)]
        report: PathBuf,
        /// Plot kind, or all kinds the report supports
        #[arg(long, default_value = "all")]
        kind: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Regressions of MIR and remnant PMI on ND% across rv thresholds
    Regress {
        /// Bench report JSON with the dipolarity metric
        #[arg(long)]
        report: PathBuf,
        /// Defaults to the report's thresholds
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
        /// Table JSON; printed when omitted
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(n) => {
            eprintln!("{n} cells failed");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn threads(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n = v.trim().parse().with_context(|| format!("{THREADS_ENV}={v:?} is not a thread count"))?;
            Ok(Some(n))
        }
        Err(_) => Ok(flag),
    }
}

/// Runs the command; returns the number of failed cells.
fn run(cli: Cli) -> Result<usize> {
    let threads = threads(cli.threads)?;
    if let Some(n) = threads {
        if n == 0 {
            bail!("threads must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Synth(a) => synth(a).map(|_| 0),
        Command::Decompose(a) => decompose(a).map(|_| 0),
        Command::Metrics(m) => metrics(m).map(|_| 0),
        Command::Bench(b) => bench(b, threads),
        Command::Report(r) => report(r).map(|_| 0),
    }
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = match &a.config {
        Some(path) => read_json(path)?,
        None => {
            let kinds = a
                .kind
                .iter()
                .map(|k| serde_json::from_value(serde_json::Value::String(k.clone())))
                .collect::<Result<Vec<SourceKind>, _>>()
                .context("unknown source kind (laplacian, uniform, gaussian, logistic, bimodal)")?;
            let mut spec = SynthSpec::new(a.sources, a.samples, kinds[0], a.seed)
                .with_kinds((0..a.sources).map(|i| kinds[i % kinds.len()]).collect())
                .with_mixing(match a.mixing {
                    MixingArg::RandomOrthogonal => Mixing::RandomOrthogonal,
                    MixingArg::RandomGeneral => Mixing::RandomGeneral,
                    MixingArg::Dipolar => Mixing::Dipolar,
                });
            spec.srate = a.srate;
            if let Some(db) = a.noise_db {
                spec = spec.with_noise_db(db);
            }
            if let Some(id) = &a.id {
                spec = spec.with_id(id.clone());
            }
            spec
        }
    };
    let (ds, truth) = synth_dataset(&spec)?;
    save_dataset(&ds, &a.out, DataFormat::from_path(&a.out, ds.srate()))?;
    if let Some(path) = &a.truth {
        write_matrix_csv(&truth.mixing, path)?;
    }
    eprintln!("{}: {} channels x {} samples -> {}", ds.id(), ds.n_channels(), ds.n_samples(), a.out.display());
    Ok(())
}

fn decompose(a: DecomposeArgs) -> Result<()> {
    let ds = a.data.load()?;
    let mut alg: Algorithm = match &a.config {
        Some(path) => read_json(path)?,
        None => serde_json::from_value(serde_json::json!({ "algorithm": a.algorithm }))
            .with_context(|| format!("unknown algorithm {:?}", a.algorithm))?,
    };
    if let Some(tol) = a.tol {
        if alg.tolerance().is_none() {
            bail!("{} has no stopping tolerance", alg.id());
        }
        alg = alg.with_tolerance(tol);
    }
    if let Some(seed) = a.seed {
        alg = alg.with_seed(seed);
    }
    let dec = alg.run(&ds)?;
    dec.export_unmixing(&a.out)?;
    if let Some(path) = &a.report {
        write_json(&dec, Some(path))?;
    }
    eprintln!(
        "{}: {} components, {} iterations, converged {}, {:.3} s",
        dec.algorithm_id,
        dec.n_components(),
        dec.iterations_used,
        dec.converged,
        dec.wall_time_sec
    );
    for w in &dec.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn unmixing_for(path: &Path, ds: &Dataset) -> Result<Decomposition> {
    import_decomposition(path, ds).with_context(|| format!("loading {}", path.display()))
}

fn metrics(cmd: MetricsCommand) -> Result<()> {
    match cmd {
        MetricsCommand::Mir { data, unmixing, binning, out } => {
            let ds = data.load()?;
            let dec = unmixing_for(&unmixing, &ds)?;
            let mut report = mir(&ds, &dec.w, binning.binning())?;
            report.algorithm_id = dec.algorithm_id;
            write_json(&report, out.as_deref())
        }
        MetricsCommand::Pmi { data, unmixing, binning, out } => {
            let ds = data.load()?;
            let (matrix, remnant) = match &unmixing {
                Some(path) => {
                    let dec = unmixing_for(path, &ds)?;
                    let remnant = remnant_pmi(&ds, &dec.w, binning.binning())?;
                    (pmi_matrix(&dec.activations(&ds), binning.binning())?, Some(remnant))
                }
                None => (pmi_matrix(&ds.centered(), binning.binning())?, None),
            };
            if out.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
                matrix.write_csv(&out)?;
            } else {
                fs::write(&out, matrix.to_json()? + "\n").with_context(|| format!("writing {}", out.display()))?;
            }
            eprintln!("mean pairwise mutual information {:.6} bits", matrix.mean());
            if let Some(r) = remnant {
                write_json(&r, None)?;
            }
            Ok(())
        }
        MetricsCommand::Dipolarity { mixing, unmixing, montage, head, exclude, thresholds, out } => {
            let a = match (&mixing, &unmixing) {
                (Some(path), _) => read_matrix_csv(path)?,
                (None, Some(path)) => Decomposition::from_unmixing(read_matrix_csv(path)?, "import", &())?.a,
                (None, None) => bail!("one of --mixing or --unmixing is required"),
            };
            let head = match &head {
                Some(path) => HeadModel::load(path)?,
                None => HeadModel::default(),
            };
            let exclude: BTreeSet<String> = exclude.into_iter().collect();
            let montage = match &montage {
                Some(path) => Montage::from_csv(path, exclude)?,
                None => {
                    let cap = Montage::spherical_cap(a.nrows(), head.outer_radius(), 0);
                    Montage::new(cap.electrodes, exclude)?
                }
            };
            let thresholds = if thresholds.is_empty() { default_thresholds() } else { thresholds };
            let report = dipolarity(&a, &montage, &head, &FitOptions::default(), &thresholds)?;
            for f in &report.failures {
                eprintln!("warning: component {}: {}", f.component, f.message);
            }
            write_json(&report, out.as_deref())
        }
    }
}

fn bench(cmd: BenchCommand, threads: Option<usize>) -> Result<usize> {
    match cmd {
        BenchCommand::Run(args) => {
            let cfg = args.load(threads)?;
            let report = run_benchmark(&cfg)?;
            print_summary(&report);
            if let Some(dir) = &cfg.output_dir {
                eprintln!("wrote {}", dir.display());
            } else {
                write_json(&report, None)?;
            }
            Ok(report.n_errors)
        }
        BenchCommand::SweepTolerance { args, algorithm, tolerances } => {
            let cfg = args.load(threads)?;
            let sweep = tolerance_sweep(&cfg, &algorithm, &tolerances)?;
            for m in &sweep.means {
                match m.mir_bits_per_sample {
                    Some(v) => println!("{:>8.0e}  {:.6} ± {:.6} bits/sample", m.tolerance, v.mean, v.std),
                    None => println!("{:>8.0e}  -", m.tolerance),
                }
            }
            write_json(&sweep, cfg.output_dir.map(|d| d.join("tolerance.json")).as_deref())?;
            Ok(sweep.n_errors)
        }
        BenchCommand::Time(args) => {
            let cfg = args.load(threads)?;
            let timing = time_algorithms(&cfg)?;
            for (alg, t) in &timing.per_algorithm {
                match t {
                    Some(t) => println!("{alg:<20} {:.4} ± {:.4} s", t.mean, t.std),
                    None => println!("{alg:<20} -"),
                }
            }
            write_json(&timing, cfg.output_dir.map(|d| d.join("timing.json")).as_deref())?;
            Ok(timing.n_errors)
        }
    }
}

fn print_summary(report: &BenchReport) {
    println!("{:<20} {:>14} {:>14} {:>12}", "algorithm", "mir bits/samp", "mir kbits/s", "remnant pmi%");
    for s in &report.summary {
        let cell = |v: Option<f64>| v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
        println!(
            "{:<20} {:>14} {:>14} {:>12}",
            s.algorithm,
            cell(s.mir_bits_per_sample.map(|m| m.mean)),
            cell(s.mir_kbits_per_sec.map(|m| m.mean)),
            cell(s.remnant_pmi_percent.map(|m| m.mean))
        );
    }
    for c in report.cells.iter().filter(|c| c.error.is_some()) {
        eprintln!("cell {} / {}: {}", c.algorithm, c.dataset, c.error.as_deref().unwrap_or_default());
    }
}

/// A report of any kind the plotter understands.
enum AnyReport {
    Bench(BenchReport),
    Timing(TimingReport),
    Tolerance(ToleranceSweep),
}

impl AnyReport {
    fn load(path: &Path) -> Result<Self> {
        let value: serde_json::Value = read_json(path)?;
        let has = |k: &str| value.get(k).is_some();
        if has("provenance") {
            Ok(AnyReport::Bench(serde_json::from_value(value)?))
        } else if has("host") {
            Ok(AnyReport::Timing(serde_json::from_value(value)?))
        } else if has("references") {
            Ok(AnyReport::Tolerance(serde_json::from_value(value)?))
        } else {
            bail!("{} is not a bench, timing or tolerance report", path.display())
        }
    }

    fn source(&self) -> PlotSource<'_> {
        match self {
            AnyReport::Bench(r) => PlotSource::Bench(r),
            AnyReport::Timing(r) => PlotSource::Timing(r),
            AnyReport::Tolerance(r) => PlotSource::Tolerance(r),
        }
    }

    fn kinds(&self) -> Vec<PlotKind> {
        match self {
            AnyReport::Bench(_) => PlotKind::ALL.iter().copied().filter(|k| *k != PlotKind::Tolerance).collect(),
            AnyReport::Timing(_) => vec![PlotKind::Runtime],
            AnyReport::Tolerance(_) => vec![PlotKind::Tolerance],
        }
    }
}

fn report(cmd: ReportCommand) -> Result<()> {
    match cmd {
        ReportCommand::Plot { report, kind, out } => {
            let loaded = AnyReport::load(&report)?;
            let all = kind == "all";
            let kinds = if all { loaded.kinds() } else { vec![kind.parse::<PlotKind>()?] };
            for k in kinds {
                match emit_plots(loaded.source(), k, &out) {
                    Ok(files) => {
                        for f in files {
                            println!("{}", f.display());
                        }
                    }
                    Err(icabench_core::Error::MissingMetric(m)) if all => eprintln!("skipped {k}: {m}"),
                    Err(e) => return Err(e.into()),
                }
            }
            Ok(())
        }
        ReportCommand::Regress { report, thresholds, out } => {
            let report = BenchReport::load(&report)?;
            let thresholds = if thresholds.is_empty() { report.provenance.nd_thresholds.clone() } else { thresholds };
            let rows = threshold_sweep(&report, &thresholds)?;
            write_json(&rows, out.as_deref())
        }
    }
}
