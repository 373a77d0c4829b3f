//! `spmm-bench`: generate batches of sparse matrices (or load them from
//! MatrixMarket files), run the sequential and batched SpMM paths, and emit
//! a CSV/JSON throughput report. `--explain` prints the launch plan instead
//! of executing.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use spmm_batch::bench::{
    explain_plan, run_benchmark, BenchConfig, BenchReport, Mode, ReportFormat, SizeSpec,
};
use spmm_batch::engine::Algorithm;
use spmm_batch::kernels::DEFAULT_SCRATCHPAD_BYTES;
use spmm_batch::planner::DEFAULT_THREADS_PER_BLOCK;
use spmm_batch::Precision;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlgoArg {
    Baseline,
    SwaSt,
    SwaCsr,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Baseline => Algorithm::Baseline,
            AlgoArg::SwaSt => Algorithm::SwaSt,
            AlgoArg::SwaCsr => Algorithm::SwaCsr,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Sequential,
    Batched,
    Both,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Sequential => Mode::Sequential,
            ModeArg::Batched => Mode::Batched,
            ModeArg::Both => Mode::Both,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

impl From<PrecisionArg> for Precision {
    fn from(p: PrecisionArg) -> Self {
        match p {
            PrecisionArg::F32 => Precision::Single,
            PrecisionArg::F64 => Precision::Double,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

/// Batched SpMM benchmark harness.
#[derive(Debug, Parser)]
#[command(name = "spmm-bench", version, about)]
struct Args {
    /// Number of sparse matrices in the batch (ignored with --input).
    #[arg(long, default_value_t = 100)]
    batch_size: usize,

    /// Square matrix size: a single value or an inclusive MIN:MAX range.
    #[arg(long, default_value = "50")]
    dim: String,

    /// Nonzeros per row: a single value or an inclusive MIN:MAX range.
    #[arg(long = "nnz-per-row", default_value = "3")]
    nnz_per_row: String,

    /// Dense column counts to sweep, comma separated.
    #[arg(long = "nb", value_delimiter = ',', default_value = "8,64,512")]
    nb: Vec<usize>,

    /// Kernel to run; repeat the flag to benchmark several.
    #[arg(long = "algo", value_enum)]
    algo: Vec<AlgoArg>,

    /// Execution paths to time.
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,

    /// Timed repetitions per configuration (one untimed warm-up precedes).
    #[arg(long, default_value_t = 10)]
    repeats: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, value_enum, default_value = "f32")]
    precision: PrecisionArg,

    /// Scratchpad capacity per work unit, in bytes.
    #[arg(long = "budget-bytes", default_value_t = DEFAULT_SCRATCHPAD_BYTES)]
    budget_bytes: usize,

    /// Emulated thread-block size (multiple of 32).
    #[arg(long = "threads-per-block", default_value_t = DEFAULT_THREADS_PER_BLOCK)]
    threads_per_block: usize,

    /// Write the report here instead of stdout.
    #[arg(long = "out")]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,

    /// Print the launch plan for each swept n_B and exit without running.
    #[arg(long)]
    explain: bool,

    /// MatrixMarket file forming one batch item; repeatable. Overrides the
    /// generator parameters.
    #[arg(long = "input")]
    input: Vec<PathBuf>,
}

const USAGE_ERROR: u8 = 2;

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(USAGE_ERROR)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

enum CliError {
    Usage(String),
    Runtime(String),
}

fn config_from_args(args: &Args) -> Result<BenchConfig, CliError> {
    let usage = |e: spmm_batch::Error| CliError::Usage(e.to_string());
    let dim: SizeSpec = args.dim.parse().map_err(usage)?;
    let nnz: SizeSpec = args.nnz_per_row.parse().map_err(usage)?;
    let algorithms: Vec<Algorithm> = if args.algo.is_empty() {
        vec![Algorithm::Baseline, Algorithm::SwaSt, Algorithm::SwaCsr]
    } else {
        args.algo.iter().map(|&a| a.into()).collect()
    };

    let mut config = BenchConfig::new(args.batch_size, dim, nnz);
    config.n_b_values = args.nb.clone();
    config.algorithms = algorithms;
    config.mode = args.mode.into();
    config.repeats = args.repeats;
    config.seed = args.seed;
    config.precision = args.precision.into();
    config.scratchpad_budget_bytes = args.budget_bytes;
    config.threads_per_block = args.threads_per_block;
    config.inputs = args.input.clone();
    config.validate().map_err(usage)?;
    Ok(config)
}

fn run(args: Args) -> Result<(), CliError> {
    let config = config_from_args(&args)?;

    if args.explain {
        for &n_b in &config.n_b_values {
            let plan = explain_plan(&config, n_b).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!(
                "{}",
                serde_json_pretty(&plan).map_err(|e| CliError::Runtime(e.to_string()))?
            );
        }
        return Ok(());
    }

    let report = run_benchmark(&config).map_err(|e| match e {
        spmm_batch::Error::Parameter(_) => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    })?;
    emit(&report, &args).map_err(|e| CliError::Runtime(e.to_string()))
}

fn emit(report: &BenchReport, args: &Args) -> Result<(), spmm_batch::Error> {
    match &args.out {
        Some(path) => report.write_to_path(path, args.format.into()),
        None => {
            let text = match args.format {
                FormatArg::Csv => report.to_csv_string()?,
                FormatArg::Json => report.to_json_string()?,
            };
            print!("{text}");
            Ok(())
        }
    }
}

fn serde_json_pretty(v: &serde_json::Value) -> Result<String, spmm_batch::Error> {
    Ok(serde_json::to_string_pretty(v)?)
}
