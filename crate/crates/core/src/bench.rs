//! Benchmark harness: generate batches, time sequential vs batched
//! execution, compute throughput, and emit CSV/JSON reports.
//!
//! Throughput is reported as `2 * nnz * n_B / mean_seconds` FLOPS, where
//! `nnz` sums over every item in the batch. Each configuration is warmed up
//! once and then timed `repeats` times; the mean wall time goes into the
//! report. Batched timings include the engine's descriptor-table
//! construction. All non-timing report fields are deterministic for a fixed
//! seed.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dense::DenseMatrix;
use crate::engine::{
    batched_spmm, sequential_spmm, Algorithm, BatchedSpmmRequest, DenseInput, LaunchCounter,
};
use crate::error::{Error, Result};
use crate::io::load_matrix_market;
use crate::planner::{plan_batch, LaunchPlan, PlanInput};
use crate::scalar::{Precision, Scalar};
use crate::sparse::{coo_to_csr, random_sparse, CsrMatrix, SparseBatch, SparseTensorMatrix};

/// A size parameter: one value, or an inclusive range sampled per item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SizeSpec {
    Fixed(usize),
    Range(usize, usize),
}

impl SizeSpec {
    pub fn validate(&self, name: &str) -> Result<()> {
        match *self {
            SizeSpec::Fixed(_) => Ok(()),
            SizeSpec::Range(lo, hi) if lo <= hi => Ok(()),
            SizeSpec::Range(lo, hi) => {
                Err(Error::parameter(format!("{name} range {lo}:{hi} is empty")))
            }
        }
    }

    pub fn is_range(&self) -> bool {
        matches!(self, SizeSpec::Range(lo, hi) if lo != hi)
    }

    /// Draws a value; a fixed spec (or point range) consumes no randomness,
    /// so collapsing a range to a point reproduces the fixed-spec batch.
    fn sample(&self, rng: &mut impl Rng) -> usize {
        match *self {
            SizeSpec::Fixed(v) => v,
            SizeSpec::Range(lo, hi) if lo == hi => lo,
            SizeSpec::Range(lo, hi) => rng.gen_range(lo..=hi),
        }
    }
}

impl fmt::Display for SizeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            SizeSpec::Fixed(v) => write!(f, "{v}"),
            SizeSpec::Range(lo, hi) => write!(f, "{lo}:{hi}"),
        }
    }
}

impl FromStr for SizeSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parse = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| Error::parameter(format!("bad size value {t:?}")))
        };
        match s.split_once(':') {
            Some((lo, hi)) => {
                let spec = SizeSpec::Range(parse(lo)?, parse(hi)?);
                spec.validate("size")?;
                Ok(spec)
            }
            None => Ok(SizeSpec::Fixed(parse(s)?)),
        }
    }
}

/// Which execution paths a benchmark row covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sequential,
    Batched,
    Both,
}

impl Mode {
    fn paths(self) -> &'static [ExecPath] {
        match self {
            Mode::Sequential => &[ExecPath::Sequential],
            Mode::Batched => &[ExecPath::Batched],
            Mode::Both => &[ExecPath::Sequential, ExecPath::Batched],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ExecPath {
    Sequential,
    Batched,
}

impl ExecPath {
    fn label(self) -> &'static str {
        match self {
            ExecPath::Sequential => "sequential",
            ExecPath::Batched => "batched",
        }
    }
}

/// One benchmark invocation: matrix parameterization, sweep values, and
/// execution settings.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub batch_size: usize,
    pub dim: SizeSpec,
    pub nnz_per_row: SizeSpec,
    pub n_b_values: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    pub mode: Mode,
    pub repeats: usize,
    pub seed: u64,
    pub precision: Precision,
    pub scratchpad_budget_bytes: usize,
    pub threads_per_block: usize,
    /// MatrixMarket files; when nonempty they form the batch and the
    /// generator parameters are ignored.
    pub inputs: Vec<PathBuf>,
}

impl BenchConfig {
    /// A minimal valid configuration; adjust fields as needed.
    pub fn new(batch_size: usize, dim: SizeSpec, nnz_per_row: SizeSpec) -> Self {
        Self {
            batch_size,
            dim,
            nnz_per_row,
            n_b_values: vec![8, 64, 512],
            algorithms: vec![Algorithm::Baseline, Algorithm::SwaSt, Algorithm::SwaCsr],
            mode: Mode::Both,
            repeats: 10,
            seed: 0,
            precision: Precision::Single,
            scratchpad_budget_bytes: crate::kernels::DEFAULT_SCRATCHPAD_BYTES,
            threads_per_block: crate::planner::DEFAULT_THREADS_PER_BLOCK,
            inputs: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            return Err(Error::parameter("repeats must be >= 1"));
        }
        if self.inputs.is_empty() && self.batch_size == 0 {
            return Err(Error::parameter("batch_size must be >= 1"));
        }
        if self.n_b_values.is_empty() || self.n_b_values.contains(&0) {
            return Err(Error::parameter("n_b values must be nonempty and >= 1"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::parameter("at least one algorithm required"));
        }
        self.dim.validate("dim")?;
        self.nnz_per_row.validate("nnz_per_row")?;
        Ok(())
    }

    fn dim_label(&self) -> String {
        if self.inputs.is_empty() {
            self.dim.to_string()
        } else {
            "input".to_string()
        }
    }

    fn nnz_label(&self) -> String {
        if self.inputs.is_empty() {
            self.nnz_per_row.to_string()
        } else {
            "input".to_string()
        }
    }
}

/// One timed configuration. The leading columns are the report schema;
/// `mode`, `subwarp`, `total_nnz`, and `work_units` are appended so rows are
/// self-describing (the FLOPS figure recomputes from `total_nnz`, `n_b`, and
/// `mean_seconds` alone).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub algorithm: String,
    pub batch_size: usize,
    pub dim_spec: String,
    pub nnz_spec: String,
    pub n_b: usize,
    pub mean_seconds: f64,
    pub flops: f64,
    pub launches: u64,
    pub case: String,
    pub p: usize,
    pub mode: String,
    pub subwarp: usize,
    pub total_nnz: usize,
    pub work_units: usize,
}

/// Report: one record per (algorithm, n_B, execution path).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub records: Vec<BenchRecord>,
}

impl BenchReport {
    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.records {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn from_csv_str(s: &str) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(s.as_bytes());
        let records = reader
            .deserialize::<BenchRecord>()
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Self { records })
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    /// Writes the report in the given format ("csv" or "json").
    pub fn write_to_path(&self, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
        let text = match format {
            ReportFormat::Csv => self.to_csv_string()?,
            ReportFormat::Json => self.to_json_string()?,
        };
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::parameter(format!(
                "unknown format {other:?} (expected csv or json)"
            ))),
        }
    }
}

/// Per-item generation parameters, derived deterministically from the seed.
#[derive(Debug, Clone, Copy)]
struct ItemShape {
    dim: usize,
    nnz_per_row: usize,
    matrix_seed: u64,
    dense_seed: u64,
}

fn sample_batch_shapes(config: &BenchConfig) -> Vec<ItemShape> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    (0..config.batch_size)
        .map(|_| {
            let dim = config.dim.sample(&mut rng);
            // Density cannot exceed the row length.
            let nnz_per_row = config.nnz_per_row.sample(&mut rng).min(dim);
            ItemShape {
                dim,
                nnz_per_row,
                matrix_seed: rng.gen(),
                dense_seed: rng.gen(),
            }
        })
        .collect()
}

/// Runs the benchmark described by `config` and returns the report.
///
/// The batch is regenerated deterministically from the seed: fixed-size
/// specs give a homogeneous batch, range specs sample each item's `dim` and
/// `nnz/row` uniformly.
pub fn run_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    config.validate()?;
    match config.precision {
        Precision::Single => run_typed::<f32>(config),
        Precision::Double => run_typed::<f64>(config),
    }
}

/// As [`run_benchmark`], but insists that at least one of `dim` and
/// `nnz/row` is a genuine range, i.e. the batch mixes sizes or densities.
pub fn run_mixed_benchmark(config: &BenchConfig) -> Result<BenchReport> {
    if !config.dim.is_range() && !config.nnz_per_row.is_range() {
        return Err(Error::parameter(
            "mixed benchmark requires a dim or nnz/row range (MIN:MAX)",
        ));
    }
    run_benchmark(config)
}

fn generate_items<T: Scalar>(config: &BenchConfig) -> Result<Vec<SparseTensorMatrix<T>>> {
    if config.inputs.is_empty() {
        sample_batch_shapes(config)
            .iter()
            .map(|s| random_sparse(s.dim, s.nnz_per_row, s.matrix_seed, true))
            .collect()
    } else {
        config.inputs.iter().map(load_matrix_market).collect()
    }
}

fn dense_seeds(config: &BenchConfig) -> Vec<u64> {
    if config.inputs.is_empty() {
        sample_batch_shapes(config)
            .iter()
            .map(|s| s.dense_seed)
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        (0..config.inputs.len()).map(|_| rng.gen()).collect()
    }
}

fn run_typed<T: Scalar>(config: &BenchConfig) -> Result<BenchReport> {
    let st_items: Vec<SparseTensorMatrix<T>> = generate_items(config)?;
    let needs_csr = config.algorithms.contains(&Algorithm::SwaCsr);
    let csr_items: Vec<CsrMatrix<T>> = if needs_csr {
        st_items.iter().map(coo_to_csr).collect()
    } else {
        Vec::new()
    };
    let seeds = dense_seeds(config);
    let total_nnz: usize = st_items.iter().map(|m| m.nnz()).sum();

    let mut records = Vec::new();
    for &n_b in &config.n_b_values {
        let dense: Vec<DenseMatrix<T>> = st_items
            .iter()
            .zip(&seeds)
            .map(|(m, &s)| DenseMatrix::random(m.cols(), n_b, s.wrapping_add(n_b as u64)))
            .collect();
        let dense_refs: Vec<&DenseMatrix<T>> = dense.iter().collect();

        for &algorithm in &config.algorithms {
            let batch = match algorithm {
                Algorithm::Baseline | Algorithm::SwaSt => {
                    SparseBatch::from_sparse_tensor(st_items.iter().collect(), n_b)?
                }
                Algorithm::SwaCsr => SparseBatch::from_csr(csr_items.iter().collect(), n_b)?,
            };
            let req = BatchedSpmmRequest {
                batch,
                dense: DenseInput::PerItem(dense_refs.clone()),
                algorithm,
            };
            let plan = plan_for(config, &req)?;

            for &path in config.mode.paths() {
                let timing = time_path(&req, &plan, path, config.repeats)?;
                records.push(BenchRecord {
                    algorithm: algorithm.to_string(),
                    batch_size: st_items.len(),
                    dim_spec: config.dim_label(),
                    nnz_spec: config.nnz_label(),
                    n_b,
                    mean_seconds: timing.mean_seconds,
                    flops: 2.0 * total_nnz as f64 * n_b as f64 / timing.mean_seconds,
                    launches: timing.launches_per_run,
                    case: plan.case.name().to_string(),
                    p: plan.p,
                    mode: path.label().to_string(),
                    subwarp: plan.subwarp.width(),
                    total_nnz,
                    work_units: plan.work_units.len(),
                });
            }
        }
    }
    Ok(BenchReport { records })
}

fn plan_for<T: Scalar>(
    config: &BenchConfig,
    req: &BatchedSpmmRequest<'_, T>,
) -> Result<LaunchPlan> {
    let input = PlanInput::new(
        req.algorithm.layout(),
        req.batch.item_rows(),
        req.batch.dense_cols(),
    )?
    .with_element_bytes(config.precision.element_bytes())?
    .with_budget(config.scratchpad_budget_bytes)?
    .with_threads_per_block(config.threads_per_block)?;
    Ok(plan_batch(&input))
}

struct Timing {
    mean_seconds: f64,
    launches_per_run: u64,
}

fn time_path<T: Scalar>(
    req: &BatchedSpmmRequest<'_, T>,
    plan: &LaunchPlan,
    path: ExecPath,
    repeats: usize,
) -> Result<Timing> {
    // Untimed warm-up; its counter delta is the per-run launch count.
    let mut counter = LaunchCounter::new();
    match path {
        ExecPath::Sequential => drop(sequential_spmm(req, &mut counter)?),
        ExecPath::Batched => drop(batched_spmm(req, plan, &mut counter)?),
    }
    let launches_per_run = counter.logical_launches();

    let start = Instant::now();
    for _ in 0..repeats {
        match path {
            ExecPath::Sequential => drop(sequential_spmm(req, &mut counter)?),
            ExecPath::Batched => drop(batched_spmm(req, plan, &mut counter)?),
        }
    }
    let total = start.elapsed();
    Ok(Timing {
        mean_seconds: (total.as_secs_f64() / repeats as f64).max(f64::MIN_POSITIVE),
        launches_per_run,
    })
}

/// Serializes the launch plans the configuration would execute at `n_b`,
/// without running anything.
pub fn explain_plan(config: &BenchConfig, n_b: usize) -> Result<serde_json::Value> {
    config.validate()?;
    if n_b == 0 {
        return Err(Error::parameter("n_b must be >= 1"));
    }
    let batch_rows: Vec<usize> = if config.inputs.is_empty() {
        sample_batch_shapes(config).iter().map(|s| s.dim).collect()
    } else {
        config
            .inputs
            .iter()
            .map(|p| load_matrix_market::<f32>(p).map(|m| m.rows()))
            .collect::<Result<_>>()?
    };
    let plans: Vec<serde_json::Value> = config
        .algorithms
        .iter()
        .map(|&algorithm| -> Result<serde_json::Value> {
            let input = PlanInput::new(algorithm.layout(), batch_rows.clone(), n_b)?
                .with_element_bytes(config.precision.element_bytes())?
                .with_budget(config.scratchpad_budget_bytes)?
                .with_threads_per_block(config.threads_per_block)?;
            let plan = plan_batch(&input);
            Ok(json!({
                "algorithm": algorithm.to_string(),
                "case": plan.case.name(),
                "subwarp": plan.subwarp.width(),
                "p": plan.p,
                "block_width": plan.block_width,
                "total_threads": plan.total_threads,
                "total_blocks": plan.total_blocks,
                "work_units": plan.work_units.len(),
                "plan": plan.to_json(),
            }))
        })
        .collect::<Result<_>>()?;
    Ok(json!({ "n_b": n_b, "batch_size": batch_rows.len(), "plans": plans }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> BenchConfig {
        let mut c = BenchConfig::new(3, SizeSpec::Fixed(10), SizeSpec::Fixed(2));
        c.n_b_values = vec![4, 8];
        c.repeats = 1;
        c.seed = 7;
        c
    }

    #[test]
    fn size_spec_parsing() {
        assert_eq!("50".parse::<SizeSpec>().unwrap(), SizeSpec::Fixed(50));
        assert_eq!(
            "32:256".parse::<SizeSpec>().unwrap(),
            SizeSpec::Range(32, 256)
        );
        assert!("256:32".parse::<SizeSpec>().is_err());
        assert!("x".parse::<SizeSpec>().is_err());
    }

    #[test]
    fn smoke_run_reports_nonnegative_flops() {
        let mut config = BenchConfig::new(1, SizeSpec::Fixed(1), SizeSpec::Fixed(1));
        config.n_b_values = vec![1];
        config.repeats = 1;
        let report = run_benchmark(&config).unwrap();
        assert!(!report.records.is_empty());
        assert!(report.records.iter().all(|r| r.flops >= 0.0));
    }

    #[test]
    fn flops_recomputes_from_record_fields() {
        let report = run_benchmark(&tiny_config()).unwrap();
        for r in &report.records {
            let expect = 2.0 * r.total_nnz as f64 * r.n_b as f64 / r.mean_seconds;
            assert_eq!(r.flops, expect);
        }
    }

    #[test]
    fn flops_formula_example() {
        // 15000 nonzeros, n_B = 512, 10 ms mean.
        let flops = 2.0 * 15000.0 * 512.0 / 0.01;
        assert_eq!(flops, 1.536e9);
    }

    #[test]
    fn non_timing_fields_are_deterministic() {
        let strip = |mut r: BenchReport| {
            for rec in &mut r.records {
                rec.mean_seconds = 0.0;
                rec.flops = 0.0;
            }
            r
        };
        let a = strip(run_benchmark(&tiny_config()).unwrap());
        let b = strip(run_benchmark(&tiny_config()).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn csv_round_trip() {
        let report = run_benchmark(&tiny_config()).unwrap();
        let text = report.to_csv_string().unwrap();
        let parsed = BenchReport::from_csv_str(&text).unwrap();
        assert_eq!(report, parsed);
    }

    #[test]
    fn csv_header_schema() {
        let report = run_benchmark(&tiny_config()).unwrap();
        let text = report.to_csv_string().unwrap();
        let header = text.lines().next().unwrap();
        assert!(header.starts_with(
            "algorithm,batch_size,dim_spec,nnz_spec,n_b,mean_seconds,flops,launches,case,p"
        ));
    }

    #[test]
    fn json_round_trip() {
        let report = run_benchmark(&tiny_config()).unwrap();
        let text = report.to_json_string().unwrap();
        let parsed = BenchReport::from_json_str(&text).unwrap();
        assert_eq!(report, parsed);
    }

    #[test]
    fn mixed_requires_a_range() {
        assert!(run_mixed_benchmark(&tiny_config()).is_err());
    }

    #[test]
    fn point_range_matches_fixed_spec() {
        let fixed = tiny_config();
        let mut point = tiny_config();
        point.dim = SizeSpec::Range(10, 10);
        point.nnz_per_row = SizeSpec::Range(2, 2);
        let items_fixed: Vec<SparseTensorMatrix<f32>> = generate_items(&fixed).unwrap();
        let items_point: Vec<SparseTensorMatrix<f32>> = generate_items(&point).unwrap();
        assert_eq!(items_fixed, items_point);
    }

    #[test]
    fn mixed_batches_are_seed_deterministic() {
        let mut config = tiny_config();
        config.dim = SizeSpec::Range(8, 32);
        config.nnz_per_row = SizeSpec::Range(1, 5);
        let a: Vec<SparseTensorMatrix<f32>> = generate_items(&config).unwrap();
        let b: Vec<SparseTensorMatrix<f32>> = generate_items(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn explain_reports_planner_cases() {
        let mut config = BenchConfig::new(100, SizeSpec::Fixed(50), SizeSpec::Fixed(3));
        config.algorithms = vec![Algorithm::SwaSt];
        let fits = explain_plan(&config, 64).unwrap();
        assert_eq!(fits["plans"][0]["case"], "fits_whole");
        assert_eq!(fits["plans"][0]["p"], 1);

        let blocked = explain_plan(&config, 256).unwrap();
        assert_eq!(blocked["plans"][0]["p"], 2);

        config.dim = SizeSpec::Fixed(10000);
        config.batch_size = 1;
        let huge = explain_plan(&config, 8).unwrap();
        assert_eq!(huge["plans"][0]["case"], "no_scratchpad");
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config();
        c.repeats = 0;
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.n_b_values = vec![];
        assert!(c.validate().is_err());
        let mut c = tiny_config();
        c.algorithms = vec![];
        assert!(c.validate().is_err());
    }
}
