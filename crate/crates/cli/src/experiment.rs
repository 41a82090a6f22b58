//! Multi-seed sweeps over a base config, written as CSV.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aucrac_core::sim::run;
use aucrac_core::{ConfigError, SimConfig, StrategyKind};
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const RESULTS_FILE: &str = "results.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

/// Exact header of the per-run results CSV.
pub const RESULTS_COLUMNS: [&str; 11] = [
    "sweep_var",
    "sweep_value",
    "strategy",
    "seed",
    "mean_completion_s",
    "p95_completion_s",
    "deadline_miss",
    "fairness_jain",
    "mn_profit",
    "peak_mem_mb",
    "mean_cpu_frac",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    Devices,
    Workers,
    Strategy,
}

impl SweepVar {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Devices => "devices",
            Self::Workers => "workers",
            Self::Strategy => "strategy",
        }
    }
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SweepVar {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "devices" => Ok(Self::Devices),
            "workers" => Ok(Self::Workers),
            "strategy" => Ok(Self::Strategy),
            other => Err(CliError::Spec(format!(
                "unknown sweep variable {other:?} (expected devices, workers or strategy)"
            ))),
        }
    }
}

/// A parsed `--sweep var=v1,v2,...` argument.
#[derive(Clone, Debug, PartialEq)]
pub struct Sweep {
    pub var: SweepVar,
    pub values: Vec<String>,
}

impl FromStr for Sweep {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (var, values) = s
            .split_once('=')
            .ok_or_else(|| CliError::Spec(format!("sweep {s:?} must look like var=v1,v2")))?;
        let values: Vec<String> = values
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(String::from)
            .collect();
        Ok(Self {
            var: var.trim().parse()?,
            values,
        })
    }
}

/// Parses `a..b` (inclusive) or a comma-separated list of seeds.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = |e: std::num::ParseIntError| CliError::Spec(format!("bad seed list {s:?}: {e}"));
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(bad)?, b.trim().parse().map_err(bad)?);
        if a > b {
            return Err(CliError::Spec(format!("empty seed range {s:?}")));
        }
        return Ok((a..=b).collect());
    }
    s.split(',').map(|v| v.trim().parse().map_err(bad)).collect()
}

/// Parses `all` or a comma-separated list of strategy names.
pub fn parse_strategies(s: &str) -> Result<Vec<StrategyKind>, CliError> {
    if s.trim() == "all" {
        return Ok(StrategyKind::ALL.to_vec());
    }
    s.split(',')
        .map(|v| v.trim().parse::<StrategyKind>().map_err(CliError::from))
        .collect()
}

/// Reads and validates a JSON config file.
pub fn load_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::ConfigNotFound { path: path.into() });
        }
        Err(source) => {
            return Err(CliError::ConfigRead {
                path: path.into(),
                source,
            })
        }
    };
    Ok(SimConfig::from_json_str(&text)?)
}

/// Everything needed to run one sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub base: SimConfig,
    pub sweep: Sweep,
    /// Strategies run at every sweep value; replaced by the sweep values
    /// when sweeping over strategies.
    pub strategies: Vec<StrategyKind>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Worker threads; 0 lets the pool pick.
    pub jobs: usize,
}

impl ExperimentSpec {
    /// Spec with the default seeds `0..=29`, all strategies and a single
    /// sweep point at the base config's device count.
    pub fn new(base: SimConfig, out_dir: impl Into<PathBuf>) -> Self {
        let sweep = Sweep {
            var: SweepVar::Devices,
            values: vec![base.num_devices.to_string()],
        };
        Self {
            base,
            sweep,
            strategies: StrategyKind::ALL.to_vec(),
            seeds: (0..30).collect(),
            out_dir: out_dir.into(),
            jobs: 0,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.sweep.values.is_empty() {
            return Err(CliError::Spec("sweep values must be non-empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(CliError::Spec("need at least one seed".into()));
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        if seeds.windows(2).any(|w| w[0] == w[1]) {
            return Err(CliError::Spec("seeds must be distinct".into()));
        }
        if self.sweep.var != SweepVar::Strategy && self.strategies.is_empty() {
            return Err(CliError::Spec("need at least one strategy".into()));
        }
        self.base.validate()?;
        Ok(())
    }

    /// Every `(sweep value, config)` pair in output order: sweep values as
    /// given, then strategies, then seeds.
    pub fn runs(&self) -> Result<Vec<(String, SimConfig)>, CliError> {
        self.validate()?;
        let mut out = Vec::new();
        for value in &self.sweep.values {
            let mut cfg = self.base.clone();
            let strategies = match self.sweep.var {
                SweepVar::Devices => {
                    cfg.num_devices = parse_count(value, "devices")?;
                    self.strategies.clone()
                }
                SweepVar::Workers => {
                    cfg.num_workers = parse_count(value, "workers")?;
                    self.strategies.clone()
                }
                SweepVar::Strategy => vec![value.parse::<StrategyKind>()?],
            };
            cfg.validate()?;
            for strategy in strategies {
                for &seed in &self.seeds {
                    let mut run_cfg = cfg.clone();
                    run_cfg.strategy = strategy;
                    run_cfg.seed = seed;
                    out.push((value.clone(), run_cfg));
                }
            }
        }
        Ok(out)
    }
}

fn parse_count(value: &str, field: &str) -> Result<usize, CliError> {
    value
        .parse()
        .map_err(|_| ConfigError::invalid(field, format!("sweep value {value:?} is not a non-negative integer")).into())
}

/// One row of the results CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_var: String,
    pub sweep_value: String,
    pub strategy: String,
    pub seed: u64,
    pub mean_completion_s: f64,
    pub p95_completion_s: f64,
    pub deadline_miss: u64,
    pub fairness_jain: f64,
    pub mn_profit: f64,
    pub peak_mem_mb: f64,
    pub mean_cpu_frac: f64,
}

impl ResultRow {
    pub fn metrics(&self) -> [f64; 7] {
        [
            self.mean_completion_s,
            self.p95_completion_s,
            self.deadline_miss as f64,
            self.fairness_jain,
            self.mn_profit,
            self.peak_mem_mb,
            self.mean_cpu_frac,
        ]
    }
}

/// Per-run checks that do not appear in the CSV.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunDiagnostics {
    pub tasks_arrived: u64,
    pub tasks_completed: u64,
    pub deadline_miss: u64,
    pub failed_to_place: u64,
    pub in_flight: u64,
    pub zeta_violations: u64,
    pub conservation_violations: u64,
}

impl RunDiagnostics {
    pub fn tasks_balance(&self) -> bool {
        self.tasks_arrived == self.tasks_completed + self.deadline_miss + self.failed_to_place + self.in_flight
    }
}

/// Mean and sample standard deviation of each metric across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub sweep_var: String,
    pub sweep_value: String,
    pub strategy: String,
    pub runs: usize,
    pub mean_completion_s_mean: f64,
    pub mean_completion_s_std: f64,
    pub p95_completion_s_mean: f64,
    pub p95_completion_s_std: f64,
    pub deadline_miss_mean: f64,
    pub deadline_miss_std: f64,
    pub fairness_jain_mean: f64,
    pub fairness_jain_std: f64,
    pub mn_profit_mean: f64,
    pub mn_profit_std: f64,
    pub peak_mem_mb_mean: f64,
    pub peak_mem_mb_std: f64,
    pub mean_cpu_frac_mean: f64,
    pub mean_cpu_frac_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups consecutive rows sharing `(sweep_value, strategy)`.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = (&rows[start].sweep_value, &rows[start].strategy);
        let end = rows[start..]
            .iter()
            .position(|r| (&r.sweep_value, &r.strategy) != key)
            .map_or(rows.len(), |p| start + p);
        let group = &rows[start..end];
        let stats: Vec<(f64, f64)> = (0..7)
            .map(|k| mean_std(&group.iter().map(|r| r.metrics()[k]).collect::<Vec<_>>()))
            .collect();
        out.push(AggregateRow {
            sweep_var: rows[start].sweep_var.clone(),
            sweep_value: rows[start].sweep_value.clone(),
            strategy: rows[start].strategy.clone(),
            runs: group.len(),
            mean_completion_s_mean: stats[0].0,
            mean_completion_s_std: stats[0].1,
            p95_completion_s_mean: stats[1].0,
            p95_completion_s_std: stats[1].1,
            deadline_miss_mean: stats[2].0,
            deadline_miss_std: stats[2].1,
            fairness_jain_mean: stats[3].0,
            fairness_jain_std: stats[3].1,
            mn_profit_mean: stats[4].0,
            mn_profit_std: stats[4].1,
            peak_mem_mb_mean: stats[5].0,
            peak_mem_mb_std: stats[5].1,
            mean_cpu_frac_mean: stats[6].0,
            mean_cpu_frac_std: stats[6].1,
        });
        start = end;
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub diagnostics: Vec<RunDiagnostics>,
    pub aggregates: Vec<AggregateRow>,
    pub results_path: PathBuf,
    pub aggregate_path: PathBuf,
}

/// Runs every `(sweep value, strategy, seed)` combination and writes
/// `results.csv` and `aggregate.csv` into the output directory. Runs may
/// execute in parallel; rows are always written in [`ExperimentSpec::runs`]
/// order.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput, CliError> {
    let runs = spec.runs()?;
    fs::create_dir_all(&spec.out_dir).map_err(|e| CliError::output(&spec.out_dir, e))?;
    info!("running {} simulations into {}", runs.len(), spec.out_dir.display());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| CliError::Spec(format!("cannot start worker pool: {e}")))?;
    let sweep_var = spec.sweep.var.as_str();
    let results: Vec<Result<(ResultRow, RunDiagnostics), CliError>> = pool.install(|| {
        runs.par_iter()
            .map(|(value, cfg)| {
                let report = run(cfg).map_err(|source| CliError::Runtime {
                    context: format!("{sweep_var}={value} strategy={} seed={}", cfg.strategy, cfg.seed),
                    source,
                })?;
                let m = &report.metrics;
                let row = ResultRow {
                    sweep_var: sweep_var.to_string(),
                    sweep_value: value.clone(),
                    strategy: cfg.strategy.to_string(),
                    seed: cfg.seed,
                    mean_completion_s: m.mean_completion_s,
                    p95_completion_s: m.p95_completion_s,
                    deadline_miss: m.deadline_miss,
                    fairness_jain: m.fairness_jain,
                    mn_profit: m.mn_profit,
                    peak_mem_mb: m.max_peak_mem(),
                    mean_cpu_frac: m.mean_cpu_frac,
                };
                let diag = RunDiagnostics {
                    tasks_arrived: m.tasks_arrived,
                    tasks_completed: m.tasks_completed,
                    deadline_miss: m.deadline_miss,
                    failed_to_place: m.failed_to_place,
                    in_flight: m.in_flight,
                    zeta_violations: report.zeta_violations,
                    conservation_violations: report.conservation_violations,
                };
                Ok((row, diag))
            })
            .collect()
    });
    let (rows, diagnostics): (Vec<_>, Vec<_>) = results.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().unzip();

    for (row, d) in rows.iter().zip(&diagnostics) {
        if !d.tasks_balance() || d.zeta_violations > 0 || d.conservation_violations > 0 {
            warn!("invariant check failed for {} seed {}: {d:?}", row.strategy, row.seed);
        }
    }

    let aggregates = aggregate(&rows);
    let results_path = spec.out_dir.join(RESULTS_FILE);
    let aggregate_path = spec.out_dir.join(AGGREGATE_FILE);
    write_csv(&results_path, &rows)?;
    write_csv(&aggregate_path, &aggregates)?;
    Ok(ExperimentOutput {
        rows,
        diagnostics,
        aggregates,
        results_path,
        aggregate_path,
    })
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::output(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::output(path, e))?;
    }
    w.flush().map_err(|e| CliError::output(path, e))
}
