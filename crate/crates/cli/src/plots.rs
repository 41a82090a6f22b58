//! Plot-ready data files derived from a results CSV.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use aucrac_core::containers::memory_footprint;
use aucrac_core::{ExecutorMode, SimConfig, StrategyKind};
use clap::ValueEnum;

use crate::error::CliError;
use crate::experiment::{ResultRow, RESULTS_COLUMNS};

/// Largest executor count on the memory-footprint curves.
pub const MEMORY_MAX_TASKS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum Figure {
    /// Mean completion time per strategy against device count.
    CompletionVsDevices,
    /// Node memory of container and VM executors against executor count.
    MemoryVsTasks,
    /// Mean CPU utilization per strategy against task count.
    CpuVsTasks,
    /// Fairness and manager profit per strategy and sweep value.
    FairnessTable,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Self::CompletionVsDevices, Self::MemoryVsTasks, Self::CpuVsTasks, Self::FairnessTable];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::CompletionVsDevices => "completion_vs_devices",
            Self::MemoryVsTasks => "memory_vs_tasks",
            Self::CpuVsTasks => "cpu_vs_tasks",
            Self::FairnessTable => "fairness_table",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.csv", self.as_str())
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Figure {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| CliError::Spec(format!("unknown figure {s:?}")))
    }
}

/// Reads a results CSV, checking the header before any row.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>, CliError> {
    let read_err = |e: csv::Error| CliError::ResultsRead {
        path: path.into(),
        message: e.to_string(),
    };
    let mut reader = csv::Reader::from_path(path).map_err(read_err)?;
    let headers = reader.headers().map_err(read_err)?.clone();
    if let Some(missing) = RESULTS_COLUMNS.iter().find(|c| !headers.iter().any(|h| h == **c)) {
        return Err(CliError::MissingColumn {
            path: path.into(),
            column: missing.to_string(),
        });
    }
    let rows = reader.deserialize().collect::<Result<Vec<ResultRow>, _>>().map_err(read_err)?;
    if rows.is_empty() {
        return Err(CliError::EmptyResults { path: path.into() });
    }
    Ok(rows)
}

/// A wide table: one x column and one column per series.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl PlotTable {
    fn x_label(mut self, label: &str) -> Self {
        if let Some(h) = self.header.first_mut() {
            *h = label.to_string();
        }
        self
    }

    fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::output(path, e))?;
        w.write_record(&self.header).map_err(|e| CliError::output(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| CliError::output(path, e))?;
        }
        w.flush().map_err(|e| CliError::output(path, e))
    }
}

/// Strategies present in `rows`, in canonical order.
fn strategies_in(rows: &[ResultRow]) -> Vec<&'static str> {
    StrategyKind::ALL
        .iter()
        .map(|s| s.as_str())
        .filter(|s| rows.iter().any(|r| r.strategy == *s))
        .collect()
}

fn numeric_x(row: &ResultRow) -> Result<f64, CliError> {
    row.sweep_value.parse().map_err(|_| {
        CliError::Spec(format!(
            "sweep value {:?} is not numeric; this figure needs a devices or workers sweep",
            row.sweep_value
        ))
    })
}

/// Mean of `metric` across seeds, keyed by numeric x and strategy.
fn series_means(
    rows: &[ResultRow],
    x_of: impl Fn(&ResultRow) -> Result<f64, CliError>,
    metric: impl Fn(&ResultRow) -> f64,
) -> Result<PlotTable, CliError> {
    let strategies = strategies_in(rows);
    let mut acc: BTreeMap<u64, (f64, Vec<(f64, usize)>)> = BTreeMap::new();
    for r in rows {
        let x = x_of(r)?;
        let col = strategies.iter().position(|s| *s == r.strategy).expect("strategy listed");
        let entry = acc.entry(x.to_bits()).or_insert_with(|| (x, vec![(0.0, 0); strategies.len()]));
        entry.1[col].0 += metric(r);
        entry.1[col].1 += 1;
    }
    let mut points: Vec<(f64, Vec<(f64, usize)>)> = acc.into_values().collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let rows = points
        .into_iter()
        .map(|(x, cols)| {
            std::iter::once(x.to_string())
                .chain(cols.into_iter().map(|(s, n)| if n == 0 { String::new() } else { (s / n as f64).to_string() }))
                .collect()
        })
        .collect();
    Ok(PlotTable {
        header: std::iter::once("x").chain(strategies).map(String::from).collect(),
        rows,
    })
}

/// Builds the table for one figure. `base` supplies the executor profile
/// and workload used to place model-based curves and task-count axes.
pub fn plot_table(rows: &[ResultRow], figure: Figure, base: &SimConfig) -> Result<PlotTable, CliError> {
    match figure {
        Figure::CompletionVsDevices => {
            if let Some(r) = rows.iter().find(|r| r.sweep_var != "devices") {
                return Err(CliError::Spec(format!(
                    "completion_vs_devices needs a devices sweep, found {}",
                    r.sweep_var
                )));
            }
            Ok(series_means(rows, numeric_x, |r| r.mean_completion_s)?.x_label("devices"))
        }
        Figure::CpuVsTasks => {
            // Devices map to the expected task count of the run; other sweeps keep their own axis.
            let x_of = |r: &ResultRow| -> Result<f64, CliError> {
                let v = numeric_x(r)?;
                if r.sweep_var == "devices" {
                    let cfg = SimConfig {
                        num_devices: v as usize,
                        ..base.clone()
                    };
                    Ok(cfg.task_count() as f64)
                } else {
                    Ok(v)
                }
            };
            let label = if rows[0].sweep_var == "devices" { "tasks" } else { rows[0].sweep_var.as_str() };
            Ok(series_means(rows, x_of, |r| r.mean_cpu_frac)?.x_label(label))
        }
        Figure::MemoryVsTasks => {
            let profile = &base.executor;
            let task_memory = 0.5 * (base.workload.memory_mb.min + base.workload.memory_mb.max);
            let rows = (1..=MEMORY_MAX_TASKS)
                .map(|k| {
                    vec![
                        k.to_string(),
                        memory_footprint(profile, k, task_memory, ExecutorMode::Container).to_string(),
                        memory_footprint(profile, k, task_memory, ExecutorMode::Vm).to_string(),
                    ]
                })
                .collect();
            Ok(PlotTable {
                header: vec!["tasks".into(), "container".into(), "vm".into()],
                rows,
            })
        }
        Figure::FairnessTable => {
            let strategies = strategies_in(rows);
            let mut values: Vec<&str> = Vec::new();
            for r in rows {
                if !values.contains(&r.sweep_value.as_str()) {
                    values.push(&r.sweep_value);
                }
            }
            let mut out = Vec::new();
            for s in &strategies {
                for v in &values {
                    let group: Vec<&ResultRow> = rows.iter().filter(|r| r.strategy == *s && r.sweep_value == *v).collect();
                    if group.is_empty() {
                        continue;
                    }
                    let n = group.len() as f64;
                    let fairness = group.iter().map(|r| r.fairness_jain).sum::<f64>() / n;
                    let profit = group.iter().map(|r| r.mn_profit).sum::<f64>() / n;
                    out.push(vec![s.to_string(), v.to_string(), fairness.to_string(), profit.to_string()]);
                }
            }
            Ok(PlotTable {
                header: vec![
                    "strategy".into(),
                    rows[0].sweep_var.clone(),
                    "fairness_jain".into(),
                    "mn_profit".into(),
                ],
                rows: out,
            })
        }
    }
}

/// Writes one data file per figure into `out_dir`. All tables are built
/// before anything is written, so a failure leaves no partial output.
pub fn emit_plot_data(results: &Path, figures: &[Figure], base: &SimConfig, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let rows = read_results(results)?;
    let tables = figures
        .iter()
        .map(|&f| plot_table(&rows, f, base).map(|t| (f, t)))
        .collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::output(out_dir, e))?;
    let mut written = Vec::with_capacity(tables.len());
    for (figure, table) in tables {
        let path = out_dir.join(figure.file_name());
        table.write(&path)?;
        written.push(path);
    }
    Ok(written)
}
