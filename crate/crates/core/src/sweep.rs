//! Parameter sweeps: one run per (value, seed), averaged over seeds.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cost::{CostError, StrategyParams};
use crate::domain::Scenario;
use crate::engine::{run, EngineError, FailureModel, RunLimit, RunMetrics};
use crate::generate::{generate_scenario, ArrivalMode, GenerateOptions};
use crate::properties::{GridProperties, JobProperties, UserProperties};
use crate::report::ReportError;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep needs at least one value and one seed")]
    Empty,
    #[error("invalid strategy for value {value}")]
    Params { value: f64, source: CostError },
    #[error("run failed for value {value}, seed {seed}")]
    Engine {
        value: f64,
        seed: u64,
        source: EngineError,
    },
    #[error(transparent)]
    Report(#[from] ReportError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Sp,
    Fp,
    Qp,
    /// Global balancing off (0) or on (non-zero).
    Balance,
}

impl SweepParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Sp => "sp",
            SweepParameter::Fp => "fp",
            SweepParameter::Qp => "qp",
            SweepParameter::Balance => "balance",
        }
    }

    pub fn apply(self, base: StrategyParams, value: f64) -> StrategyParams {
        let mut p = base;
        match self {
            SweepParameter::Sp => p.sp = value,
            SweepParameter::Fp => p.fp = value,
            SweepParameter::Qp => p.qp = value,
            SweepParameter::Balance => p.balance_global = value != 0.0,
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    #[default]
    UnderPeak,
    InPeak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioSource {
    /// The same scenario for every seed; only failures vary.
    Fixed(Scenario),
    /// A fresh scenario per seed.
    Generated {
        grid: GridProperties,
        users: UserProperties,
        jobs: JobProperties,
        options: GenerateOptions,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub scenario: ScenarioSource,
    /// Applies to generated scenarios: in-peak front-loads arrivals.
    pub regime: Regime,
    pub base: StrategyParams,
    pub failures: FailureModel,
    pub limit: RunLimit,
}

impl SweepSpec {
    /// The scenario used for `seed`. A qp sweep over generated scenarios
    /// splits users between the lowest and highest qos so both groups exist.
    pub fn scenario_for(&self, seed: u64) -> Scenario {
        match &self.scenario {
            ScenarioSource::Fixed(s) => s.clone(),
            ScenarioSource::Generated {
                grid,
                users,
                jobs,
                options,
            } => {
                let mut o = *options;
                if self.regime == Regime::InPeak {
                    o.arrivals = ArrivalMode::Peak;
                }
                if self.parameter == SweepParameter::Qp {
                    o.qos_extremes = true;
                }
                generate_scenario(grid, users, jobs, &o, seed)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub value: f64,
    pub seed: u64,
    pub metrics: RunMetrics,
    pub loading_variance: Vec<f64>,
    pub max_qos_processed: u64,
    pub min_qos_processed: u64,
}

/// Per-value means over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: f64,
    pub processed: f64,
    pub failed: f64,
    pub removed: f64,
    pub assigned: f64,
    pub mean_assigned_cost: f64,
    pub mean_completion_time: f64,
    pub mean_loading_variance: f64,
    pub max_qos_processed: f64,
    pub min_qos_processed: f64,
    pub truncated_runs: u64,
    /// Mean loading variance per tick; a finished run counts as 0 after its end.
    pub variance_by_tick: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: SweepParameter,
    pub regime: Regime,
    pub runs: Vec<SweepRun>,
    pub cells: Vec<SweepCell>,
}

/// Completed-job counts of the highest-qos and lowest-qos users.
pub fn qos_group_processed(scenario: &Scenario, metrics: &RunMetrics) -> (u64, u64) {
    let qos = scenario.users.iter().map(|u| u.qos);
    let hi = qos.clone().fold(f64::NEG_INFINITY, f64::max);
    let lo = qos.fold(f64::INFINITY, f64::min);
    let sum = |q: f64| {
        scenario
            .users
            .iter()
            .filter(|u| u.qos == q)
            .map(|u| metrics.per_user_processed[u.id.index()])
            .sum()
    };
    (sum(hi), sum(lo))
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult, SweepError> {
    if spec.values.is_empty() || spec.seeds.is_empty() {
        return Err(SweepError::Empty);
    }
    for &value in &spec.values {
        spec.parameter
            .apply(spec.base, value)
            .validate()
            .map_err(|source| SweepError::Params { value, source })?;
    }
    let jobs: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| spec.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let runs: Vec<SweepRun> = jobs
        .par_iter()
        .map(|&(value, seed)| {
            let scenario = spec.scenario_for(seed);
            let params = spec.parameter.apply(spec.base, value);
            let report = run(scenario.clone(), params, spec.failures.with_seed(seed), spec.limit)
                .map_err(|source| SweepError::Engine { value, seed, source })?;
            let (max_qos_processed, min_qos_processed) = qos_group_processed(&scenario, &report.metrics);
            Ok(SweepRun {
                value,
                seed,
                metrics: report.metrics,
                loading_variance: report.loading_variance,
                max_qos_processed,
                min_qos_processed,
            })
        })
        .collect::<Result<_, SweepError>>()?;

    let cells = spec
        .values
        .iter()
        .map(|&value| {
            let rs: Vec<&SweepRun> = runs.iter().filter(|r| r.value == value).collect();
            let n = rs.len() as f64;
            let mean = |f: &dyn Fn(&SweepRun) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            let ticks = rs.iter().map(|r| r.loading_variance.len()).max().unwrap_or(0);
            let variance_by_tick = (0..ticks)
                .map(|t| rs.iter().map(|r| r.loading_variance.get(t).copied().unwrap_or(0.0)).sum::<f64>() / n)
                .collect();
            SweepCell {
                value,
                processed: mean(&|r| r.metrics.processed as f64),
                failed: mean(&|r| r.metrics.failed as f64),
                removed: mean(&|r| r.metrics.removed as f64),
                assigned: mean(&|r| r.metrics.assigned as f64),
                mean_assigned_cost: mean(&|r| r.metrics.mean_assigned_cost),
                mean_completion_time: mean(&|r| r.metrics.mean_completion_time),
                mean_loading_variance: mean(&|r| r.metrics.mean_loading_variance),
                max_qos_processed: mean(&|r| r.max_qos_processed as f64),
                min_qos_processed: mean(&|r| r.min_qos_processed as f64),
                truncated_runs: rs.iter().filter(|r| r.metrics.truncated).count() as u64,
                variance_by_tick,
            }
        })
        .collect();

    Ok(SweepResult {
        parameter: spec.parameter,
        regime: spec.regime,
        runs,
        cells,
    })
}

fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes `sweep_summary.csv` plus the figure tables for the swept parameter.
pub fn write_sweep(result: &SweepResult, dir: &Path) -> Result<Vec<PathBuf>, SweepError> {
    std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let name = result.parameter.name();
    let mut written = Vec::new();
    let mut table = |file: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<(), SweepError> {
        let path = dir.join(file);
        write_table(&path, header, rows)?;
        written.push(path);
        Ok(())
    };
    let col = |f: &dyn Fn(&SweepCell) -> f64| -> Vec<Vec<String>> {
        result
            .cells
            .iter()
            .map(|c| vec![c.value.to_string(), f(c).to_string()])
            .collect()
    };

    table(
        "sweep_summary.csv",
        &[
            name,
            "processed",
            "failed",
            "removed",
            "assigned",
            "mean_assigned_cost",
            "mean_completion_time",
            "mean_loading_variance",
            "max_qos_processed",
            "min_qos_processed",
            "truncated_runs",
        ],
        result
            .cells
            .iter()
            .map(|c| {
                vec![
                    c.value.to_string(),
                    c.processed.to_string(),
                    c.failed.to_string(),
                    c.removed.to_string(),
                    c.assigned.to_string(),
                    c.mean_assigned_cost.to_string(),
                    c.mean_completion_time.to_string(),
                    c.mean_loading_variance.to_string(),
                    c.max_qos_processed.to_string(),
                    c.min_qos_processed.to_string(),
                    c.truncated_runs.to_string(),
                ]
            })
            .collect(),
    )?;

    match result.parameter {
        SweepParameter::Sp => {
            table("fig7_processed.csv", &[name, "processed"], col(&|c| c.processed))?;
            table("fig8_assigned_cost.csv", &[name, "mean_assigned_cost"], col(&|c| c.mean_assigned_cost))?;
            table(
                "fig9_completion_time.csv",
                &[name, "mean_completion_time"],
                col(&|c| c.mean_completion_time),
            )?;
        }
        SweepParameter::Fp => {
            table("fig10_failed.csv", &[name, "failed"], col(&|c| c.failed))?;
        }
        SweepParameter::Qp => {
            let rows = result
                .cells
                .iter()
                .map(|c| {
                    vec![
                        c.value.to_string(),
                        c.max_qos_processed.to_string(),
                        c.min_qos_processed.to_string(),
                    ]
                })
                .collect();
            table("fig11_qos_processed.csv", &[name, "max_qos_processed", "min_qos_processed"], rows)?;
        }
        SweepParameter::Balance => {
            let file = match result.regime {
                Regime::UnderPeak => "fig16_loading_variance.csv",
                Regime::InPeak => "fig17_loading_variance.csv",
            };
            let ticks = result.cells.iter().map(|c| c.variance_by_tick.len()).max().unwrap_or(0);
            let labels: Vec<String> = result.cells.iter().map(|c| format!("balance_{}", c.value)).collect();
            let mut header = vec!["tick"];
            header.extend(labels.iter().map(String::as_str));
            let rows = (0..ticks)
                .map(|t| {
                    let mut row = vec![t.to_string()];
                    row.extend(
                        result
                            .cells
                            .iter()
                            .map(|c| c.variance_by_tick.get(t).copied().unwrap_or(0.0).to_string()),
                    );
                    row
                })
                .collect();
            table(file, &header, rows)?;
        }
    }
    Ok(written)
}
