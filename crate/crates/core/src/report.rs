//! Writing run reports to disk and reading them back.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::Scenario;
use crate::engine::{RunMetrics, RunReport};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv output failed")]
    Csv(#[from] csv::Error),
    #[error("bad JSON in {}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl ReportFormat {
    fn csv(self) -> bool {
        matches!(self, ReportFormat::Csv | ReportFormat::Both)
    }
    fn json(self) -> bool {
        matches!(self, ReportFormat::Json | ReportFormat::Both)
    }
}

pub const OUTCOMES_CSV: &str = "outcomes.csv";
pub const LOADING_CSV: &str = "loading.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const REPORT_JSON: &str = "report.json";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `(metric, value)` rows of the summary table.
pub fn summary_rows(m: &RunMetrics) -> Vec<(String, String)> {
    let mut rows = vec![
        ("total_jobs".to_string(), m.total_jobs.to_string()),
        ("processed".into(), m.processed.to_string()),
        ("failed".into(), m.failed.to_string()),
        ("removed".into(), m.removed.to_string()),
        ("assigned".into(), m.assigned.to_string()),
        ("mean_assigned_cost".into(), m.mean_assigned_cost.to_string()),
        ("mean_assigned_effective_cost".into(), m.mean_assigned_effective_cost.to_string()),
        ("mean_completion_time".into(), m.mean_completion_time.to_string()),
        ("mean_loading_variance".into(), m.mean_loading_variance.to_string()),
        ("ticks".into(), m.ticks.to_string()),
        ("truncated".into(), m.truncated.to_string()),
    ];
    for (u, n) in m.per_user_processed.iter().enumerate() {
        rows.push((format!("processed_user_{u}"), n.to_string()));
    }
    rows
}

/// Writes the report into `dir` (created if needed) and returns the files written.
pub fn emit_report(report: &RunReport, dir: &Path, format: ReportFormat) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();
    if format.csv() {
        let path = dir.join(OUTCOMES_CSV);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record([
            "job_id",
            "owner",
            "status",
            "arrival",
            "assign",
            "termination",
            "resource",
            "machine",
            "effective_cost",
            "raw_cost",
        ])?;
        for o in &report.outcomes {
            w.write_record([
                o.job.0.to_string(),
                o.owner.0.to_string(),
                o.status.as_str().to_string(),
                o.arrival.to_string(),
                opt(o.assign),
                o.termination.to_string(),
                opt(o.resource.map(|r| r.0)),
                opt(o.machine.map(|m| m.0)),
                opt(o.effective_cost),
                opt(o.raw_cost),
            ])?;
        }
        w.flush().map_err(io_err(&path))?;
        written.push(path);

        let path = dir.join(LOADING_CSV);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["tick", "resource_id", "fraction"])?;
        for s in &report.loading {
            w.write_record([s.tick.to_string(), s.resource.0.to_string(), s.fraction.to_string()])?;
        }
        w.flush().map_err(io_err(&path))?;
        written.push(path);

        let path = dir.join(SUMMARY_CSV);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["metric", "value"])?;
        for (k, v) in summary_rows(&report.metrics) {
            w.write_record([k, v])?;
        }
        w.flush().map_err(io_err(&path))?;
        written.push(path);
    }
    if format.json() {
        let path = dir.join(REPORT_JSON);
        write_json(&path, report)?;
        written.push(path);
    }
    Ok(written)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ReportError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| ReportError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads back `report.json` from an output directory.
pub fn read_report(dir: &Path) -> Result<RunReport, ReportError> {
    read_json(&dir.join(REPORT_JSON))
}

pub fn write_scenario(path: &Path, scenario: &Scenario) -> Result<(), ReportError> {
    write_json(path, scenario)
}

pub fn read_scenario(path: &Path) -> Result<Scenario, ReportError> {
    read_json(path)
}

/// Reads `summary.csv` back as `(metric, value)` pairs.
pub fn read_summary_csv(path: &Path) -> Result<Vec<(String, String)>, ReportError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        rows.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(rows)
}
