//! Plot-ready run artifacts: per-step CSV tables and a summary JSON document.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::experts::WeightTrajectory;
use crate::metrics::{ClassificationMetrics, IChart, RegressionMetrics};
use crate::warmup::LambdaSelection;

pub const SCHEMA_VERSION: &str = "1.0";

/// JSON schema for `summary.json`.
pub const SUMMARY_SCHEMA: &str = include_str!("../schema/summary.schema.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Warmup,
    Stream,
}

impl Phase {
    fn as_str(self) -> &'static str {
        match self {
            Phase::Warmup => "warmup",
            Phase::Stream => "stream",
        }
    }
}

/// One step of a run. Regression rows fill `prediction`, the interval and
/// `residual`; classification rows store the probability in `prediction`
/// and fill `predicted_class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub step: u64,
    pub phase: Phase,
    pub y: f64,
    pub prediction: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub residual: Option<f64>,
    pub predicted_class: Option<u8>,
    pub flag: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRow {
    pub step: u64,
    pub mu: Vec<f64>,
    pub sigma_diag: Vec<f64>,
    pub sigma_trace: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParamTable {
    pub names: Vec<String>,
    pub rows: Vec<ParamRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetricsRow {
    pub step: u64,
    pub metrics: RegressionMetrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetricsRow {
    pub step: u64,
    pub metrics: ClassificationMetrics,
    pub p_i: f64,
    pub s_i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "rows", rename_all = "lowercase")]
pub enum MetricsTable {
    Regression(Vec<RegressionMetricsRow>),
    Classification(Vec<ClassificationMetricsRow>),
}

impl Default for MetricsTable {
    fn default() -> Self {
        MetricsTable::Regression(Vec::new())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Detector {
    NelsonRule1,
    DdmWarning,
    DdmDrift,
}

impl Detector {
    fn as_str(self) -> &'static str {
        match self {
            Detector::NelsonRule1 => "nelson-rule-1",
            Detector::DdmWarning => "ddm-warning",
            Detector::DdmDrift => "ddm-drift",
        }
    }
}

/// A flagged step with the statistic and the limits in force at that step.
/// For DDM events `statistic = p_i + s_i`, `center = p_min` and `upper` is
/// the crossed level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEvent {
    pub step: u64,
    pub detector: Detector,
    pub statistic: f64,
    pub lower: Option<f64>,
    pub center: f64,
    pub upper: f64,
}

impl DriftEvent {
    pub fn nelson(step: u64, residual: f64, chart: &IChart) -> Self {
        DriftEvent {
            step,
            detector: Detector::NelsonRule1,
            statistic: residual,
            lower: Some(chart.lower),
            center: chart.center,
            upper: chart.upper,
        }
    }
}

/// Everything a run produces.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub summary: Value,
    pub predictions: Vec<PredictionRow>,
    pub params: ParamTable,
    pub metrics: MetricsTable,
    pub drift_events: Vec<DriftEvent>,
    pub weights: Option<WeightTrajectory>,
    pub lambda_scores: Option<LambdaSelection>,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{other:?}")),
    }
}

fn write_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn strings(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub const PREDICTION_COLUMNS: [&str; 9] = [
    "step",
    "phase",
    "y",
    "prediction",
    "lower",
    "upper",
    "residual",
    "predicted_class",
    "flag",
];

pub const REGRESSION_METRIC_COLUMNS: [&str; 8] =
    ["step", "SST", "SSE", "n", "p", "R2", "sigma_hat", "RMSE"];

pub const CLASSIFICATION_METRIC_COLUMNS: [&str; 8] =
    ["step", "accuracy", "tpr", "tnr", "precision", "f1", "p_i", "s_i"];

pub const DRIFT_COLUMNS: [&str; 6] = ["step", "detector", "statistic", "lower", "center", "upper"];

impl Report {
    /// Writes the CSV tables and `summary.json` into `dir`, returning the
    /// written paths. The summary gains a `files` list.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();

        let path = dir.join("predictions.csv");
        write_table(
            &path,
            &strings(&PREDICTION_COLUMNS),
            self.predictions.iter().map(|r| {
                vec![
                    r.step.to_string(),
                    r.phase.as_str().to_string(),
                    num(r.y),
                    num(r.prediction),
                    opt(r.lower),
                    opt(r.upper),
                    opt(r.residual),
                    r.predicted_class.map(|c| c.to_string()).unwrap_or_default(),
                    u8::from(r.flag).to_string(),
                ]
            }),
        )?;
        written.push(path);

        let path = dir.join("params_trajectory.csv");
        let mut header = vec!["step".to_string()];
        header.extend(self.params.names.iter().map(|n| format!("mu[{n}]")));
        header.extend(self.params.names.iter().map(|n| format!("sigma[{n}]")));
        header.push("sigma_trace".into());
        write_table(
            &path,
            &header,
            self.params.rows.iter().map(|r| {
                let mut row = vec![r.step.to_string()];
                row.extend(r.mu.iter().copied().map(num));
                row.extend(r.sigma_diag.iter().copied().map(num));
                row.push(num(r.sigma_trace));
                row
            }),
        )?;
        written.push(path);

        let path = dir.join("metrics.csv");
        match &self.metrics {
            MetricsTable::Regression(rows) => write_table(
                &path,
                &strings(&REGRESSION_METRIC_COLUMNS),
                rows.iter().map(|r| {
                    let m = &r.metrics;
                    vec![
                        r.step.to_string(),
                        num(m.sst),
                        num(m.sse),
                        m.n.to_string(),
                        m.p.to_string(),
                        num(m.r2),
                        num(m.sigma_hat),
                        num(m.rmse),
                    ]
                }),
            )?,
            MetricsTable::Classification(rows) => write_table(
                &path,
                &strings(&CLASSIFICATION_METRIC_COLUMNS),
                rows.iter().map(|r| {
                    let m = &r.metrics;
                    vec![
                        r.step.to_string(),
                        num(m.accuracy),
                        opt(m.tpr),
                        opt(m.tnr),
                        opt(m.precision),
                        opt(m.f1),
                        num(r.p_i),
                        num(r.s_i),
                    ]
                }),
            )?,
        }
        written.push(path);

        let path = dir.join("drift_events.csv");
        write_table(
            &path,
            &strings(&DRIFT_COLUMNS),
            self.drift_events.iter().map(|e| {
                vec![
                    e.step.to_string(),
                    e.detector.as_str().to_string(),
                    num(e.statistic),
                    opt(e.lower),
                    num(e.center),
                    num(e.upper),
                ]
            }),
        )?;
        written.push(path);

        if let Some(weights) = &self.weights {
            let path = dir.join("weights.csv");
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            weights.write_csv(std::io::BufWriter::new(file))?;
            written.push(path);
        }

        if let Some(selection) = &self.lambda_scores {
            let path = dir.join("lambda_scores.csv");
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            selection.write_csv(std::io::BufWriter::new(file))?;
            written.push(path);
        }

        let path = dir.join("summary.json");
        let mut summary = self.summary.clone();
        let mut files: Vec<String> = written
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect();
        files.push("summary.json".into());
        if let Value::Object(map) = &mut summary {
            map.insert("files".into(), json!(files));
        }
        let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::invalid(e.to_string()))?;
        let mut file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        file.write_all(text.as_bytes())
            .and_then(|_| file.write_all(b"\n"))
            .map_err(|e| Error::io(&path, e))?;
        written.push(path);
        Ok(written)
    }
}

/// Summary skeleton shared by every run.
pub fn summary_document(run_kind: &str, experiment: Option<u8>, model: &str, seed: Option<u64>, config: Value, results: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "run": {
            "kind": run_kind,
            "experiment": experiment,
            "model": model,
            "seed": seed,
        },
        "config": config,
        "results": results,
    })
}
