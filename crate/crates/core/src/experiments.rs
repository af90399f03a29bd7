//! Run configuration and the experiment and CSV-stream runners that turn a
//! configuration into a [`Report`].

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{
    generate, generate_level_shift, generate_logistic_drift, generate_replicates,
    load_csv_stream, load_csv_stream_lenient, CsvSchema, GeneratorConfig, LabelKind,
    LevelShiftConfig, Observation,
};
use crate::error::{Error, Result};
use crate::experts::{ExpertPool, DEFAULT_LOSS_CAP};
use crate::features::{expert_grid, DictionarySpec};
use crate::gaussian::GaussianModel;
use crate::metrics::ChartBasis;
use crate::pipeline::{
    monte_carlo_slope, run_dictionary_experts, run_fixed_experts, run_logistic,
    run_plain_regression, run_regression, DictionaryExpertRun, ExpertRun, LogisticConfig,
    LogisticRun, RegressionConfig, RegressionRun, WarmupConfig,
};
use crate::report::{summary_document, MetricsTable, ParamTable, Report};
use crate::warmup::{LambdaGrid, SplitPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Experiment,
    FitStream,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gaussian,
    Logistic,
    Experts,
}

impl ModelKind {
    fn as_str(self) -> &'static str {
        match self {
            ModelKind::Gaussian => "gaussian",
            ModelKind::Logistic => "logistic",
            ModelKind::Experts => "experts",
        }
    }
}

/// Every setting a run accepts. Unset fields take per-experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_grid: Option<LambdaGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<SplitPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dictionary: Option<DictionarySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart_basis: Option<ChartBasis>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub freeze_sigma: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble_eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<CsvSchema>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lenient: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($field:ident),*) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field; } )*
    };
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    /// Fields set in `top` replace those in `self`.
    pub fn overlay(mut self, top: RunConfig) -> Self {
        let base = &mut self;
        overlay!(
            base, top, mode, experiment, model, seed, n, noise, eta, lambda, lambda_grid, plan,
            warmup, dictionary, interval_level, chart_basis, freeze_sigma, replicates,
            ensemble_eta, loss_cap, threshold, input, schema, synthetic, lenient, output_dir
        );
        self
    }

    pub fn to_json_value(&self) -> Value {
        serde_json::to_value(self).unwrap_or(Value::Null)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn warmup_config(&self, length: usize, default_grid: Option<LambdaGrid>, default_plan: Option<SplitPlan>) -> WarmupConfig {
        let length = self.warmup.unwrap_or(length);
        match (self.lambda, &self.lambda_grid) {
            (Some(l), None) => WarmupConfig::fixed(length, l),
            (l, grid) => WarmupConfig {
                length,
                lambda: l,
                grid: grid.clone().or(default_grid),
                plan: self.plan.or(default_plan),
            },
        }
    }

    /// The configured dictionary (linear by default) sized for `base_dim` raw features.
    fn dictionary_for(&self, base_dim: usize) -> DictionarySpec {
        let mut d = self.dictionary.unwrap_or(DictionarySpec::linear(base_dim));
        d.base_dim = base_dim;
        d
    }

    fn regression_config(&self, warmup: WarmupConfig, eta: f64, base_dim: usize, names: Vec<String>) -> RegressionConfig {
        let mut cfg = RegressionConfig::new(warmup, self.eta.unwrap_or(eta), self.dictionary_for(base_dim));
        if let Some(level) = self.interval_level {
            cfg.interval_level = level;
        }
        if let Some(basis) = self.chart_basis {
            cfg.chart_basis = basis;
        }
        if let Some(freeze) = self.freeze_sigma {
            cfg.freeze_sigma = freeze;
        }
        cfg.feature_names = names;
        cfg
    }

    fn logistic_config(&self, warmup: WarmupConfig, eta: f64, base_dim: usize, names: Vec<String>) -> LogisticConfig {
        let mut cfg = LogisticConfig::new(warmup, self.eta.unwrap_or(eta), self.dictionary_for(base_dim));
        if let Some(t) = self.threshold {
            cfg.threshold = t;
        }
        cfg.feature_names = names;
        cfg
    }

    fn generator(&self, experiment: u8, n: usize) -> Result<GeneratorConfig> {
        let mut g = GeneratorConfig::new(experiment, self.n.unwrap_or(n), self.seed())?;
        if let Some(noise) = self.noise {
            g = g.with_noise(noise);
        }
        g.validate()?;
        Ok(g)
    }

    fn load_input(&self) -> Result<Option<(Vec<Observation>, CsvSchema)>> {
        let Some(path) = &self.input else {
            return Ok(None);
        };
        let schema = self
            .schema
            .clone()
            .ok_or_else(|| Error::InvalidConfig("an input file needs a schema".into()))?;
        let obs = if self.lenient.unwrap_or(false) {
            load_csv_stream_lenient(path, &schema)?.observations
        } else {
            load_csv_stream(path, &schema)?
        };
        if obs.is_empty() {
            return Err(Error::Schema(format!("{} has no data rows", path.display())));
        }
        Ok(Some((obs, schema)))
    }
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).unwrap_or(Value::Null)
}

fn stream_slice(obs: &[Observation], n: Option<usize>) -> Vec<Observation> {
    match n {
        Some(n) if n < obs.len() => obs[..n].to_vec(),
        _ => obs.to_vec(),
    }
}

/// Runs experiment `id` (1 to 7) with `cfg` overriding its defaults.
pub fn run_experiment(id: u8, cfg: &RunConfig) -> Result<Report> {
    let settings = cfg.to_json_value();
    match id {
        1 => experiment_1(cfg, settings),
        2 => {
            let obs = generate(&cfg.generator(2, 500)?)?;
            let warm = cfg.warmup_config(
                250,
                Some(LambdaGrid::linspace(0.0, 1.0, 30)?),
                Some(SplitPlan::expanding(50, 5, 5, 40)),
            );
            let run = run_regression(&obs, &cfg.regression_config(warm, 1e-3, 3, Vec::new()))?;
            Ok(regression_report(run, "experiment", Some(2), Some(cfg.seed()), settings))
        }
        3 => {
            let obs = generate(&cfg.generator(3, 500)?)?;
            let warm = cfg.warmup_config(
                100,
                Some(LambdaGrid::linspace(0.0, 1.0, 30)?),
                Some(SplitPlan::expanding(50, 5, 5, 10)),
            );
            let run = run_logistic(&obs, &cfg.logistic_config(warm, 0.1, 2, Vec::new()))?;
            Ok(logistic_report(run, "experiment", Some(3), Some(cfg.seed()), settings))
        }
        4 => {
            let obs = generate(&cfg.generator(4, 100)?)?;
            let run = run_fixed_experts(
                &ExpertPool::nested_linear(),
                &obs,
                cfg.eta.unwrap_or(0.1),
                cfg.loss_cap.unwrap_or(DEFAULT_LOSS_CAP),
            )?;
            Ok(expert_report(run, Some(4), Some(cfg.seed()), settings))
        }
        5 | 6 => {
            let (obs, names, seed) = regression_source(cfg)?;
            let warm = cfg.warmup_config(
                395.min(obs.len().saturating_sub(1)),
                Some(LambdaGrid::linspace(0.0, 1.0, 30)?),
                Some(SplitPlan::expanding(195, 20, 20, 10)),
            );
            let base_dim = obs[0].x.len();
            let rc = cfg.regression_config(warm, 1e-3, base_dim, names);
            if id == 5 {
                let run = run_regression(&obs, &rc)?;
                Ok(regression_report(run, "experiment", Some(5), seed, settings))
            } else {
                let run = run_dictionary_experts(
                    &obs,
                    &rc,
                    &expert_grid(base_dim),
                    cfg.ensemble_eta.unwrap_or(0.1),
                    cfg.loss_cap.unwrap_or(DEFAULT_LOSS_CAP),
                )?;
                Ok(dictionary_expert_report(run, "experiment", Some(6), seed, settings))
            }
        }
        7 => {
            let (obs, names, seed) = match cfg.load_input()? {
                Some((obs, schema)) => {
                    if schema.label_kind != LabelKind::Binary {
                        return Err(Error::InvalidConfig("experiment 7 needs a binary label column".into()));
                    }
                    (stream_slice(&obs, cfg.n), schema.features, None)
                }
                None if cfg.synthetic.unwrap_or(false) => {
                    let n = cfg.n.unwrap_or(6000);
                    (generate_logistic_drift(n, n * 2 / 3, cfg.seed(), 0)?, Vec::new(), Some(cfg.seed()))
                }
                None => return Err(needs_data(7)),
            };
            let warm = cfg.warmup_config(
                2016,
                Some(LambdaGrid::linspace(0.0, 1.0, 30)?),
                Some(SplitPlan::expanding(1344, 336, 336, 2)),
            );
            let base_dim = obs[0].x.len();
            let run = run_logistic(&obs, &cfg.logistic_config(warm, 0.1, base_dim, names))?;
            Ok(logistic_report(run, "experiment", Some(7), seed, settings))
        }
        other => Err(Error::InvalidConfig(format!("unknown experiment {other}, expected 1 to 7"))),
    }
}

fn needs_data(id: u8) -> Error {
    Error::InvalidConfig(format!(
        "experiment {id} needs an input CSV with a schema, or the synthetic stand-in"
    ))
}

/// Data for the regression pipelines: a CSV stream or a level-shift stand-in.
fn regression_source(cfg: &RunConfig) -> Result<(Vec<Observation>, Vec<String>, Option<u64>)> {
    match cfg.load_input()? {
        Some((obs, schema)) => Ok((stream_slice(&obs, cfg.n), schema.features, None)),
        None if cfg.synthetic.unwrap_or(false) => {
            let n = cfg.n.unwrap_or(700);
            let data = LevelShiftConfig {
                n,
                dim: 4,
                noise: cfg.noise.unwrap_or(0.5),
                shift_at: n * 6 / 7,
                shift: 3.0,
                seed: cfg.seed(),
                stream: 0,
            };
            Ok((generate_level_shift(&data)?, Vec::new(), Some(cfg.seed())))
        }
        None => Err(needs_data(cfg.experiment.unwrap_or(5))),
    }
}

fn experiment_1(cfg: &RunConfig, settings: Value) -> Result<Report> {
    let gen = cfg.generator(1, 120)?;
    let eta = cfg.eta.unwrap_or(0.1);
    let lambda = cfg.lambda.unwrap_or(0.0);
    let replicates = cfg.replicates.unwrap_or(1).max(1);
    let streams = generate_replicates(&gen, replicates)?;
    let model = GaussianModel::zeros(1, lambda, eta)?;
    let run = run_plain_regression(&streams[0], model, true)?;
    let mut results = json!({
        "slope": run.model.mu()[0],
        "sigma_final": run.model.sigma().get(0, 0),
        "final_metrics": to_value(&run.final_metrics),
    });
    if replicates > 1 {
        let mc = monte_carlo_slope(&streams, eta)?;
        results["monte_carlo"] = json!({
            "replicates": replicates,
            "mean_slope": mc.mean.mu,
            "slope_interval": [mc.slope_interval.0, mc.slope_interval.1],
            "mean_r2": mc.mean.r2,
            "mean_sigma_hat": mc.mean.sigma_hat,
            "mean_rmse": mc.mean.rmse,
        });
    }
    Ok(Report {
        summary: summary_document("experiment", Some(1), "gaussian", Some(cfg.seed()), settings, results),
        predictions: run.predictions,
        params: ParamTable {
            names: vec!["x".into()],
            rows: run.params,
        },
        metrics: MetricsTable::Regression(run.metrics),
        ..Report::default()
    })
}

/// Streams a local CSV through the model named in `cfg`.
pub fn fit_stream(cfg: &RunConfig) -> Result<Report> {
    let settings = cfg.to_json_value();
    let model = cfg
        .model
        .ok_or_else(|| Error::InvalidConfig("fit-stream needs a model".into()))?;
    let (obs, schema) = cfg
        .load_input()?
        .ok_or_else(|| Error::InvalidConfig("fit-stream needs an input file".into()))?;
    let obs = stream_slice(&obs, cfg.n);
    let warmup = cfg
        .warmup
        .ok_or_else(|| Error::InvalidConfig("fit-stream needs a warm-up length".into()))?;
    let default_grid = (cfg.plan.is_some() && cfg.lambda.is_none())
        .then(|| LambdaGrid::linspace(0.0, 1.0, 30))
        .transpose()?;
    let warm = cfg.warmup_config(warmup, default_grid, None);
    let base_dim = schema.features.len();
    match model {
        ModelKind::Gaussian => {
            let run = run_regression(&obs, &cfg.regression_config(warm, 1e-3, base_dim, schema.features))?;
            Ok(regression_report(run, "fit-stream", None, None, settings))
        }
        ModelKind::Logistic => {
            if schema.label_kind != LabelKind::Binary {
                return Err(Error::InvalidConfig("the logistic model needs a binary label column".into()));
            }
            let run = run_logistic(&obs, &cfg.logistic_config(warm, 0.1, base_dim, schema.features))?;
            Ok(logistic_report(run, "fit-stream", None, None, settings))
        }
        ModelKind::Experts => {
            let rc = cfg.regression_config(warm, 1e-3, base_dim, schema.features);
            let run = run_dictionary_experts(
                &obs,
                &rc,
                &expert_grid(base_dim),
                cfg.ensemble_eta.unwrap_or(0.1),
                cfg.loss_cap.unwrap_or(DEFAULT_LOSS_CAP),
            )?;
            Ok(dictionary_expert_report(run, "fit-stream", None, None, settings))
        }
    }
}

fn regression_results(run: &RegressionRun) -> Value {
    json!({
        "lambda": run.lambda,
        "terms": run.params.names,
        "mu_initial": run.initial_model.mu(),
        "mu_final": run.model.mu(),
        "sigma_initial": run.initial_model.sigma().to_rows(),
        "sigma_final": run.model.sigma().to_rows(),
        "warmup_metrics": to_value(&run.warmup_metrics),
        "final_metrics": to_value(&run.final_metrics),
        "coverage": run.coverage,
        "control_chart": to_value(&run.initial_chart),
        "drift_event_count": run.drift_events.len(),
        "first_alarm": run.first_alarm,
    })
}

pub fn regression_report(run: RegressionRun, kind: &str, experiment: Option<u8>, seed: Option<u64>, settings: Value) -> Report {
    let results = regression_results(&run);
    Report {
        summary: summary_document(kind, experiment, ModelKind::Gaussian.as_str(), seed, settings, results),
        predictions: run.predictions,
        params: run.params,
        metrics: MetricsTable::Regression(run.metrics),
        drift_events: run.drift_events,
        weights: None,
        lambda_scores: run.selection,
    }
}

pub fn logistic_report(run: LogisticRun, kind: &str, experiment: Option<u8>, seed: Option<u64>, settings: Value) -> Report {
    let results = json!({
        "lambda": run.lambda,
        "terms": run.params.names,
        "mu_initial": run.initial_model.mu(),
        "mu_final": run.model.mu(),
        "auc": run.roc.auc,
        "optimal_threshold": run.roc.optimal_threshold,
        "youden_j": run.roc.youden_j,
        "stream_metrics": to_value(&run.stream_metrics),
        "youden_metrics": to_value(&run.youden_metrics),
        "youden_confusion": to_value(&run.youden_confusion),
        "total_log_loss": run.total_log_loss,
        "drift_event_count": run.drift_events.len(),
    });
    Report {
        summary: summary_document(kind, experiment, ModelKind::Logistic.as_str(), seed, settings, results),
        predictions: run.predictions,
        params: run.params,
        metrics: MetricsTable::Classification(run.metrics),
        drift_events: run.drift_events,
        weights: None,
        lambda_scores: run.selection,
    }
}

fn ensemble_results(run: &ExpertRun) -> Value {
    let final_best = run.state.weights().argmax();
    json!({
        "labels": run.labels,
        "final_weights": run.state.weights().as_slice(),
        "cumulative_loss": run.state.cumulative_loss(),
        "best_expert": final_best + 1,
        "weighted_metrics": to_value(&run.weighted_metrics),
        "regret": to_value(&run.regret),
    })
}

pub fn expert_report(run: ExpertRun, experiment: Option<u8>, seed: Option<u64>, settings: Value) -> Report {
    let results = ensemble_results(&run);
    Report {
        summary: summary_document("experiment", experiment, ModelKind::Experts.as_str(), seed, settings, results),
        predictions: run.predictions,
        weights: Some(run.trajectory),
        ..Report::default()
    }
}

pub fn dictionary_expert_report(
    run: DictionaryExpertRun,
    kind: &str,
    experiment: Option<u8>,
    seed: Option<u64>,
    settings: Value,
) -> Report {
    let mut results = ensemble_results(&run.ensemble);
    results["experts"] = Value::Array(run.experts.iter().map(regression_results).collect());
    let warm_steps = run.experts[0].warmup_metrics.map(|m| m.n);
    results["warmup_steps"] = json!(warm_steps);
    Report {
        summary: summary_document(kind, experiment, ModelKind::Experts.as_str(), seed, settings, results),
        predictions: run.ensemble.predictions,
        weights: Some(run.ensemble.trajectory),
        ..Report::default()
    }
}
