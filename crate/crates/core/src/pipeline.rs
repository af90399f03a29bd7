//! End-to-end streams: warm-up tuning and initialization followed by
//! incremental updates with monitoring.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Observation;
use crate::error::{Error, Result};
use crate::experts::{
    regret_check, squared_losses, EnsembleState, ExpertPool, RegretCheck, RegretHistory,
    WeightTrajectory,
};
use crate::features::DictionarySpec;
use crate::gaussian::GaussianModel;
use crate::geometry::{RunningStandardizer, SymMatrix};
use crate::logistic::LogisticModel;
use crate::metrics::{
    empirical_coverage, roc_auc, total_log_loss, ChartBasis, ClassificationMetrics,
    ConfusionTally, DdmTrace, DriftStatus, IChart, RegressionMetrics, RegressionTally,
    RocSummary, RunningChart,
};
use crate::report::{
    ClassificationMetricsRow, Detector, DriftEvent, ParamRow, ParamTable, Phase, PredictionRow,
    RegressionMetricsRow,
};
use crate::warmup::{
    logistic_laplace_covariance, logistic_ridge_fit, ridge_fit, select_lambda, LambdaGrid,
    LambdaSelection, SelectionMetric, SplitPlan,
};

/// Warm-up segment and how the regularization strength is chosen: either
/// fixed, or by cross-validation over `grid` with `plan`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmupConfig {
    pub length: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<LambdaGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<SplitPlan>,
}

impl WarmupConfig {
    pub fn fixed(length: usize, lambda: f64) -> Self {
        WarmupConfig {
            length,
            lambda: Some(lambda),
            grid: None,
            plan: None,
        }
    }

    pub fn tuned(length: usize, grid: LambdaGrid, plan: SplitPlan) -> Self {
        WarmupConfig {
            length,
            lambda: None,
            grid: Some(grid),
            plan: Some(plan),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length < 2 {
            return Err(Error::InvalidConfig("warm-up needs at least 2 observations".into()));
        }
        match (self.lambda, &self.grid, &self.plan) {
            (Some(l), None, _) => {
                if !(l.is_finite() && l >= 0.0) {
                    return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {l}")));
                }
            }
            (None, Some(_), Some(plan)) => {
                if plan.span() > self.length {
                    return Err(Error::InvalidPlan(format!(
                        "split plan spans {} observations but the warm-up has {}",
                        plan.span(),
                        self.length
                    )));
                }
            }
            (None, Some(_), None) => {
                return Err(Error::InvalidConfig("a lambda grid requires a split plan".into()))
            }
            (Some(_), Some(_), _) => {
                return Err(Error::InvalidConfig("give either a fixed lambda or a grid, not both".into()))
            }
            (None, None, _) => {
                return Err(Error::InvalidConfig("warm-up needs a lambda or a lambda grid".into()))
            }
        }
        Ok(())
    }

    fn choose(&self, x: &DMatrix<f64>, y: &[f64], metric: SelectionMetric) -> Result<(f64, Option<LambdaSelection>)> {
        match (self.lambda, &self.grid, &self.plan) {
            (Some(l), _, _) => Ok((l, None)),
            (None, Some(grid), Some(plan)) => {
                let sel = select_lambda(x, y, plan, grid, metric)?;
                Ok((sel.lambda, Some(sel)))
            }
            _ => Err(Error::InvalidConfig("warm-up needs a lambda or a lambda grid".into())),
        }
    }
}

fn default_level() -> f64 {
    0.95
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionConfig {
    pub warmup: WarmupConfig,
    pub eta: f64,
    pub dictionary: DictionarySpec,
    #[serde(default = "default_level")]
    pub interval_level: f64,
    #[serde(default)]
    pub chart_basis: ChartBasis,
    #[serde(default = "default_true")]
    pub running_standardization: bool,
    #[serde(default)]
    pub freeze_sigma: bool,
    /// Raw feature names; defaults to `x1, x2, ...`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub feature_names: Vec<String>,
}

impl RegressionConfig {
    pub fn new(warmup: WarmupConfig, eta: f64, dictionary: DictionarySpec) -> Self {
        RegressionConfig {
            warmup,
            eta,
            dictionary,
            interval_level: 0.95,
            chart_basis: ChartBasis::WarmupOnly,
            running_standardization: true,
            freeze_sigma: false,
            feature_names: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.warmup.validate()?;
        self.dictionary.validate()?;
        validate_eta(self.eta)?;
        if !(self.interval_level > 0.0 && self.interval_level < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "interval level must lie in (0, 1), got {}",
                self.interval_level
            )));
        }
        validate_names(&self.feature_names, self.dictionary.base_dim)
    }
}

fn validate_eta(eta: f64) -> Result<()> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::InvalidConfig(format!("eta must be > 0, got {eta}")));
    }
    Ok(())
}

fn validate_names(names: &[String], base_dim: usize) -> Result<()> {
    if !names.is_empty() && names.len() != base_dim {
        return Err(Error::InvalidConfig(format!(
            "{} feature names given for {} features",
            names.len(),
            base_dim
        )));
    }
    Ok(())
}

fn raw_names(names: &[String], dim: usize) -> Vec<String> {
    if names.is_empty() {
        (1..=dim).map(|i| format!("x{i}")).collect()
    } else {
        names.to_vec()
    }
}

fn check_stream(obs: &[Observation], dim: usize, warmup: usize) -> Result<()> {
    if let Some(o) = obs.iter().find(|o| o.x.len() != dim) {
        return Err(Error::invalid(format!(
            "observation {} has {} features, expected {dim}",
            o.step,
            o.x.len()
        )));
    }
    if obs.len() <= warmup {
        return Err(Error::InsufficientData(format!(
            "stream has {} observations, warm-up needs {warmup} plus at least one more",
            obs.len()
        )));
    }
    Ok(())
}

fn design(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let p = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j])
}

/// Standardizes the warm-up inputs with their own statistics and expands
/// them through the dictionary.
fn warmup_design(
    warm: &[Observation],
    dictionary: &DictionarySpec,
) -> Result<(RunningStandardizer, Vec<Vec<f64>>)> {
    let scaler = RunningStandardizer::fit(dictionary.base_dim, warm.iter().map(|o| &o.x))?;
    let rows = warm
        .iter()
        .map(|o| dictionary.transform(&scaler.standardize(&o.x)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((scaler, rows))
}

fn param_row(step: u64, mu: &[f64], sigma: &SymMatrix) -> ParamRow {
    ParamRow {
        step,
        mu: mu.to_vec(),
        sigma_diag: sigma.diagonal(),
        sigma_trace: sigma.trace(),
    }
}

/// Result of a regression stream.
#[derive(Debug, Clone)]
pub struct RegressionRun {
    pub lambda: f64,
    pub selection: Option<LambdaSelection>,
    pub initial_model: GaussianModel,
    pub model: GaussianModel,
    pub warmup_metrics: Option<RegressionMetrics>,
    pub final_metrics: Option<RegressionMetrics>,
    pub initial_chart: IChart,
    pub final_chart: IChart,
    pub predictions: Vec<PredictionRow>,
    pub params: ParamTable,
    pub metrics: Vec<RegressionMetricsRow>,
    pub drift_events: Vec<DriftEvent>,
    pub coverage: f64,
    pub first_alarm: Option<u64>,
}

/// Warm-up (lambda selection, ridge initialization) followed by one-step-ahead
/// prediction, interval, monitoring and update at every later observation.
///
/// Metrics accumulate over the warm-up fitted residuals and then the stream's
/// one-step residuals; intervals use the running `sigma_hat^2` as noise
/// variance.
pub fn run_regression(obs: &[Observation], cfg: &RegressionConfig) -> Result<RegressionRun> {
    cfg.validate()?;
    let w = cfg.warmup.length;
    let dict = &cfg.dictionary;
    check_stream(obs, dict.base_dim, w)?;
    let (mut scaler, rows) = warmup_design(&obs[..w], dict)?;
    let x = design(&rows);
    let y: Vec<f64> = obs[..w].iter().map(|o| o.y).collect();
    let (lambda, selection) = cfg.warmup.choose(&x, &y, SelectionMetric::Rmse)?;
    let fit = ridge_fit(&x, &y, lambda)?;
    let initial_model = GaussianModel::new(fit.mu.clone(), fit.covariance(fit.noise_var)?, lambda, cfg.eta)?
        .with_noise_var(fit.noise_var)?
        .with_frozen_sigma(cfg.freeze_sigma);
    let p = initial_model.dim();
    let names = dict.term_names(&raw_names(&cfg.feature_names, dict.base_dim))?;

    let mut tally = RegressionTally::with_capacity(p, 0);
    let mut predictions = Vec::with_capacity(obs.len());
    let mut warm_resid = Vec::with_capacity(w);
    for (o, row) in obs[..w].iter().zip(&rows) {
        let fitted = initial_model.predict(row)?;
        tally.push(o.y, fitted);
        warm_resid.push(o.y - fitted);
        predictions.push(PredictionRow {
            step: o.step,
            phase: Phase::Warmup,
            y: o.y,
            prediction: fitted,
            lower: None,
            upper: None,
            residual: Some(o.y - fitted),
            predicted_class: None,
            flag: false,
        });
    }
    let warmup_metrics = tally.metrics().ok();
    let mut metrics = Vec::new();
    if let Some(m) = warmup_metrics {
        metrics.push(RegressionMetricsRow { step: obs[w - 1].step, metrics: m });
    }
    let mut running = RunningChart::from_residuals(&warm_resid);
    let initial_chart = running.chart()?;
    let mut params = vec![param_row(obs[w - 1].step, initial_model.mu(), initial_model.sigma())];

    let mut model = initial_model.clone();
    let mut intervals = Vec::with_capacity(obs.len() - w);
    let mut truths = Vec::with_capacity(obs.len() - w);
    let mut drift_events = Vec::new();
    for o in &obs[w..] {
        if cfg.running_standardization {
            scaler.push(&o.x)?;
        }
        let z = dict.transform(&scaler.standardize(&o.x)?)?;
        if let Some(nv) = tally.noise_var() {
            model.set_noise_var(nv)?;
        }
        let yhat = model.predict(&z)?;
        let (lo, hi) = model.predict_interval(&z, cfg.interval_level)?;
        let r = o.y - yhat;
        let chart = match cfg.chart_basis {
            ChartBasis::WarmupOnly => initial_chart,
            ChartBasis::Expanding => running.chart()?,
        };
        let flag = chart.violates(r);
        if flag {
            drift_events.push(DriftEvent::nelson(o.step, r, &chart));
        }
        running.push(r);
        tally.push(o.y, yhat);
        intervals.push((lo, hi));
        truths.push(o.y);
        predictions.push(PredictionRow {
            step: o.step,
            phase: Phase::Stream,
            y: o.y,
            prediction: yhat,
            lower: Some(lo),
            upper: Some(hi),
            residual: Some(r),
            predicted_class: None,
            flag,
        });
        if let Ok(m) = tally.metrics() {
            metrics.push(RegressionMetricsRow { step: o.step, metrics: m });
        }
        model = model.update_step(&z, o.y)?;
        params.push(param_row(o.step, model.mu(), model.sigma()));
    }

    Ok(RegressionRun {
        lambda,
        selection,
        initial_model,
        final_metrics: tally.metrics().ok(),
        model,
        warmup_metrics,
        initial_chart,
        final_chart: running.chart()?,
        coverage: empirical_coverage(&intervals, &truths)?,
        first_alarm: drift_events.first().map(|e| e.step),
        predictions,
        params: ParamTable { names, rows: params },
        metrics,
        drift_events,
    })
}

/// Final-state summary of a plain one-step-ahead regression stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub mu: f64,
    pub r2: f64,
    pub sigma_hat: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone)]
pub struct PlainRun {
    pub model: GaussianModel,
    pub final_metrics: RegressionMetrics,
    pub predictions: Vec<PredictionRow>,
    pub params: Vec<ParamRow>,
    pub metrics: Vec<RegressionMetricsRow>,
}

/// Predict, score and update on every observation starting from `model`,
/// with no warm-up or feature processing. Per-step rows are kept only when
/// `record` is set.
pub fn run_plain_regression(obs: &[Observation], model: GaussianModel, record: bool) -> Result<PlainRun> {
    let mut model = model;
    let mut tally = RegressionTally::with_capacity(model.dim(), 0);
    let mut predictions = Vec::new();
    let mut params = Vec::new();
    let mut metrics = Vec::new();
    if record {
        params.push(param_row(0, model.mu(), model.sigma()));
    }
    for o in obs {
        let yhat = model.predict(&o.x)?;
        tally.push(o.y, yhat);
        model = model.update_step(&o.x, o.y)?;
        if record {
            predictions.push(PredictionRow {
                step: o.step,
                phase: Phase::Stream,
                y: o.y,
                prediction: yhat,
                lower: None,
                upper: None,
                residual: Some(o.y - yhat),
                predicted_class: None,
                flag: false,
            });
            params.push(param_row(o.step + 1, model.mu(), model.sigma()));
            if let Ok(m) = tally.metrics() {
                metrics.push(RegressionMetricsRow { step: o.step, metrics: m });
            }
        }
    }
    Ok(PlainRun {
        final_metrics: tally.metrics()?,
        model,
        predictions,
        params,
        metrics,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub replicates: Vec<StreamSummary>,
    pub mean: StreamSummary,
    /// 2.5% and 97.5% empirical quantiles of the final slope.
    pub slope_interval: (f64, f64),
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Independent replicates of a one-feature stream from `mu = 0`, `sigma = 0`,
/// `lambda = 0`, run in parallel and reduced in replicate order.
pub fn monte_carlo_slope(
    replicates: &[Vec<Observation>],
    eta: f64,
) -> Result<MonteCarloSummary> {
    if replicates.is_empty() {
        return Err(Error::InsufficientData("no replicates".into()));
    }
    let runs: Vec<StreamSummary> = replicates
        .par_iter()
        .map(|obs| {
            let dim = obs.first().map_or(0, |o| o.x.len());
            if dim != 1 {
                return Err(Error::invalid(format!("slope replicates need 1 feature, got {dim}")));
            }
            let run = run_plain_regression(obs, GaussianModel::zeros(1, 0.0, eta)?, false)?;
            Ok(StreamSummary {
                mu: run.model.mu()[0],
                r2: run.final_metrics.r2,
                sigma_hat: run.final_metrics.sigma_hat,
                rmse: run.final_metrics.rmse,
            })
        })
        .collect::<Result<_>>()?;
    let k = runs.len() as f64;
    let mean = StreamSummary {
        mu: runs.iter().map(|r| r.mu).sum::<f64>() / k,
        r2: runs.iter().map(|r| r.r2).sum::<f64>() / k,
        sigma_hat: runs.iter().map(|r| r.sigma_hat).sum::<f64>() / k,
        rmse: runs.iter().map(|r| r.rmse).sum::<f64>() / k,
    };
    let mut slopes: Vec<f64> = runs.iter().map(|r| r.mu).collect();
    slopes.sort_by(f64::total_cmp);
    Ok(MonteCarloSummary {
        slope_interval: (quantile(&slopes, 0.025), quantile(&slopes, 0.975)),
        replicates: runs,
        mean,
    })
}

fn default_threshold() -> f64 {
    0.5
}

fn default_min_samples() -> u64 {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticConfig {
    pub warmup: WarmupConfig,
    pub eta: f64,
    pub dictionary: DictionarySpec,
    #[serde(default = "default_true")]
    pub running_standardization: bool,
    /// Cut used for on-line classification and error tracking.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_min_samples")]
    pub ddm_min_samples: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub feature_names: Vec<String>,
}

impl LogisticConfig {
    pub fn new(warmup: WarmupConfig, eta: f64, dictionary: DictionarySpec) -> Self {
        LogisticConfig {
            warmup,
            eta,
            dictionary,
            running_standardization: true,
            threshold: 0.5,
            ddm_min_samples: 30,
            feature_names: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.warmup.validate()?;
        self.dictionary.validate()?;
        validate_eta(self.eta)?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        validate_names(&self.feature_names, self.dictionary.base_dim)
    }
}

#[derive(Debug, Clone)]
pub struct LogisticRun {
    pub lambda: f64,
    pub selection: Option<LambdaSelection>,
    pub initial_model: LogisticModel,
    pub model: LogisticModel,
    /// ROC analysis of the stream's one-step-ahead probabilities.
    pub roc: RocSummary,
    pub stream_metrics: ClassificationMetrics,
    pub youden_metrics: ClassificationMetrics,
    pub youden_confusion: ConfusionTally,
    pub total_log_loss: f64,
    pub predictions: Vec<PredictionRow>,
    pub params: ParamTable,
    pub metrics: Vec<ClassificationMetricsRow>,
    pub drift_events: Vec<DriftEvent>,
}

/// Warm-up (accuracy-based lambda selection, penalized logistic fit, Laplace
/// covariance) followed by on-line classification, DDM tracking and update.
/// The DDM trace restarts after each drift alarm.
pub fn run_logistic(obs: &[Observation], cfg: &LogisticConfig) -> Result<LogisticRun> {
    cfg.validate()?;
    let w = cfg.warmup.length;
    let dict = &cfg.dictionary;
    check_stream(obs, dict.base_dim, w)?;
    if let Some(o) = obs.iter().find(|o| o.y != 0.0 && o.y != 1.0) {
        return Err(Error::invalid(format!("label at step {} must be 0 or 1, got {}", o.step, o.y)));
    }
    let (mut scaler, rows) = warmup_design(&obs[..w], dict)?;
    let x = design(&rows);
    let y: Vec<f64> = obs[..w].iter().map(|o| o.y).collect();
    let labels: Vec<u8> = obs[..w].iter().map(Observation::label).collect();
    let (lambda, selection) = cfg.warmup.choose(&x, &y, SelectionMetric::Accuracy)?;
    let mu = logistic_ridge_fit(&x, &labels, lambda)?;
    let sigma = logistic_laplace_covariance(&x, &mu, lambda)?;
    let initial_model = LogisticModel::new(mu, sigma, lambda, cfg.eta)?.with_threshold(cfg.threshold)?;
    let names = dict.term_names(&raw_names(&cfg.feature_names, dict.base_dim))?;

    let mut predictions = Vec::with_capacity(obs.len());
    for (o, row) in obs[..w].iter().zip(&rows) {
        let prob = initial_model.predict_proba(row)?;
        predictions.push(PredictionRow {
            step: o.step,
            phase: Phase::Warmup,
            y: o.y,
            prediction: prob,
            lower: None,
            upper: None,
            residual: None,
            predicted_class: Some(u8::from(prob >= cfg.threshold)),
            flag: false,
        });
    }
    let mut params = vec![param_row(obs[w - 1].step, initial_model.mu(), initial_model.sigma())];

    let mut model = initial_model.clone();
    let mut trace = DdmTrace::new(cfg.ddm_min_samples);
    let mut last_status = DriftStatus::Stable;
    let mut confusion = ConfusionTally::default();
    let mut scores = Vec::with_capacity(obs.len() - w);
    let mut truth = Vec::with_capacity(obs.len() - w);
    let mut metrics = Vec::new();
    let mut drift_events = Vec::new();
    for o in &obs[w..] {
        if cfg.running_standardization {
            scaler.push(&o.x)?;
        }
        let z = dict.transform(&scaler.standardize(&o.x)?)?;
        let label = o.label();
        let prob = model.predict_proba(&z)?;
        let class = u8::from(prob >= cfg.threshold);
        confusion.push(label, class);
        scores.push(prob);
        truth.push(label);

        let (next, status) = trace.update(class != label);
        let level = next.p_i + next.s_i;
        let event = match status {
            DriftStatus::Drift => Some((Detector::DdmDrift, next.drift_level)),
            DriftStatus::Warning if last_status == DriftStatus::Stable => {
                Some((Detector::DdmWarning, next.warning_level))
            }
            _ => None,
        };
        if let Some((detector, k)) = event {
            drift_events.push(DriftEvent {
                step: o.step,
                detector,
                statistic: level,
                lower: None,
                center: next.p_min,
                upper: next.p_min + k * next.s_min,
            });
        }
        metrics.push(ClassificationMetricsRow {
            step: o.step,
            metrics: confusion.metrics()?,
            p_i: next.p_i,
            s_i: next.s_i,
        });
        predictions.push(PredictionRow {
            step: o.step,
            phase: Phase::Stream,
            y: o.y,
            prediction: prob,
            lower: None,
            upper: None,
            residual: None,
            predicted_class: Some(class),
            flag: status != DriftStatus::Stable,
        });
        if status == DriftStatus::Drift {
            trace = DdmTrace::new(cfg.ddm_min_samples);
            last_status = DriftStatus::Stable;
        } else {
            trace = next;
            last_status = status;
        }
        model = model.update_step(&z, label)?;
        params.push(param_row(o.step, model.mu(), model.sigma()));
    }

    let roc = roc_auc(&scores, &truth)?;
    let youden_classes: Vec<u8> = scores.iter().map(|&s| u8::from(s >= roc.optimal_threshold)).collect();
    let youden_confusion = ConfusionTally::from_predictions(&truth, &youden_classes)?;
    Ok(LogisticRun {
        lambda,
        selection,
        initial_model,
        model,
        roc,
        stream_metrics: confusion.metrics()?,
        youden_metrics: youden_confusion.metrics()?,
        youden_confusion,
        total_log_loss: total_log_loss(&scores, &truth)?,
        predictions,
        params: ParamTable { names, rows: params },
        metrics,
        drift_events,
    })
}

/// Result of a weighted-expert stream.
#[derive(Debug, Clone)]
pub struct ExpertRun {
    pub labels: Vec<String>,
    pub state: EnsembleState,
    pub trajectory: WeightTrajectory,
    pub history: RegretHistory,
    pub regret: RegretCheck,
    /// Weighted prediction at each step, made before the update.
    pub predictions: Vec<PredictionRow>,
    /// Index of the heaviest expert before each update.
    pub best_expert: Vec<usize>,
    pub best_predictions: Vec<f64>,
    pub weighted_metrics: Option<RegressionMetrics>,
}

fn ensemble_stream(
    labels: Vec<String>,
    steps: &[(u64, Phase, f64)],
    expert_predictions: impl Fn(usize) -> Result<Vec<f64>>,
    n_experts: usize,
    eta: f64,
    cap: f64,
) -> Result<ExpertRun> {
    if !(cap.is_finite() && cap > 0.0) {
        return Err(Error::InvalidConfig(format!("loss cap must be > 0, got {cap}")));
    }
    let mut state = EnsembleState::new(n_experts, eta)?;
    let mut trajectory = WeightTrajectory::default();
    trajectory.record(&state);
    let mut history = RegretHistory::new(state.weights().clone());
    let mut tally = RegressionTally::with_capacity(0, 0);
    let mut predictions = Vec::with_capacity(steps.len());
    let mut best_expert = Vec::with_capacity(steps.len());
    let mut best_predictions = Vec::with_capacity(steps.len());
    for (t, &(step, phase, y)) in steps.iter().enumerate() {
        let preds = expert_predictions(t)?;
        let weighted = state.combine(&preds)?;
        let best = state.weights().argmax();
        best_expert.push(best);
        best_predictions.push(preds[best]);
        if phase == Phase::Stream {
            tally.push(y, weighted);
        }
        predictions.push(PredictionRow {
            step,
            phase,
            y,
            prediction: weighted,
            lower: None,
            upper: None,
            residual: Some(y - weighted),
            predicted_class: None,
            flag: false,
        });
        let losses = squared_losses(&preds, y, cap);
        state = state.update_weights(&losses)?;
        history.record(&losses, state.weights());
        trajectory.record(&state);
    }
    let g_star = history.offline_optimum();
    let regret = regret_check(&history, eta, &g_star)?;
    Ok(ExpertRun {
        labels,
        state,
        trajectory,
        history,
        regret,
        predictions,
        best_expert,
        best_predictions,
        weighted_metrics: tally.metrics().ok(),
    })
}

/// Weighted-expert stream over a pool of fixed predictors.
pub fn run_fixed_experts(pool: &ExpertPool, obs: &[Observation], eta: f64, cap: f64) -> Result<ExpertRun> {
    let steps: Vec<(u64, Phase, f64)> = obs.iter().map(|o| (o.step, Phase::Stream, o.y)).collect();
    ensemble_stream(
        pool.labels().to_vec(),
        &steps,
        |t| pool.predict_all(&obs[t].x),
        pool.len(),
        eta,
        cap,
    )
}

#[derive(Debug, Clone)]
pub struct DictionaryExpertRun {
    pub experts: Vec<RegressionRun>,
    pub ensemble: ExpertRun,
}

/// One regression stream per dictionary, combined by expert weights. During
/// the warm-up the experts contribute their fitted values; afterwards their
/// one-step-ahead predictions.
pub fn run_dictionary_experts(
    obs: &[Observation],
    base: &RegressionConfig,
    dictionaries: &[DictionarySpec],
    eta: f64,
    cap: f64,
) -> Result<DictionaryExpertRun> {
    if dictionaries.is_empty() {
        return Err(Error::InvalidConfig("no expert dictionaries".into()));
    }
    let experts: Vec<RegressionRun> = dictionaries
        .par_iter()
        .map(|d| {
            let cfg = RegressionConfig {
                dictionary: *d,
                ..base.clone()
            };
            run_regression(obs, &cfg)
        })
        .collect::<Result<_>>()?;
    let steps: Vec<(u64, Phase, f64)> = experts[0]
        .predictions
        .iter()
        .map(|r| (r.step, r.phase, r.y))
        .collect();
    let labels = (1..=experts.len()).map(|k| format!("E{k}")).collect();
    let ensemble = ensemble_stream(
        labels,
        &steps,
        |t| Ok(experts.iter().map(|e| e.predictions[t].prediction).collect()),
        experts.len(),
        eta,
        cap,
    )?;
    Ok(DictionaryExpertRun { experts, ensemble })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experts::DEFAULT_LOSS_CAP;
    use crate::data::{generate, generate_level_shift, GeneratorConfig, LevelShiftConfig};

    fn exp2_config() -> RegressionConfig {
        RegressionConfig::new(
            WarmupConfig::tuned(
                250,
                LambdaGrid::linspace(0.0, 1.0, 30).unwrap(),
                SplitPlan::expanding(50, 5, 5, 40),
            ),
            1e-3,
            DictionarySpec::linear(3),
        )
    }

    #[test]
    fn warmup_config_rules() {
        assert!(WarmupConfig::fixed(10, 0.1).validate().is_ok());
        let mut w = WarmupConfig::tuned(10, LambdaGrid::new(vec![0.1]).unwrap(), SplitPlan::expanding(5, 1, 1, 3));
        assert!(w.validate().is_ok());
        w.plan = None;
        assert!(matches!(w.validate(), Err(Error::InvalidConfig(_))));
        let w = WarmupConfig::tuned(10, LambdaGrid::new(vec![0.1]).unwrap(), SplitPlan::expanding(8, 1, 2, 3));
        assert!(matches!(w.validate(), Err(Error::InvalidPlan(_))));
        assert!(WarmupConfig::fixed(1, 0.1).validate().is_err());
    }

    #[test]
    fn collinear_stream_end_to_end() {
        let obs = generate(&GeneratorConfig::new(2, 500, 17).unwrap()).unwrap();
        let run = run_regression(&obs, &exp2_config()).unwrap();
        let m = run.final_metrics.unwrap();
        assert!(m.r2 > 0.95, "r2 {}", m.r2);
        assert_eq!(m.n, 500);
        assert_eq!(run.predictions.len(), 500);
        assert_eq!(run.params.rows.len(), 251);
        assert_eq!(run.params.names, vec!["intercept", "x1", "x2", "x3"]);
        let stream = &run.predictions[250..];
        let inside = stream
            .iter()
            .filter(|r| r.lower.unwrap() <= r.y && r.y <= r.upper.unwrap())
            .count();
        assert_eq!(run.coverage, inside as f64 / 250.0);
        assert!(run.initial_chart.lower <= run.initial_chart.center);
        assert_eq!(run.selection.as_ref().unwrap().table.len(), 30 * 40);
    }

    #[test]
    fn stream_too_short_for_plan() {
        let obs = generate(&GeneratorConfig::new(2, 200, 1).unwrap()).unwrap();
        let mut cfg = exp2_config();
        cfg.warmup.length = 200;
        assert!(matches!(run_regression(&obs, &cfg), Err(Error::InvalidPlan(_))));
        cfg.warmup.length = 250;
        assert!(matches!(run_regression(&obs, &cfg), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn plain_stream_learns_slope() {
        let obs = generate(&GeneratorConfig::new(1, 2000, 3).unwrap()).unwrap();
        let run = run_plain_regression(&obs, GaussianModel::zeros(1, 0.0, 0.1).unwrap(), true).unwrap();
        assert!((run.model.mu()[0] - 2.0).abs() < 0.15);
        assert_eq!(run.model.sigma().get(0, 0), 0.0);
        assert_eq!(run.predictions.len(), 2000);
        assert_eq!(run.params.len(), 2001);
    }

    #[test]
    fn expanding_chart_basis_tracks_stream() {
        let cfg_data = LevelShiftConfig { n: 300, dim: 2, noise: 0.5, shift_at: 1000, shift: 0.0, seed: 4, stream: 0 };
        let obs = generate_level_shift(&cfg_data).unwrap();
        let mut cfg = RegressionConfig::new(WarmupConfig::fixed(100, 0.1), 1e-3, DictionarySpec::linear(2));
        cfg.chart_basis = ChartBasis::Expanding;
        let run = run_regression(&obs, &cfg).unwrap();
        assert_eq!(run.final_chart.basis_n, 300);
        let resid: Vec<f64> = run.predictions.iter().map(|r| r.residual.unwrap()).collect();
        let batch = crate::metrics::ichart_fit(&resid).unwrap();
        assert!((batch.upper - run.final_chart.upper).abs() < 1e-12);
    }

    #[test]
    fn logistic_stream_runs() {
        let obs = generate(&GeneratorConfig::new(3, 500, 9).unwrap()).unwrap();
        let cfg = LogisticConfig::new(
            WarmupConfig::tuned(100, LambdaGrid::linspace(0.0, 1.0, 30).unwrap(), SplitPlan::expanding(50, 5, 5, 10)),
            0.1,
            DictionarySpec::linear(2),
        );
        let run = run_logistic(&obs, &cfg).unwrap();
        assert!(run.roc.auc > 0.8);
        assert_eq!(run.metrics.len(), 400);
        assert!(run.total_log_loss > 0.0);
    }

    #[test]
    fn nested_experts_favour_full_model() {
        let obs = generate(&GeneratorConfig::new(4, 100, 5).unwrap()).unwrap();
        let run = run_fixed_experts(&ExpertPool::nested_linear(), &obs, 0.1, DEFAULT_LOSS_CAP).unwrap();
        assert_eq!(run.state.weights().argmax(), 9);
        assert!(run.regret.holds);
        assert_eq!(run.trajectory.rows.len(), 101 * 10);
    }

    #[test]
    fn dictionary_experts_combine() {
        let obs = generate(&GeneratorConfig::new(4, 300, 2).unwrap()).unwrap();
        let base = RegressionConfig::new(WarmupConfig::fixed(150, 0.5), 1e-3, DictionarySpec::linear(4));
        let grid = crate::features::expert_grid(4);
        let run = run_dictionary_experts(&obs, &base, &grid, 0.1, DEFAULT_LOSS_CAP).unwrap();
        assert_eq!(run.experts.len(), 9);
        assert_eq!(run.ensemble.predictions.len(), 300);
        let w = run.ensemble.state.weights().as_slice();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(run.ensemble.regret.holds);
    }
}
