//! Prediction with expert advice over a finite pool.
//!
//! The learner keeps a probability vector over the experts. After each
//! observation every expert's loss is subtracted (scaled by `eta`) from its
//! weight and the result is projected back onto the simplex.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::geometry::{project_simplex, ProbVector};

/// Default cap applied to per-step squared-error losses.
pub const DEFAULT_LOSS_CAP: f64 = 10.0;

/// A reference predictor.
pub trait Expert: Send + Sync {
    fn predict(&self, x: &[f64]) -> std::result::Result<f64, String>;
}

/// `intercept + coefs . x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearExpert {
    pub intercept: f64,
    pub coefs: Vec<f64>,
}

impl LinearExpert {
    pub fn new(intercept: f64, coefs: Vec<f64>) -> Self {
        LinearExpert { intercept, coefs }
    }
}

impl Expert for LinearExpert {
    fn predict(&self, x: &[f64]) -> std::result::Result<f64, String> {
        if x.len() != self.coefs.len() {
            return Err(format!("expected {} features, got {}", self.coefs.len(), x.len()));
        }
        Ok(self.intercept + self.coefs.iter().zip(x).map(|(c, v)| c * v).sum::<f64>())
    }
}

/// Adapts a closure into an [`Expert`].
pub struct FnExpert<F>(pub F);

impl<F> Expert for FnExpert<F>
where
    F: Fn(&[f64]) -> std::result::Result<f64, String> + Send + Sync,
{
    fn predict(&self, x: &[f64]) -> std::result::Result<f64, String> {
        (self.0)(x)
    }
}

pub struct ExpertPool {
    experts: Vec<Box<dyn Expert>>,
    labels: Vec<String>,
    input_dim: usize,
}

impl fmt::Debug for ExpertPool {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExpertPool")
            .field("labels", &self.labels)
            .field("input_dim", &self.input_dim)
            .finish()
    }
}

impl ExpertPool {
    pub fn new(input_dim: usize) -> Self {
        ExpertPool {
            experts: Vec::new(),
            labels: Vec::new(),
            input_dim,
        }
    }

    pub fn push(mut self, label: impl Into<String>, expert: impl Expert + 'static) -> Self {
        self.experts.push(Box::new(expert));
        self.labels.push(label.into());
        self
    }

    /// Ten nested linear experts on four inputs, from single-term models up to
    /// the full `1 + 1.1 x1 + 1.2 x2 + 1.3 x3 + 1.4 x4`.
    pub fn nested_linear() -> Self {
        let c = [1.1, 1.2, 1.3, 1.4];
        let mut pool = ExpertPool::new(4);
        for k in 0..4 {
            let mut coefs = vec![0.0; 4];
            coefs[k] = 1.0;
            pool = pool.push(format!("E{}", k + 1), LinearExpert::new(0.0, coefs));
        }
        for k in 0..4 {
            let mut coefs = vec![0.0; 4];
            coefs[k] = c[k];
            pool = pool.push(format!("E{}", k + 5), LinearExpert::new(1.0, coefs));
        }
        pool = pool.push("E9", LinearExpert::new(1.0, vec![1.1, 1.2, 1.3, 0.0]));
        pool.push("E10", LinearExpert::new(1.0, c.to_vec()))
    }

    pub fn len(&self) -> usize {
        self.experts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experts.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn predict_one(&self, index: usize, x: &[f64]) -> Result<f64> {
        let wrap = |message: String| Error::ExpertError { index, message };
        let expert = self
            .experts
            .get(index)
            .ok_or_else(|| wrap("no such expert".into()))?;
        let v = expert.predict(x).map_err(wrap)?;
        if !v.is_finite() {
            return Err(wrap(format!("non-finite prediction {v}")));
        }
        Ok(v)
    }

    pub fn predict_all(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("expert input", x.len(), self.input_dim)?;
        (0..self.len()).map(|i| self.predict_one(i, x)).collect()
    }
}

/// Squared error of each prediction, clamped to `[0, cap]`.
pub fn squared_losses(predictions: &[f64], y: f64, cap: f64) -> Vec<f64> {
    predictions
        .iter()
        .map(|p| ((p - y) * (p - y)).min(cap))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleState {
    weights: ProbVector,
    eta: f64,
    cumulative_loss: Vec<f64>,
    cumulative_weighted_loss: f64,
    steps: u64,
}

impl EnsembleState {
    /// Uniform weights over `n` experts.
    pub fn new(n: usize, eta: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("ensemble needs at least one expert"));
        }
        EnsembleState::with_weights(ProbVector::uniform(n), eta)
    }

    pub fn with_weights(weights: ProbVector, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::invalid(format!("eta must be > 0, got {eta}")));
        }
        let n = weights.len();
        Ok(EnsembleState {
            weights,
            eta,
            cumulative_loss: vec![0.0; n],
            cumulative_weighted_loss: 0.0,
            steps: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &ProbVector {
        &self.weights
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn cumulative_loss(&self) -> &[f64] {
        &self.cumulative_loss
    }

    pub fn cumulative_weighted_loss(&self) -> f64 {
        self.cumulative_weighted_loss
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn check_losses(&self, losses: &[f64]) -> Result<()> {
        check_len("expert losses", losses.len(), self.len())?;
        check_finite("expert losses", losses)?;
        if let Some(l) = losses.iter().find(|&&l| l < 0.0) {
            return Err(Error::invalid(format!("losses must be non-negative, got {l}")));
        }
        Ok(())
    }

    /// Loss of the mixture under the current weights.
    pub fn expected_loss(&self, losses: &[f64]) -> Result<f64> {
        self.check_losses(losses)?;
        Ok(self.weights.dot(losses))
    }

    pub fn update_weights(&self, losses: &[f64]) -> Result<Self> {
        let mixture = self.expected_loss(losses)?;
        let z: Vec<f64> = self
            .weights
            .as_slice()
            .iter()
            .zip(losses)
            .map(|(g, l)| g - self.eta * l)
            .collect();
        let weights = project_simplex(&z)?;
        let cumulative_loss = self
            .cumulative_loss
            .iter()
            .zip(losses)
            .map(|(c, l)| c + l)
            .collect();
        Ok(EnsembleState {
            weights,
            eta: self.eta,
            cumulative_loss,
            cumulative_weighted_loss: self.cumulative_weighted_loss + mixture,
            steps: self.steps + 1,
        })
    }

    /// `sum_i g_i * predictions_i`.
    pub fn combine(&self, predictions: &[f64]) -> Result<f64> {
        check_len("expert predictions", predictions.len(), self.len())?;
        Ok(self.weights.dot(predictions))
    }

    pub fn predict_weighted(&self, pool: &ExpertPool, x: &[f64]) -> Result<f64> {
        check_len("expert pool size", pool.len(), self.len())?;
        self.combine(&pool.predict_all(x)?)
    }

    /// Prediction of the currently heaviest expert (lowest index on ties).
    pub fn predict_best(&self, pool: &ExpertPool, x: &[f64]) -> Result<(f64, usize)> {
        check_len("expert pool size", pool.len(), self.len())?;
        check_len("expert input", x.len(), pool.input_dim())?;
        let k = self.weights.argmax();
        Ok((pool.predict_one(k, x)?, k))
    }
}

/// One step of an ensemble run: the losses revealed at that step and the
/// weights produced by the update that consumed them.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretStep {
    pub losses: Vec<f64>,
    pub weights_after: ProbVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretHistory {
    pub initial: ProbVector,
    pub steps: Vec<RegretStep>,
}

impl RegretHistory {
    pub fn new(initial: ProbVector) -> Self {
        RegretHistory {
            initial,
            steps: Vec::new(),
        }
    }

    pub fn record(&mut self, losses: &[f64], weights_after: &ProbVector) {
        self.steps.push(RegretStep {
            losses: losses.to_vec(),
            weights_after: weights_after.clone(),
        });
    }

    pub fn total_losses(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.initial.len()];
        for step in &self.steps {
            for (t, l) in total.iter_mut().zip(&step.losses) {
                *t += l;
            }
        }
        total
    }

    /// Best fixed weight vector in hindsight. Costs are linear in the weights,
    /// so a vertex attains the optimum; ties go to the lowest index.
    pub fn offline_optimum(&self) -> ProbVector {
        let total = self.total_losses();
        let mut best = 0;
        for (i, &t) in total.iter().enumerate() {
            if t < total[best] {
                best = i;
            }
        }
        ProbVector::vertex(total.len(), best)
    }
}

/// Both sides of the cumulative regret bound
/// `2 * sum_t eta * [c_t(g_{t+1}) - c_t(g)] <= |g_1 - g|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegretCheck {
    pub lhs: f64,
    /// Squared Euclidean distance `|g_1 - g|^2`.
    pub rhs: f64,
    /// Unsquared distance `|g_1 - g|`, reported alongside for comparison.
    pub rhs_norm: f64,
    pub holds: bool,
}

/// Evaluates the regret bound against comparator `g_star` with a constant
/// step size. Each step's cost is taken at the weights produced by the
/// proximal update of that step.
pub fn regret_check(history: &RegretHistory, eta: f64, g_star: &ProbVector) -> Result<RegretCheck> {
    let n = history.initial.len();
    check_len("comparator", g_star.len(), n)?;
    let mut lhs = 0.0;
    for (t, step) in history.steps.iter().enumerate() {
        check_len(&format!("losses at step {t}"), step.losses.len(), n)?;
        check_len(&format!("weights at step {t}"), step.weights_after.len(), n)?;
        lhs += step.weights_after.dot(&step.losses) - g_star.dot(&step.losses);
    }
    lhs *= 2.0 * eta;
    let rhs = history.initial.squared_distance(g_star);
    Ok(RegretCheck {
        lhs,
        rhs,
        rhs_norm: rhs.sqrt(),
        holds: lhs <= rhs + 1e-9,
    })
}

/// Rows of `step, expert_index, weight, cumulative_loss`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WeightTrajectory {
    pub rows: Vec<WeightRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightRow {
    pub step: u64,
    pub expert_index: usize,
    pub weight: f64,
    pub cumulative_loss: f64,
}

impl WeightTrajectory {
    pub fn record(&mut self, state: &EnsembleState) {
        for (i, (&w, &c)) in state
            .weights()
            .as_slice()
            .iter()
            .zip(state.cumulative_loss())
            .enumerate()
        {
            self.rows.push(WeightRow {
                step: state.steps(),
                expert_index: i,
                weight: w,
                cumulative_loss: c,
            });
        }
    }

    /// Weight of `expert` at `step`, if recorded.
    pub fn weight_at(&self, step: u64, expert: usize) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.step == step && r.expert_index == expert)
            .map(|r| r.weight)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row).map_err(|e| Error::invalid(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("weights.csv", e))
    }
}
