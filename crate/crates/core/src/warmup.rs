//! Warm-up estimation: time-ordered cross-validation for the Tikhonov
//! strength, a ridge fit for the initial mean, and the matching initial
//! covariance.

use std::io::Write;
use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::geometry::SymMatrix;
use crate::logistic::{log_loss_from_logit, sigmoid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Training window anchored at the start and grown by `step` each split.
    #[serde(alias = "expanding-window", alias = "rolling-increment")]
    Expanding,
    /// Fixed-length training window that slides forward by `step`.
    #[serde(alias = "rolling-window")]
    Sliding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub mode: SplitMode,
    pub initial_train: usize,
    pub step: usize,
    pub horizon: usize,
    pub n_splits: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Range<usize>,
    pub validation: Range<usize>,
}

impl SplitPlan {
    pub fn expanding(initial_train: usize, step: usize, horizon: usize, n_splits: usize) -> Self {
        SplitPlan {
            mode: SplitMode::Expanding,
            initial_train,
            step,
            horizon,
            n_splits,
        }
    }

    pub fn sliding(initial_train: usize, step: usize, horizon: usize, n_splits: usize) -> Self {
        SplitPlan {
            mode: SplitMode::Sliding,
            ..SplitPlan::expanding(initial_train, step, horizon, n_splits)
        }
    }

    /// Number of observations the plan touches.
    pub fn span(&self) -> usize {
        self.initial_train + self.step * self.n_splits.saturating_sub(1) + self.horizon
    }

    pub fn make_splits(&self, n_total: usize) -> Result<Vec<Split>> {
        if self.initial_train == 0 || self.step == 0 || self.horizon == 0 || self.n_splits == 0 {
            return Err(Error::InvalidPlan(format!(
                "all plan fields must be positive: {self:?}"
            )));
        }
        if self.span() > n_total {
            return Err(Error::InvalidPlan(format!(
                "plan needs {} observations but only {n_total} are available",
                self.span()
            )));
        }
        Ok((0..self.n_splits)
            .map(|k| {
                let offset = k * self.step;
                let train = match self.mode {
                    SplitMode::Expanding => 0..self.initial_train + offset,
                    SplitMode::Sliding => offset..offset + self.initial_train,
                };
                let validation = train.end..train.end + self.horizon;
                Split { train, validation }
            })
            .collect())
    }
}

/// Candidate regularization strengths, sorted ascending without duplicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LambdaGrid(Vec<f64>);

impl LambdaGrid {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("lambda grid is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidConfig(format!("lambda values must be >= 0, got {v}")));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(LambdaGrid(values))
    }

    /// `count` evenly spaced values from `lo` to `hi` inclusive.
    pub fn linspace(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidConfig("lambda grid needs at least one value".into()));
        }
        if count == 1 {
            return LambdaGrid::new(vec![lo]);
        }
        let step = (hi - lo) / (count - 1) as f64;
        LambdaGrid::new((0..count).map(|i| lo + step * i as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for LambdaGrid {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        LambdaGrid::new(v)
    }
}

impl From<LambdaGrid> for Vec<f64> {
    fn from(g: LambdaGrid) -> Self {
        g.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeFit {
    pub mu: Vec<f64>,
    /// `SSE / (n - p)`; falls back to `SSE / n` when `n <= p`.
    pub noise_var: f64,
    pub sse: f64,
    pub n: usize,
    pub p: usize,
    /// Upper-triangular factor with `R'R = X'X + lambda I`.
    r: DMatrix<f64>,
}

impl RidgeFit {
    /// `noise_var * (X'X + lambda I)^-1`, computed from the triangular factor.
    pub fn covariance(&self, noise_var: f64) -> Result<SymMatrix> {
        let p = self.p;
        let r_inv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .ok_or(Error::SingularSystem)?;
        SymMatrix::new(&r_inv * r_inv.transpose() * noise_var)
    }
}

fn validate_design(x: &DMatrix<f64>, y_len: usize, lambda: f64) -> Result<()> {
    check_len("response length", y_len, x.nrows())?;
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InsufficientData("design matrix is empty".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("design matrix has non-finite entries"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    Ok(())
}

/// Ridge regression `mu = (X'X + lambda I)^-1 X'y` solved by QR on the
/// augmented system `[X; sqrt(lambda) I] mu = [y; 0]`.
pub fn ridge_fit(x: &DMatrix<f64>, y: &[f64], lambda: f64) -> Result<RidgeFit> {
    validate_design(x, y.len(), lambda)?;
    let (n, p) = x.shape();
    if lambda == 0.0 && n < p {
        return Err(Error::SingularSystem);
    }
    let mut a = DMatrix::zeros(n + p, p);
    a.view_mut((0, 0), (n, p)).copy_from(x);
    let root = lambda.sqrt();
    for j in 0..p {
        a[(n + j, j)] = root;
    }
    let mut b = DVector::zeros(n + p);
    b.rows_mut(0, n).copy_from_slice(y);

    let qr = a.qr();
    let r = qr.r();
    let max_diag = (0..p).map(|j| r[(j, j)].abs()).fold(0.0, f64::max);
    if max_diag == 0.0 || (0..p).any(|j| r[(j, j)].abs() <= 1e-12 * max_diag) {
        return Err(Error::SingularSystem);
    }
    qr.q_tr_mul(&mut b);
    let rhs = b.rows(0, p).into_owned();
    let mu = r.solve_upper_triangular(&rhs).ok_or(Error::SingularSystem)?;

    let fitted = x * &mu;
    let sse: f64 = y.iter().zip(fitted.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    let dof = if n > p { n - p } else { n };
    Ok(RidgeFit {
        mu: mu.iter().copied().collect(),
        noise_var: sse / dof as f64,
        sse,
        n,
        p,
        r,
    })
}

/// Initial weight covariance `noise_var * (X'X + lambda I)^-1`.
pub fn init_covariance(x: &DMatrix<f64>, lambda: f64, noise_var: f64) -> Result<SymMatrix> {
    if !(noise_var.is_finite() && noise_var >= 0.0) {
        return Err(Error::invalid(format!("noise variance must be >= 0, got {noise_var}")));
    }
    let zeros = vec![0.0; x.nrows()];
    ridge_fit(x, &zeros, lambda)?.covariance(noise_var)
}

/// L2-penalized logistic regression minimizing
/// `sum_i logloss(y_i, x_i'mu) + lambda |mu|^2` by damped Newton steps.
pub fn logistic_ridge_fit(x: &DMatrix<f64>, y: &[u8], lambda: f64) -> Result<Vec<f64>> {
    validate_design(x, y.len(), lambda)?;
    if let Some(bad) = y.iter().find(|&&v| v > 1) {
        return Err(Error::invalid(format!("class label must be 0 or 1, got {bad}")));
    }
    let (n, p) = x.shape();
    let objective = |mu: &DVector<f64>| -> f64 {
        let z = x * mu;
        let loss: f64 = (0..n).map(|i| log_loss_from_logit(y[i], z[i])).sum();
        loss + lambda * mu.norm_squared()
    };
    let mut mu = DVector::zeros(p);
    let mut current = objective(&mu);
    for _ in 0..100 {
        let z = x * &mu;
        let mut grad = &mu * (2.0 * lambda);
        let mut hess = DMatrix::identity(p, p) * (2.0 * lambda);
        for i in 0..n {
            let prob = sigmoid(z[i]);
            let row = x.row(i).transpose();
            grad += &row * (prob - f64::from(y[i]));
            hess += &row * row.transpose() * (prob * (1.0 - prob));
        }
        let step = hess
            .cholesky()
            .ok_or(Error::SingularSystem)?
            .solve(&grad);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let candidate = &mu - &step * scale;
            let value = objective(&candidate);
            if value <= current {
                mu = candidate;
                current = value;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted || step.norm() * scale < 1e-10 {
            break;
        }
    }
    if mu.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("logistic fit diverged".into()));
    }
    Ok(mu.iter().copied().collect())
}

/// Laplace covariance `(X' W X + 2 lambda I)^-1` at the weights `mu`, with
/// `W = diag(p_i (1 - p_i))`.
pub fn logistic_laplace_covariance(x: &DMatrix<f64>, mu: &[f64], lambda: f64) -> Result<SymMatrix> {
    validate_design(x, x.nrows(), lambda)?;
    check_len("weight vector", mu.len(), x.ncols())?;
    let p = x.ncols();
    let z = x * DVector::from_column_slice(mu);
    let mut hess = DMatrix::identity(p, p) * (2.0 * lambda);
    for i in 0..x.nrows() {
        let prob = sigmoid(z[i]);
        let row = x.row(i).transpose();
        hess += &row * row.transpose() * (prob * (1.0 - prob));
    }
    let inv = hess.cholesky().ok_or(Error::SingularSystem)?.inverse();
    SymMatrix::new(inv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMetric {
    Rmse,
    Accuracy,
}

impl SelectionMetric {
    fn better(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            SelectionMetric::Rmse => candidate < incumbent,
            SelectionMetric::Accuracy => candidate > incumbent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreRow {
    pub lambda: f64,
    pub split_index: usize,
    pub metric_value: Option<f64>,
    pub aggregate: Option<f64>,
    #[serde(skip)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub score: f64,
    pub metric: SelectionMetric,
    pub table: Vec<ScoreRow>,
}

impl LambdaSelection {
    /// `(lambda, aggregate)` per grid value, in grid order.
    pub fn aggregates(&self) -> Vec<(f64, Option<f64>)> {
        let mut out: Vec<(f64, Option<f64>)> = Vec::new();
        for row in &self.table {
            if out.last().map(|(l, _)| *l) != Some(row.lambda) {
                out.push((row.lambda, row.aggregate));
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.table {
            w.serialize(row).map_err(|e| Error::invalid(e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io("score_table.csv", e))
    }
}

fn rows_of(x: &DMatrix<f64>, range: &Range<usize>) -> DMatrix<f64> {
    x.rows(range.start, range.len()).into_owned()
}

fn score_split(
    x: &DMatrix<f64>,
    y: &[f64],
    split: &Split,
    lambda: f64,
    metric: SelectionMetric,
) -> Result<f64> {
    let xt = rows_of(x, &split.train);
    let xv = rows_of(x, &split.validation);
    let yv = &y[split.validation.clone()];
    match metric {
        SelectionMetric::Rmse => {
            let fit = ridge_fit(&xt, &y[split.train.clone()], lambda)?;
            let pred = &xv * DVector::from_column_slice(&fit.mu);
            let mse = yv
                .iter()
                .zip(pred.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / yv.len() as f64;
            Ok(mse.sqrt())
        }
        SelectionMetric::Accuracy => {
            let labels: Vec<u8> = y[split.train.clone()].iter().map(|&v| u8::from(v >= 0.5)).collect();
            let mu = logistic_ridge_fit(&xt, &labels, lambda)?;
            let z = &xv * DVector::from_column_slice(&mu);
            let hits = yv
                .iter()
                .zip(z.iter())
                .filter(|(t, zi)| u8::from(sigmoid(**zi) >= 0.5) == u8::from(**t >= 0.5))
                .count();
            Ok(hits as f64 / yv.len() as f64)
        }
    }
}

/// Scores every `(lambda, split)` pair, averages per lambda, and returns the
/// best lambda (lowest RMSE or highest accuracy; ties go to the smaller
/// lambda). Fit failures are recorded in the table rather than aborting.
pub fn select_lambda(
    x: &DMatrix<f64>,
    y: &[f64],
    plan: &SplitPlan,
    grid: &LambdaGrid,
    metric: SelectionMetric,
) -> Result<LambdaSelection> {
    check_len("response length", y.len(), x.nrows())?;
    let splits = plan.make_splits(x.nrows())?;
    let jobs: Vec<(f64, usize)> = grid
        .values()
        .iter()
        .flat_map(|&l| (0..splits.len()).map(move |k| (l, k)))
        .collect();
    let scores: Vec<Result<f64>> = jobs
        .par_iter()
        .map(|&(lambda, k)| score_split(x, y, &splits[k], lambda, metric))
        .collect();

    let mut table = Vec::with_capacity(jobs.len());
    let mut best: Option<(f64, f64)> = None;
    for (chunk_jobs, chunk_scores) in jobs.chunks(splits.len()).zip(scores.chunks(splits.len())) {
        let ok: Vec<f64> = chunk_scores.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
        let aggregate = (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64);
        let lambda = chunk_jobs[0].0;
        for (&(_, k), score) in chunk_jobs.iter().zip(chunk_scores) {
            table.push(ScoreRow {
                lambda,
                split_index: k,
                metric_value: score.as_ref().ok().copied(),
                aggregate,
                error: score.as_ref().err().map(|e| e.to_string()),
            });
        }
        if let Some(a) = aggregate {
            if best.is_none_or(|(_, b)| metric.better(a, b)) {
                best = Some((lambda, a));
            }
        }
    }
    let (lambda, score) = best.ok_or_else(|| {
        Error::InsufficientData("every lambda failed on every split".into())
    })?;
    Ok(LambdaSelection {
        lambda,
        score,
        metric,
        table,
    })
}
