//! Streaming model-quality metrics, ROC analysis, an individuals control
//! chart for residuals and a DDM-style error-rate tracker.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Individuals-chart constant: `3 / d2` with `d2 = 1.128` for moving ranges of two.
pub const ICHART_CONSTANT: f64 = 2.66;

/// Default capacity of the residual history kept by [`RegressionTally`].
pub const DEFAULT_RESIDUAL_HISTORY: usize = 4096;

/// Single-pass accumulator of regression residuals and response moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTally {
    n: u64,
    p: usize,
    sse: f64,
    y_mean: f64,
    y_m2: f64,
    residuals: VecDeque<f64>,
    capacity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionMetrics {
    pub sst: f64,
    pub sse: f64,
    pub n: u64,
    pub p: usize,
    pub r2: f64,
    pub sigma_hat: f64,
    pub rmse: f64,
}

impl RegressionMetrics {
    /// Metrics from summary sums: `r2 = 1 - sse/sst`, `sigma_hat = sqrt(sse/(n-p))`,
    /// `rmse = sqrt(sse/n)`.
    pub fn from_sums(sst: f64, sse: f64, n: u64, p: usize) -> Result<Self> {
        if n <= p as u64 {
            return Err(Error::InsufficientData(format!("need n > p, have n = {n}, p = {p}")));
        }
        if sst <= 0.0 {
            return Err(Error::DegenerateTarget);
        }
        if !sse.is_finite() || !sst.is_finite() {
            return Err(Error::Numeric("sum of squares overflowed; predictions diverged".into()));
        }
        Ok(RegressionMetrics {
            sst,
            sse,
            n,
            p,
            r2: 1.0 - sse / sst,
            sigma_hat: (sse / (n - p as u64) as f64).sqrt(),
            rmse: (sse / n as f64).sqrt(),
        })
    }
}

impl RegressionTally {
    pub fn new(p: usize) -> Self {
        RegressionTally::with_capacity(p, DEFAULT_RESIDUAL_HISTORY)
    }

    pub fn with_capacity(p: usize, capacity: usize) -> Self {
        RegressionTally {
            n: 0,
            p,
            sse: 0.0,
            y_mean: 0.0,
            y_m2: 0.0,
            residuals: VecDeque::new(),
            capacity,
        }
    }

    pub fn push(&mut self, y: f64, prediction: f64) {
        self.n += 1;
        let r = y - prediction;
        self.sse += r * r;
        let delta = y - self.y_mean;
        self.y_mean += delta / self.n as f64;
        self.y_m2 += delta * (y - self.y_mean);
        if self.capacity > 0 {
            if self.residuals.len() == self.capacity {
                self.residuals.pop_front();
            }
            self.residuals.push_back(r);
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn sse(&self) -> f64 {
        self.sse
    }

    pub fn sst(&self) -> f64 {
        self.y_m2.max(0.0)
    }

    /// Most recent residuals, oldest first.
    pub fn residuals(&self) -> &VecDeque<f64> {
        &self.residuals
    }

    /// `SSE / (n - p)` once there are more observations than parameters.
    pub fn noise_var(&self) -> Option<f64> {
        (self.n > self.p as u64).then(|| self.sse / (self.n - self.p as u64) as f64)
    }

    pub fn metrics(&self) -> Result<RegressionMetrics> {
        RegressionMetrics::from_sums(self.sst(), self.sse, self.n, self.p)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTally {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Rates with a zero denominator are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub precision: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl ConfusionTally {
    pub fn push(&mut self, truth: u8, predicted: u8) {
        match (truth, predicted) {
            (1, 1) => self.tp += 1,
            (0, 1) => self.fp += 1,
            (0, 0) => self.tn += 1,
            _ => self.fn_ += 1,
        }
    }

    pub fn from_predictions(truths: &[u8], predicted: &[u8]) -> Result<Self> {
        check_len("predictions", predicted.len(), truths.len())?;
        let mut c = ConfusionTally::default();
        for (&t, &p) in truths.iter().zip(predicted) {
            if t > 1 || p > 1 {
                return Err(Error::invalid("class labels must be 0 or 1"));
            }
            c.push(t, p);
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn metrics(&self) -> Result<ClassificationMetrics> {
        let total = self.total();
        if total == 0 {
            return Err(Error::InsufficientData("confusion tally is empty".into()));
        }
        let tpr = ratio(self.tp, self.tp + self.fn_);
        let precision = ratio(self.tp, self.tp + self.fp);
        let f1 = match (precision, tpr) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        Ok(ClassificationMetrics {
            accuracy: (self.tp + self.tn) as f64 / total as f64,
            tpr,
            tnr: ratio(self.tn, self.tn + self.fp),
            precision,
            f1,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocSummary {
    pub auc: f64,
    /// Score cut maximizing Youden's `J = TPR - FPR` (predict 1 when `score >= cut`).
    pub optimal_threshold: f64,
    pub youden_j: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

fn class_counts(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    check_len("labels", labels.len(), scores.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::invalid("class labels must be 0 or 1"));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateLabels);
    }
    Ok((pos, neg))
}

/// ROC points for each distinct score used as a cut, from the highest cut down.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    let (pos, neg) = class_counts(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let cut = scores[order[i]];
        while i < order.len() && scores[order[i]] == cut {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold: cut,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    Ok(points)
}

/// AUC by midranks (equivalent to the Mann-Whitney statistic) and the
/// Youden-optimal threshold; ties in `J` go to the lower threshold.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<RocSummary> {
    let (pos, neg) = class_counts(scores, labels)?;
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks are 1-based; the tie block i..=j shares the midrank
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let (p, q) = (pos as f64, neg as f64);
    let auc = (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * q);

    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    for pt in roc_curve(scores, labels)?.iter().skip(1) {
        let j = pt.tpr - pt.fpr;
        // points arrive with decreasing thresholds, so >= keeps the lower cut on ties
        if j >= best.0 {
            best = (j, pt.threshold);
        }
    }
    Ok(RocSummary {
        auc,
        optimal_threshold: best.1,
        youden_j: best.0,
    })
}

/// Summed cross-entropy (natural log) of probabilities against labels,
/// with probabilities clamped away from 0 and 1.
pub fn total_log_loss(probabilities: &[f64], labels: &[u8]) -> Result<f64> {
    check_len("labels", labels.len(), probabilities.len())?;
    Ok(probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(1e-300, 1.0 - 1e-16);
            if y == 1 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum())
}

/// Individuals (I-MR) control chart limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IChart {
    pub center: f64,
    pub upper: f64,
    pub lower: f64,
    pub basis_n: usize,
}

impl IChart {
    pub fn fit(residuals: &[f64]) -> Result<Self> {
        ichart_fit(residuals)
    }

    /// Nelson rule 1: the point lies strictly outside the control limits.
    pub fn violates(&self, residual: f64) -> bool {
        nelson_rule1(self, residual)
    }
}

/// `center = mean`, limits `center +- 2.66 * mean moving range`.
pub fn ichart_fit(residuals: &[f64]) -> Result<IChart> {
    if residuals.len() < 2 {
        return Err(Error::InsufficientData(
            "control chart needs at least 2 residuals".into(),
        ));
    }
    let n = residuals.len();
    let center = residuals.iter().sum::<f64>() / n as f64;
    let mr_bar = residuals.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / (n - 1) as f64;
    let half = ICHART_CONSTANT * mr_bar;
    Ok(IChart {
        center,
        upper: center + half,
        lower: center - half,
        basis_n: n,
    })
}

pub fn nelson_rule1(chart: &IChart, residual: f64) -> bool {
    residual > chart.upper || residual < chart.lower
}

/// Incremental form of [`ichart_fit`] for an expanding residual window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningChart {
    n: usize,
    sum: f64,
    sum_mr: f64,
    last: f64,
}

impl RunningChart {
    pub fn from_residuals(residuals: &[f64]) -> Self {
        let mut c = RunningChart::default();
        for &r in residuals {
            c.push(r);
        }
        c
    }

    pub fn push(&mut self, residual: f64) {
        if self.n > 0 {
            self.sum_mr += (residual - self.last).abs();
        }
        self.n += 1;
        self.sum += residual;
        self.last = residual;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn chart(&self) -> Result<IChart> {
        if self.n < 2 {
            return Err(Error::InsufficientData(
                "control chart needs at least 2 residuals".into(),
            ));
        }
        let center = self.sum / self.n as f64;
        let half = ICHART_CONSTANT * self.sum_mr / (self.n - 1) as f64;
        Ok(IChart {
            center,
            upper: center + half,
            lower: center - half,
            basis_n: self.n,
        })
    }
}

/// Which residuals the control chart is fitted on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartBasis {
    /// Limits fixed from the warm-up residuals.
    #[default]
    WarmupOnly,
    /// Limits refitted on every residual seen so far.
    Expanding,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriftStatus {
    Stable,
    Warning,
    Drift,
}

/// Running error rate `p_i`, its standard error `s_i` and the minimum of
/// `p_i + s_i` seen so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DdmTrace {
    pub step: u64,
    pub errors: u64,
    pub p_i: f64,
    pub s_i: f64,
    pub p_min: f64,
    pub s_min: f64,
    /// Steps before minima are tracked and alarms can fire.
    pub min_samples: u64,
    pub warning_level: f64,
    pub drift_level: f64,
}

impl Default for DdmTrace {
    fn default() -> Self {
        DdmTrace::new(30)
    }
}

impl DdmTrace {
    pub fn new(min_samples: u64) -> Self {
        DdmTrace {
            step: 0,
            errors: 0,
            p_i: 0.0,
            s_i: 0.0,
            p_min: f64::INFINITY,
            s_min: f64::INFINITY,
            min_samples,
            warning_level: 2.0,
            drift_level: 3.0,
        }
    }

    pub fn update(&self, error: bool) -> (DdmTrace, DriftStatus) {
        ddm_update(self, error)
    }
}

pub fn ddm_update(trace: &DdmTrace, error: bool) -> (DdmTrace, DriftStatus) {
    let mut t = *trace;
    t.step += 1;
    t.errors += u64::from(error);
    let i = t.step as f64;
    t.p_i = t.errors as f64 / i;
    t.s_i = (t.p_i * (1.0 - t.p_i) / i).sqrt();
    if t.step < t.min_samples {
        return (t, DriftStatus::Stable);
    }
    if t.p_i + t.s_i < t.p_min + t.s_min {
        t.p_min = t.p_i;
        t.s_min = t.s_i;
    }
    let level = t.p_i + t.s_i;
    let status = if level > t.p_min + t.drift_level * t.s_min {
        DriftStatus::Drift
    } else if level > t.p_min + t.warning_level * t.s_min {
        DriftStatus::Warning
    } else {
        DriftStatus::Stable
    };
    (t, status)
}

/// Fraction of truths inside their closed interval.
pub fn empirical_coverage(intervals: &[(f64, f64)], truths: &[f64]) -> Result<f64> {
    check_len("truths", truths.len(), intervals.len())?;
    if intervals.is_empty() {
        return Err(Error::InsufficientData("no intervals".into()));
    }
    let inside = intervals
        .iter()
        .zip(truths)
        .filter(|((lo, hi), t)| *lo <= **t && **t <= *hi)
        .count();
    Ok(inside as f64 / intervals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn regression_metrics_on_reported_sums() {
        let m = RegressionMetrics::from_sums(29.1597, 0.2716, 395, 5).unwrap();
        assert!((m.r2 - 0.9907).abs() <= 1e-4);
        assert!((m.sigma_hat - 0.0264).abs() <= 1e-4);
        assert!((m.rmse - 0.0262).abs() <= 1e-4);
        assert_eq!(m.r2, 1.0 - m.sse / m.sst);
    }

    #[test]
    fn regression_metric_errors() {
        assert!(matches!(
            RegressionMetrics::from_sums(1.0, 0.1, 5, 5),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            RegressionMetrics::from_sums(0.0, 0.0, 10, 1),
            Err(Error::DegenerateTarget)
        ));
    }

    #[test]
    fn perfect_predictions() {
        let mut t = RegressionTally::new(1);
        for y in [1.0, 2.0, 4.0] {
            t.push(y, y);
        }
        assert_eq!(t.metrics().unwrap().r2, 1.0);
    }

    #[test]
    fn tally_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut t = RegressionTally::with_capacity(3, 1000);
        let mut ys = Vec::new();
        let mut preds = Vec::new();
        for _ in 0..1000 {
            let y = 50.0 + rng.random_range(-3.0..3.0);
            let p = y + rng.random_range(-0.5..0.5);
            t.push(y, p);
            ys.push(y);
            preds.push(p);
        }
        let mean = ys.iter().sum::<f64>() / 1000.0;
        let sst: f64 = ys.iter().map(|y| (y - mean).powi(2)).sum();
        let resid: Vec<f64> = ys.iter().zip(&preds).map(|(y, p)| y - p).collect();
        let sse: f64 = resid.iter().map(|r| r * r).sum();
        let m = t.metrics().unwrap();
        assert!((m.sst - sst).abs() < 1e-10 * sst.max(1.0));
        assert!((m.sse - sse).abs() < 1e-10);
        let stored: f64 = t.residuals().iter().map(|r| r * r).sum();
        assert!((stored - sse).abs() < 1e-10);
    }

    #[test]
    fn residual_history_is_bounded() {
        let mut t = RegressionTally::with_capacity(1, 3);
        for k in 0..5 {
            t.push(k as f64, 0.0);
        }
        assert_eq!(t.residuals().iter().copied().collect::<Vec<_>>(), vec![2.0, 3.0, 4.0]);
        assert_eq!(t.n(), 5);
    }

    #[test]
    fn classification_examples() {
        let all = ConfusionTally { tp: 3, fp: 0, tn: 4, fn_: 0 }.metrics().unwrap();
        assert_eq!(all.accuracy, 1.0);
        assert_eq!(all.f1, Some(1.0));

        let m = ConfusionTally { tp: 1, fp: 0, tn: 0, fn_: 1 }.metrics().unwrap();
        assert_eq!(m.precision, Some(1.0));
        assert_eq!(m.tpr, Some(0.5));
        assert!((m.f1.unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.tnr, None);

        assert!(ConfusionTally::default().metrics().is_err());
    }

    #[test]
    fn f1_consistent_with_precision_and_recall() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let c = ConfusionTally {
                tp: rng.random_range(1..50),
                fp: rng.random_range(0..50),
                tn: rng.random_range(0..50),
                fn_: rng.random_range(0..50),
            };
            let m = c.metrics().unwrap();
            let (p, r) = (m.precision.unwrap(), m.tpr.unwrap());
            assert!((m.f1.unwrap() - 2.0 * p * r / (p + r)).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_perfect_and_degenerate() {
        let s = roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap();
        assert_eq!(s.auc, 1.0);
        assert_eq!(s.optimal_threshold, 0.8);
        assert_eq!(s.youden_j, 1.0);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(Error::DegenerateLabels)));
        assert!(roc_auc(&[0.1], &[0, 1]).is_err());
    }

    #[test]
    fn auc_matches_pair_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..200 {
            let n = rng.random_range(2..25);
            // coarse scores so that ties occur
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64 / 5.0).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
            labels[0] = 0;
            labels[1] = 1;
            let mut u = 0.0;
            let (mut np, mut nn) = (0.0, 0.0);
            for i in 0..n {
                if labels[i] == 1 {
                    np += 1.0;
                } else {
                    nn += 1.0;
                }
            }
            for i in (0..n).filter(|&i| labels[i] == 1) {
                for j in (0..n).filter(|&j| labels[j] == 0) {
                    u += if scores[i] > scores[j] {
                        1.0
                    } else if scores[i] == scores[j] {
                        0.5
                    } else {
                        0.0
                    };
                }
            }
            let auc = roc_auc(&scores, &labels).unwrap().auc;
            assert!((auc - u / (np * nn)).abs() < 1e-12);
            let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
            let back = roc_auc(&scores, &flipped).unwrap().auc;
            assert!((back - (1.0 - auc)).abs() < 1e-12);
        }
    }

    #[test]
    fn auc_of_unrelated_scores_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let labels: Vec<u8> = (0..10_000).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let auc = roc_auc(&scores, &labels).unwrap().auc;
        assert!((auc - 0.5).abs() < 0.02);
    }

    #[test]
    fn youden_tie_prefers_lower_threshold() {
        // cuts at 0.9 and 0.4 both give J = 0.5
        let s = roc_auc(&[0.9, 0.6, 0.4, 0.1], &[1, 0, 1, 0]).unwrap();
        assert_eq!(s.youden_j, 0.5);
        assert_eq!(s.optimal_threshold, 0.4);
    }

    #[test]
    fn log_loss_total() {
        let l = total_log_loss(&[0.5, 0.5], &[0, 1]).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-15);
        assert!(total_log_loss(&[1.0], &[0]).unwrap().is_finite());
    }

    #[test]
    fn ichart_examples() {
        let c = ichart_fit(&[0.3, 0.3, 0.3]).unwrap();
        assert_eq!((c.lower, c.center, c.upper), (0.3, 0.3, 0.3));

        let alt: Vec<f64> = (0..10).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let c = ichart_fit(&alt).unwrap();
        assert_eq!(c.center, 0.0);
        assert!((c.upper - 5.32).abs() < 1e-12);
        assert!((c.lower + 5.32).abs() < 1e-12);
        assert!(ichart_fit(&[1.0]).is_err());
    }

    #[test]
    fn nelson_rule_boundaries() {
        let c = IChart { center: 0.0004, upper: 0.0821, lower: -0.0813, basis_n: 395 };
        assert!(!nelson_rule1(&c, c.center));
        assert!(!nelson_rule1(&c, c.upper));
        assert!(!nelson_rule1(&c, c.lower));
        assert!(nelson_rule1(&c, c.upper + 1e-9));
        assert!(nelson_rule1(&c, c.lower - 1e-9));
    }

    #[test]
    fn ddm_all_correct_is_stable() {
        let mut t = DdmTrace::default();
        for _ in 0..500 {
            let (next, status) = t.update(false);
            assert_eq!(status, DriftStatus::Stable);
            t = next;
        }
        assert_eq!(t.p_i, 0.0);
    }

    #[test]
    fn ddm_error_rate_is_exact() {
        let mut t = DdmTrace::default();
        for k in 0..37 {
            t = t.update(k % 3 == 0).0;
        }
        assert_eq!(t.p_i, 13.0 / 37.0);
    }

    #[test]
    fn ddm_detects_step_change() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut t = DdmTrace::default();
        for _ in 0..1000 {
            t = t.update(rng.random_bool(0.1)).0;
        }
        let detected = (0..200).any(|_| {
            let (next, status) = t.update(rng.random_bool(0.5));
            t = next;
            status == DriftStatus::Drift
        });
        assert!(detected);
    }

    #[test]
    fn coverage_examples() {
        let iv = vec![(0.0, 1.0); 4];
        assert_eq!(empirical_coverage(&iv, &[0.0, 0.5, 1.0, 0.2]).unwrap(), 1.0);
        assert_eq!(empirical_coverage(&iv, &[2.0, -1.0, 1.5, 9.0]).unwrap(), 0.0);
        assert!(empirical_coverage(&iv, &[0.5]).is_err());

        let truths: Vec<f64> = (0..305).map(|k| if k < 11 { 5.0 } else { 0.5 }).collect();
        let cov = empirical_coverage(&vec![(0.0, 1.0); 305], &truths).unwrap();
        assert!((cov - 0.9639).abs() <= 1e-4);
    }

    #[test]
    fn running_chart_matches_batch() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let r: Vec<f64> = (0..300).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut c = RunningChart::from_residuals(&r[..1]);
        assert!(c.chart().is_err());
        for k in 1..r.len() {
            c.push(r[k]);
            let a = c.chart().unwrap();
            let b = ichart_fit(&r[..=k]).unwrap();
            assert!((a.upper - b.upper).abs() < 1e-12 && (a.lower - b.lower).abs() < 1e-12);
            assert_eq!(a.basis_n, b.basis_n);
        }
    }
}
