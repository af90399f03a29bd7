//! Online binary classifier with a Gaussian weight distribution.
//!
//! The expected logistic loss under `N(mu, sigma)` has no closed form, so the
//! loss is evaluated at the mean weights. The covariance only carries the
//! Tikhonov term and is shrunk by `eta * lambda` per step before projection.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::gaussian::{dot, validate_hyper, validate_weights, Gradients};
use crate::geometry::{project_psd, SymMatrix};

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Cross-entropy of label `y` against the logit `z`.
pub fn log_loss_from_logit(y: u8, z: f64) -> f64 {
    // -ln sigma(z) = softplus(-z), -ln(1 - sigma(z)) = softplus(z)
    if y == 1 {
        softplus(-z)
    } else {
        softplus(z)
    }
}

fn check_label(y: u8) -> Result<()> {
    if y > 1 {
        return Err(Error::invalid(format!("class label must be 0 or 1, got {y}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    mu: Vec<f64>,
    sigma: SymMatrix,
    lambda: f64,
    eta: f64,
    threshold: f64,
}

impl LogisticModel {
    pub fn new(mu: Vec<f64>, sigma: SymMatrix, lambda: f64, eta: f64) -> Result<Self> {
        validate_hyper(lambda, eta)?;
        validate_weights(&mu, &sigma)?;
        Ok(LogisticModel {
            mu,
            sigma,
            lambda,
            eta,
            threshold: 0.5,
        })
    }

    pub fn zeros(dim: usize, lambda: f64, eta: f64) -> Result<Self> {
        LogisticModel::new(vec![0.0; dim], SymMatrix::zeros(dim), lambda, eta)
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold}")));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &SymMatrix {
        &self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    fn logit(&self, x: &[f64]) -> Result<f64> {
        check_len("feature vector", x.len(), self.dim())?;
        check_finite("feature vector", x)?;
        Ok(dot(x, &self.mu))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.logit(x)?))
    }

    /// Logistic loss at the mean weights plus `lambda * (tr sigma + mu'mu)`.
    pub fn surrogate_loss(&self, x: &[f64], y: u8) -> Result<f64> {
        check_label(y)?;
        let z = self.logit(x)?;
        let reg = self.lambda * (self.sigma.trace() + dot(&self.mu, &self.mu));
        Ok(log_loss_from_logit(y, z) + reg)
    }

    pub fn gradients(&self, x: &[f64], y: u8) -> Result<Gradients> {
        check_label(y)?;
        let err = sigmoid(self.logit(x)?) - f64::from(y);
        let mu = x
            .iter()
            .zip(&self.mu)
            .map(|(xi, mi)| xi * err + 2.0 * self.lambda * mi)
            .collect();
        let sigma = SymMatrix::identity(self.dim()).scaled(self.lambda);
        Ok(Gradients { mu, sigma })
    }

    pub fn update_step(&self, x: &[f64], y: u8) -> Result<Self> {
        let grad = self.gradients(x, y)?;
        let mut next = self.clone();
        for (m, g) in next.mu.iter_mut().zip(&grad.mu) {
            *m -= self.eta * g;
        }
        if self.lambda > 0.0 {
            next.sigma = project_psd(&self.sigma.add_scaled(-self.eta, &grad.sigma))?;
        }
        Ok(next)
    }

    /// 1 when the predicted probability reaches the threshold (ties are positive).
    pub fn classify(&self, x: &[f64]) -> Result<u8> {
        Ok(u8::from(self.predict_proba(x)? >= self.threshold))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: LogisticModel =
            serde_json::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        let threshold = raw.threshold;
        LogisticModel::new(raw.mu, raw.sigma, raw.lambda, raw.eta)?.with_threshold(threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn proba_examples() {
        let m = LogisticModel::zeros(3, 0.0, 0.1).unwrap();
        assert_eq!(m.predict_proba(&[1.0, -2.0, 5.0]).unwrap(), 0.5);
        let m = LogisticModel::new(vec![40.0], SymMatrix::zeros(1), 0.0, 0.1).unwrap();
        let p = m.predict_proba(&[1.0]).unwrap();
        assert!(p >= 1.0 - 1e-15 && p <= 1.0);
        assert!(sigmoid(-700.0) > 0.0 && sigmoid(-700.0).is_finite());
        assert!(sigmoid(700.0) <= 1.0);
    }

    #[test]
    fn proba_matches_direct_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let z: f64 = rng.random_range(-30.0..30.0);
            let direct = 1.0 / (1.0 + (-z).exp());
            assert!((sigmoid(z) - direct).abs() <= 1e-15);
        }
    }

    #[test]
    fn surrogate_examples() {
        let m = LogisticModel::zeros(2, 0.0, 0.1).unwrap();
        let l = m.surrogate_loss(&[0.3, 4.0], 1).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        let m = LogisticModel::new(vec![50.0], SymMatrix::zeros(1), 0.0, 0.1).unwrap();
        assert!(m.surrogate_loss(&[1.0], 1).unwrap() < 1e-20);
        assert!((m.surrogate_loss(&[1.0], 0).unwrap() - 50.0).abs() < 1e-12);
        assert!(m.surrogate_loss(&[1.0], 2).is_err());
    }

    #[test]
    fn surrogate_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let mu: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let lambda = rng.random_range(0.0..1.0);
            let diag: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..0.5)).collect();
            let y = u8::from(rng.random_bool(0.5));
            let m = LogisticModel::new(mu.clone(), SymMatrix::from_diagonal(&diag), lambda, 0.1)
                .unwrap();
            let z: f64 = mu.iter().zip(&x).map(|(a, b)| a * b).sum();
            let h = 1.0 / (1.0 + (-z).exp());
            let yf = f64::from(y);
            let direct = -(yf * h.ln() + (1.0 - yf) * (1.0 - h).ln())
                + lambda * (diag.iter().sum::<f64>() + mu.iter().map(|v| v * v).sum::<f64>());
            assert!((m.surrogate_loss(&x, y).unwrap() - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn update_examples() {
        let m = LogisticModel::zeros(1, 0.0, 0.1).unwrap();
        let next = m.update_step(&[1.0], 1).unwrap();
        assert!((next.mu()[0] - 0.05).abs() < 1e-15);

        let sigma = SymMatrix::from_rows(&[vec![0.4, 0.1], vec![0.1, 0.3]]).unwrap();
        let m = LogisticModel::new(vec![0.2, -0.1], sigma.clone(), 0.0, 0.1).unwrap();
        assert_eq!(m.update_step(&[1.0, 2.0], 0).unwrap().sigma(), &sigma);

        let m = LogisticModel::new(vec![0.0], SymMatrix::from_diagonal(&[0.05]), 1.0, 0.1).unwrap();
        assert_eq!(m.update_step(&[1.0], 0).unwrap().sigma().get(0, 0), 0.0);
    }

    #[test]
    fn classify_threshold_rule() {
        let m = LogisticModel::new(vec![(0.9f64 / 0.1).ln()], SymMatrix::zeros(1), 0.0, 0.1)
            .unwrap();
        assert_eq!(m.classify(&[1.0]).unwrap(), 1);
        let m = LogisticModel::zeros(1, 0.0, 0.1).unwrap();
        assert_eq!(m.classify(&[1.0]).unwrap(), 1); // 0.5 >= 0.5
        let m = m.with_threshold(0.5654).unwrap();
        assert_eq!(m.classify(&[1.0]).unwrap(), 0);
        assert!(LogisticModel::zeros(1, 0.0, 0.1).unwrap().with_threshold(1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = LogisticModel::new(vec![0.8, 1.9, 2.8], SymMatrix::identity(3), 0.8276, 0.1)
            .unwrap()
            .with_threshold(0.5745)
            .unwrap();
        let back = LogisticModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
