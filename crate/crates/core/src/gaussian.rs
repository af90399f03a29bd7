//! Online regression with Gaussian-distributed weights.
//!
//! The model keeps a Gaussian `N(mu, sigma)` over linear weights. Each
//! observation contributes the closed-form expected squared loss plus a
//! Tikhonov term `lambda * (tr sigma + mu'mu)`; a gradient step is taken on
//! both parameters and the covariance is projected back onto the PSD cone.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{check_finite, check_len, Error, Result};
use crate::geometry::{project_psd, SymMatrix};

/// Covariances whose smallest eigenvalue is above this are accepted as PSD.
pub const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianModel {
    mu: Vec<f64>,
    sigma: SymMatrix,
    lambda: f64,
    eta: f64,
    noise_var: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    freeze_sigma: bool,
}

/// Gradient of the regularized expected loss with respect to `(mu, sigma)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub mu: Vec<f64>,
    pub sigma: SymMatrix,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn validate_hyper(lambda: f64, eta: f64) -> Result<()> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    if !(eta.is_finite() && eta > 0.0) {
        return Err(Error::invalid(format!("eta must be > 0, got {eta}")));
    }
    Ok(())
}

pub(crate) fn validate_weights(mu: &[f64], sigma: &SymMatrix) -> Result<()> {
    check_len("covariance dimension", sigma.dim(), mu.len())?;
    check_finite("mean vector", mu)?;
    let min_eig = sigma.min_eigenvalue()?;
    if min_eig < -PSD_TOL {
        return Err(Error::invalid(format!(
            "covariance is not PSD (min eigenvalue {min_eig})"
        )));
    }
    Ok(())
}

/// Two-sided standard normal quantile `z_{(1+level)/2}`.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("interval level must lie in (0, 1), got {level}")));
    }
    let std = Normal::standard();
    Ok(std.inverse_cdf((1.0 + level) / 2.0))
}

impl GaussianModel {
    pub fn new(mu: Vec<f64>, sigma: SymMatrix, lambda: f64, eta: f64) -> Result<Self> {
        validate_hyper(lambda, eta)?;
        validate_weights(&mu, &sigma)?;
        Ok(GaussianModel {
            mu,
            sigma,
            lambda,
            eta,
            noise_var: 0.0,
            freeze_sigma: false,
        })
    }

    /// Zero mean, zero covariance.
    pub fn zeros(dim: usize, lambda: f64, eta: f64) -> Result<Self> {
        GaussianModel::new(vec![0.0; dim], SymMatrix::zeros(dim), lambda, eta)
    }

    pub fn with_noise_var(mut self, noise_var: f64) -> Result<Self> {
        if !(noise_var.is_finite() && noise_var >= 0.0) {
            return Err(Error::invalid(format!("noise variance must be >= 0, got {noise_var}")));
        }
        self.noise_var = noise_var;
        Ok(self)
    }

    pub fn set_noise_var(&mut self, noise_var: f64) -> Result<()> {
        *self = self.clone().with_noise_var(noise_var)?;
        Ok(())
    }

    /// When set, `update_step` leaves the covariance untouched.
    pub fn with_frozen_sigma(mut self, frozen: bool) -> Self {
        self.freeze_sigma = frozen;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self> {
        validate_hyper(self.lambda, eta)?;
        self.eta = eta;
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

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn sigma_frozen(&self) -> bool {
        self.freeze_sigma
    }

    fn check_x(&self, x: &[f64]) -> Result<()> {
        check_len("feature vector", x.len(), self.dim())?;
        check_finite("feature vector", x)
    }

    /// `E (y - x'W)^2 + lambda E W'W` for `W ~ N(mu, sigma)`.
    pub fn expected_loss(&self, x: &[f64], y: f64) -> Result<f64> {
        self.check_x(x)?;
        let xm = dot(x, &self.mu);
        let quad = y * y - 2.0 * y * xm + self.sigma.quadratic_form(x) + xm * xm;
        let reg = self.lambda * (self.sigma.trace() + dot(&self.mu, &self.mu));
        Ok(quad + reg)
    }

    pub fn gradients(&self, x: &[f64], y: f64) -> Result<Gradients> {
        self.check_x(x)?;
        let resid = dot(x, &self.mu) - y;
        let mu = x
            .iter()
            .zip(&self.mu)
            .map(|(xi, mi)| 2.0 * xi * resid + 2.0 * self.lambda * mi)
            .collect();
        let sigma = SymMatrix::outer(x).add_scaled(self.lambda, &SymMatrix::identity(self.dim()));
        Ok(Gradients { mu, sigma })
    }

    /// One forward-backward step on the observation `(x, y)`.
    pub fn update_step(&self, x: &[f64], y: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(Error::invalid("label must be finite"));
        }
        let grad = self.gradients(x, y)?;
        let mut next = self.clone();
        for (m, g) in next.mu.iter_mut().zip(&grad.mu) {
            *m -= self.eta * g;
        }
        if !self.freeze_sigma {
            let stepped = self.sigma.add_scaled(-self.eta, &grad.sigma);
            next.sigma = project_psd(&stepped)?;
        }
        check_finite("updated mean", &next.mu).map_err(|_| {
            Error::Numeric("mean diverged; learning rate is likely too large".into())
        })?;
        Ok(next)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_x(x)?;
        Ok(dot(x, &self.mu))
    }

    /// Mean and variance of `x'W` under the weight distribution.
    pub fn predict_distribution(&self, x: &[f64]) -> Result<(f64, f64)> {
        self.check_x(x)?;
        Ok((dot(x, &self.mu), self.sigma.quadratic_form(x).max(0.0)))
    }

    /// Central interval `x'mu +- z * sqrt(x' sigma x + noise_var)`.
    pub fn predict_interval(&self, x: &[f64], level: f64) -> Result<(f64, f64)> {
        let z = normal_quantile(level)?;
        let (mean, var) = self.predict_distribution(x)?;
        let half = z * (var + self.noise_var).sqrt();
        Ok((mean - half, mean + half))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: GaussianModel =
            serde_json::from_str(text).map_err(|e| Error::invalid(e.to_string()))?;
        validate_hyper(raw.lambda, raw.eta)?;
        validate_weights(&raw.mu, &raw.sigma)?;
        raw.clone().with_noise_var(raw.noise_var)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model(mu: &[f64], sigma: SymMatrix, lambda: f64, eta: f64) -> GaussianModel {
        GaussianModel::new(mu.to_vec(), sigma, lambda, eta).unwrap()
    }

    #[test]
    fn expected_loss_examples() {
        let m = GaussianModel::zeros(1, 0.0, 0.1).unwrap();
        assert_eq!(m.expected_loss(&[1.0], 1.0).unwrap(), 1.0);

        let m = model(&[2.0], SymMatrix::from_diagonal(&[0.25]), 0.0, 0.1);
        assert!((m.expected_loss(&[1.0], 2.0).unwrap() - 0.25).abs() < 1e-15);

        let x = [0.3, -0.7];
        let plain = model(&[1.0, 1.0], SymMatrix::identity(2), 0.0, 0.1);
        let reg = model(&[1.0, 1.0], SymMatrix::identity(2), 1.0, 0.1);
        let diff = reg.expected_loss(&x, 0.5).unwrap() - plain.expected_loss(&x, 0.5).unwrap();
        assert!((diff - 4.0).abs() < 1e-12);
    }

    #[test]
    fn gradient_examples() {
        let m = GaussianModel::zeros(1, 0.0, 0.1).unwrap();
        assert_eq!(m.gradients(&[1.0], 1.0).unwrap().mu, vec![-2.0]);
        let m = GaussianModel::zeros(2, 0.0, 0.1).unwrap();
        let g = m.gradients(&[1.0, 0.0], 0.0).unwrap();
        assert_eq!(g.sigma, SymMatrix::from_diagonal(&[1.0, 0.0]));
    }

    #[test]
    fn zero_input_is_pure_shrinkage() {
        let m = model(&[1.0, -2.0], SymMatrix::zeros(2), 0.5, 0.1);
        let g = m.gradients(&[0.0, 0.0], 3.0).unwrap();
        assert_eq!(g.mu, vec![1.0, -2.0]);
    }

    #[test]
    fn update_examples() {
        let m = GaussianModel::zeros(1, 0.0, 0.1).unwrap();
        let next = m.update_step(&[1.0], 1.0).unwrap();
        assert!((next.mu()[0] - 0.2).abs() < 1e-15);

        let m = model(&[0.0, 0.0], SymMatrix::identity(2), 0.0, 0.1);
        let next = m.update_step(&[1.0, 0.0], 0.0).unwrap();
        assert!((next.sigma().get(0, 0) - 0.9).abs() < 1e-15);
        assert_eq!(next.sigma().get(1, 1), 1.0);

        let m = model(&[0.0], SymMatrix::from_diagonal(&[0.05]), 0.0, 0.1);
        let next = m.update_step(&[1.0], 0.0).unwrap();
        assert_eq!(next.sigma().get(0, 0), 0.0);
        assert_eq!(next.eta(), 0.1);
    }

    #[test]
    fn frozen_sigma_stays_put() {
        let m = model(&[0.0], SymMatrix::from_diagonal(&[0.5]), 0.1, 0.1).with_frozen_sigma(true);
        let next = m.update_step(&[1.0], 1.0).unwrap();
        assert_eq!(next.sigma(), m.sigma());
    }

    #[test]
    fn invariants_rejected() {
        assert!(GaussianModel::zeros(2, 0.0, 0.0).is_err());
        assert!(GaussianModel::zeros(2, -1.0, 0.1).is_err());
        assert!(GaussianModel::new(vec![0.0], SymMatrix::from_diagonal(&[-1.0]), 0.0, 0.1).is_err());
        assert!(GaussianModel::new(vec![0.0], SymMatrix::identity(2), 0.0, 0.1).is_err());
        let m = GaussianModel::zeros(2, 0.0, 0.1).unwrap();
        assert!(m.predict(&[1.0]).is_err());
        assert!(m.expected_loss(&[1.0, 2.0, 3.0], 0.0).is_err());
    }

    #[test]
    fn tiny_learning_rate_barely_moves() {
        let m = GaussianModel::zeros(2, 0.0, 1e-12).unwrap();
        let next = m.update_step(&[1.0, -1.0], 1.0).unwrap();
        assert!(next.mu().iter().all(|v| v.abs() <= 1e-10));
    }

    #[test]
    fn fixed_point_iteration_converges_to_ridge_minimizer() {
        // one observation, lambda > 0: minimizer of the mu-part is (xx' + lambda I)^-1 x y
        let x = [1.0, 2.0];
        let (y, lambda) = (3.0, 0.5);
        let eta = 0.9 / (2.0 * (5.0 + lambda));
        let mut m = GaussianModel::zeros(2, lambda, eta).unwrap().with_frozen_sigma(true);
        for _ in 0..5000 {
            m = m.update_step(&x, y).unwrap();
        }
        // Sherman-Morrison: (xx' + lI)^-1 x = x / (l + |x|^2)
        let scale = y / (lambda + 5.0);
        assert!((m.mu()[0] - scale * 1.0).abs() < 1e-8);
        assert!((m.mu()[1] - scale * 2.0).abs() < 1e-8);
    }

    #[test]
    fn prediction_examples() {
        let m = GaussianModel::zeros(1, 0.0, 0.1).unwrap();
        assert_eq!(m.predict(&[4.0]).unwrap(), 0.0);
        let m = model(&[2.0], SymMatrix::zeros(1), 0.0, 0.1);
        assert_eq!(m.predict(&[1.5]).unwrap(), 3.0);

        let m = model(&[0.0, 0.0], SymMatrix::identity(2), 0.0, 0.1);
        assert_eq!(m.predict_distribution(&[1.0, 1.0]).unwrap().1, 2.0);
        let m = model(&[1.0, 0.0], SymMatrix::zeros(2), 0.0, 0.1);
        assert_eq!(m.predict_distribution(&[1.0, 1.0]).unwrap(), (1.0, 0.0));
    }

    #[test]
    fn interval_examples() {
        let m = model(&[2.0], SymMatrix::zeros(1), 0.0, 0.1);
        assert_eq!(m.predict_interval(&[1.0], 0.95).unwrap(), (2.0, 2.0));

        let m = model(&[0.0], SymMatrix::from_diagonal(&[0.75]), 0.0, 0.1)
            .with_noise_var(0.25)
            .unwrap();
        let (lo, hi) = m.predict_interval(&[1.0], 0.95).unwrap();
        assert!((hi - 1.959964).abs() < 1e-6);
        assert!((lo + 1.959964).abs() < 1e-6);
        assert!(m.predict_interval(&[1.0], 1.0).is_err());
        assert!(m.predict_interval(&[1.0], 0.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = nalgebra::DMatrix::from_fn(3, 3, |_, _| rng.random_range(-1.0..1.0));
        let sigma = SymMatrix::new(&a * a.transpose()).unwrap();
        let m = model(&[0.1, -0.2, 1.0 / 3.0], sigma, 0.3448, 1e-3)
            .with_noise_var(0.0123)
            .unwrap();
        let text = m.to_json().unwrap();
        assert!(text.contains("\"noise_var\""));
        let back = GaussianModel::from_json(&text).unwrap();
        for (a, b) in back.mu().iter().zip(m.mu()) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(back.sigma().frobenius_distance(m.sigma()) <= 1e-12);
        assert_eq!(back.lambda(), m.lambda());
        assert_eq!(back.noise_var(), m.noise_var());
    }
}
