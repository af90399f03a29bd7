//! Feature dictionaries: augment raw inputs with interactions, squares and
//! trigonometric terms so that a linear model in the augmented space can
//! capture simple nonlinear structure.

use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

fn default_frequency() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// Declarative description of the dictionary built from `base_dim` raw features.
///
/// Output layout is fixed: intercept, raw features, pairwise products
/// `x_i x_j` for `i < j` in lexicographic order, squares, sines, cosines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DictionarySpec {
    /// Number of raw features; runners fill it in from the data.
    #[serde(default)]
    pub base_dim: usize,
    #[serde(default = "default_true")]
    pub include_intercept: bool,
    #[serde(default)]
    pub interactions: bool,
    #[serde(default)]
    pub squares: bool,
    #[serde(default)]
    pub sine: bool,
    #[serde(default)]
    pub cosine: bool,
    /// Angular frequency of the trigonometric terms.
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

impl DictionarySpec {
    /// Intercept plus the raw features, nothing else.
    pub fn linear(base_dim: usize) -> Self {
        DictionarySpec {
            base_dim,
            include_intercept: true,
            interactions: false,
            squares: false,
            sine: false,
            cosine: false,
            frequency: 1.0,
            phase: 0.0,
        }
    }

    pub fn with_interactions(mut self, on: bool) -> Self {
        self.interactions = on;
        self
    }

    pub fn with_squares(mut self, on: bool) -> Self {
        self.squares = on;
        self
    }

    pub fn with_sine(mut self, on: bool) -> Self {
        self.sine = on;
        self
    }

    pub fn with_cosine(mut self, on: bool) -> Self {
        self.cosine = on;
        self
    }

    pub fn with_intercept(mut self, on: bool) -> Self {
        self.include_intercept = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_dim == 0 {
            return Err(Error::InvalidConfig("dictionary base_dim must be at least 1".into()));
        }
        if !self.frequency.is_finite() || !self.phase.is_finite() {
            return Err(Error::InvalidConfig("dictionary frequency and phase must be finite".into()));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        let k = self.base_dim;
        usize::from(self.include_intercept)
            + k
            + if self.interactions { k * k.saturating_sub(1) / 2 } else { 0 }
            + if self.squares { k } else { 0 }
            + if self.sine { k } else { 0 }
            + if self.cosine { k } else { 0 }
    }

    pub fn transform(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("dictionary input", x.len(), self.base_dim)?;
        check_finite("dictionary input", x)?;
        let mut out = Vec::with_capacity(self.dimension());
        if self.include_intercept {
            out.push(1.0);
        }
        out.extend_from_slice(x);
        if self.interactions {
            for i in 0..x.len() {
                for j in i + 1..x.len() {
                    out.push(x[i] * x[j]);
                }
            }
        }
        if self.squares {
            out.extend(x.iter().map(|v| v * v));
        }
        if self.sine {
            out.extend(x.iter().map(|v| (self.frequency * v + self.phase).sin()));
        }
        if self.cosine {
            out.extend(x.iter().map(|v| (self.frequency * v + self.phase).cos()));
        }
        debug_assert_eq!(out.len(), self.dimension());
        Ok(out)
    }

    /// Column names matching [`transform`](Self::transform)'s layout.
    pub fn term_names(&self, raw: &[String]) -> Result<Vec<String>> {
        check_len("dictionary names", raw.len(), self.base_dim)?;
        let mut out = Vec::with_capacity(self.dimension());
        if self.include_intercept {
            out.push("intercept".to_string());
        }
        out.extend(raw.iter().cloned());
        if self.interactions {
            for i in 0..raw.len() {
                for j in i + 1..raw.len() {
                    out.push(format!("{}*{}", raw[i], raw[j]));
                }
            }
        }
        if self.squares {
            out.extend(raw.iter().map(|n| format!("{n}^2")));
        }
        if self.sine {
            out.extend(raw.iter().map(|n| format!("sin({n})")));
        }
        if self.cosine {
            out.extend(raw.iter().map(|n| format!("cos({n})")));
        }
        Ok(out)
    }
}

/// The nine expert dictionaries E1..E9: (interactions, squares, sine, cosine).
const EXPERT_FLAGS: [(bool, bool, bool, bool); 9] = [
    (false, false, false, false),
    (true, false, false, false),
    (false, true, false, false),
    (false, false, true, false),
    (false, false, false, true),
    (true, true, false, false),
    (true, true, true, false),
    (true, true, true, true),
    (false, false, true, true),
];

pub fn expert_grid(base_dim: usize) -> Vec<DictionarySpec> {
    EXPERT_FLAGS
        .iter()
        .map(|&(inter, sq, sin, cos)| {
            DictionarySpec::linear(base_dim)
                .with_interactions(inter)
                .with_squares(sq)
                .with_sine(sin)
                .with_cosine(cos)
        })
        .collect()
}
