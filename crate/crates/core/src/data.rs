//! Seeded synthetic streams and CSV ingestion.
//!
//! Every generator draws from a ChaCha20 stream seeded with
//! `seed_from_u64(seed)`; replicate `k` uses stream number `k` of the same
//! seed, so replicates are independent and can be produced in parallel.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::sigmoid;

/// One `(x_t, y_t)` pair. Classification streams store the label as 0.0 or 1.0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub step: u64,
    pub x: Vec<f64>,
    pub y: f64,
}

impl Observation {
    pub fn label(&self) -> u8 {
        u8::from(self.y >= 0.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub experiment: u8,
    pub n: usize,
    /// Standard deviation of the additive response noise.
    pub noise: f64,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
}

impl GeneratorConfig {
    /// Defaults per experiment: noise 0.1, 1.0, 0.0 (unused) and 0.5.
    pub fn new(experiment: u8, n: usize, seed: u64) -> Result<Self> {
        let noise = match experiment {
            1 => 0.1,
            2 => 1.0,
            3 => 0.0,
            4 => 0.5,
            other => return Err(unknown_experiment(other)),
        };
        Ok(GeneratorConfig {
            experiment,
            n,
            noise,
            seed,
            stream: 0,
        })
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.experiment) {
            return Err(unknown_experiment(self.experiment));
        }
        if self.n == 0 {
            return Err(Error::InvalidConfig("generator length n must be at least 1".into()));
        }
        if !(self.noise.is_finite() && self.noise >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise must be finite and non-negative, got {}",
                self.noise
            )));
        }
        Ok(())
    }

    /// Number of raw features produced.
    pub fn input_dim(&self) -> usize {
        match self.experiment {
            1 => 1,
            2 => 3,
            3 => 2,
            _ => 4,
        }
    }

    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

fn unknown_experiment(id: u8) -> Error {
    Error::InvalidConfig(format!("unknown generator experiment {id}, expected 1 to 4"))
}

fn normal(sd: f64) -> Normal<f64> {
    Normal::new(0.0, sd).expect("standard deviation validated as finite and non-negative")
}

/// Draws the stream described by `config`.
///
/// 1. `y = 2x + e`, `x ~ U(-2, 2)`.
/// 2. `x1 ~ N(0,1)`, `x2 = x1 + d`, `x3 = 2x1 + 3x2 + d`, `d ~ N(0, 0.01^2)`,
///    `y = -1 + 2x1 - 2x2 + 1.5x3 + e`.
/// 3. `x1, x2 ~ N(0,1)`, `P(y = 1) = sigmoid(1 + 2x1 + 3x2)`.
/// 4. `x_i ~ U(0,1)`, `y = 1 + 1.1x1 + 1.2x2 + 1.3x3 + 1.4x4 + e`.
pub fn generate(config: &GeneratorConfig) -> Result<Vec<Observation>> {
    config.validate()?;
    let mut rng = config.rng();
    let eps = normal(config.noise);
    let delta = normal(0.01);
    let std = normal(1.0);
    let mut out = Vec::with_capacity(config.n);
    for t in 0..config.n {
        let (x, y) = match config.experiment {
            1 => {
                let x = rng.random_range(-2.0..2.0);
                (vec![x], 2.0 * x + eps.sample(&mut rng))
            }
            2 => {
                let x1 = std.sample(&mut rng);
                let x2 = x1 + delta.sample(&mut rng);
                let x3 = 2.0 * x1 + 3.0 * x2 + delta.sample(&mut rng);
                let y = -1.0 + 2.0 * x1 - 2.0 * x2 + 1.5 * x3 + eps.sample(&mut rng);
                (vec![x1, x2, x3], y)
            }
            3 => {
                let x1 = std.sample(&mut rng);
                let x2 = std.sample(&mut rng);
                let p = sigmoid(1.0 + 2.0 * x1 + 3.0 * x2);
                (vec![x1, x2], f64::from(u8::from(rng.random_bool(p))))
            }
            _ => {
                let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                let y = 1.0
                    + x.iter().enumerate().map(|(i, v)| (1.1 + 0.1 * i as f64) * v).sum::<f64>()
                    + eps.sample(&mut rng);
                (x, y)
            }
        };
        out.push(Observation {
            step: t as u64,
            x,
            y,
        });
    }
    Ok(out)
}

/// Streams for replicates `0..count`, generated in parallel; replicate `k`
/// uses stream `k`.
pub fn generate_replicates(config: &GeneratorConfig, count: usize) -> Result<Vec<Vec<Observation>>> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| generate(&config.with_stream(k)))
        .collect()
}

/// Regression stream with an abrupt level shift:
/// `y = 1 + sum_i 0.5 (i + 1) x_i + e + shift * [t >= shift_at]`, `x_i ~ N(0,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelShiftConfig {
    pub n: usize,
    pub dim: usize,
    pub noise: f64,
    pub shift_at: usize,
    pub shift: f64,
    pub seed: u64,
    #[serde(default)]
    pub stream: u64,
}

impl LevelShiftConfig {
    pub fn rng(&self) -> ChaCha20Rng {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

pub fn generate_level_shift(config: &LevelShiftConfig) -> Result<Vec<Observation>> {
    if config.n == 0 || config.dim == 0 {
        return Err(Error::InvalidConfig("level-shift stream needs n >= 1 and dim >= 1".into()));
    }
    if !(config.noise.is_finite() && config.noise >= 0.0 && config.shift.is_finite()) {
        return Err(Error::InvalidConfig("noise and shift must be finite, noise >= 0".into()));
    }
    let mut rng = config.rng();
    let eps = normal(config.noise);
    let std = normal(1.0);
    Ok((0..config.n)
        .map(|t| {
            let x: Vec<f64> = (0..config.dim).map(|_| std.sample(&mut rng)).collect();
            let signal: f64 = x.iter().enumerate().map(|(i, v)| 0.5 * (i + 1) as f64 * v).sum();
            let level = if t >= config.shift_at { config.shift } else { 0.0 };
            Observation {
                step: t as u64,
                y: 1.0 + signal + eps.sample(&mut rng) + level,
                x,
            }
        })
        .collect())
}

/// Classification stream whose logit `1 + 2 x1 + 3 x2` flips to
/// `1 - 2 x1 - 3 x2` from step `switch_at` on.
pub fn generate_logistic_drift(n: usize, switch_at: usize, seed: u64, stream: u64) -> Result<Vec<Observation>> {
    if n == 0 {
        return Err(Error::InvalidConfig("generator length n must be at least 1".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let std = normal(1.0);
    Ok((0..n)
        .map(|t| {
            let x1 = std.sample(&mut rng);
            let x2 = std.sample(&mut rng);
            let sign = if t >= switch_at { -1.0 } else { 1.0 };
            let p = sigmoid(1.0 + sign * (2.0 * x1 + 3.0 * x2));
            Observation {
                step: t as u64,
                x: vec![x1, x2],
                y: f64::from(u8::from(rng.random_bool(p))),
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    #[default]
    Real,
    Binary,
}

fn default_delimiter() -> char {
    ','
}

/// Columns to read from a CSV file. Extra columns in the file are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub features: Vec<String>,
    pub label: String,
    #[serde(default)]
    pub label_kind: LabelKind,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

impl CsvSchema {
    pub fn new(features: Vec<String>, label: impl Into<String>) -> Self {
        CsvSchema {
            features,
            label: label.into(),
            label_kind: LabelKind::Real,
            delimiter: ',',
        }
    }

    pub fn binary(mut self) -> Self {
        self.label_kind = LabelKind::Binary;
        self
    }

    pub fn with_delimiter(mut self, delimiter: char) -> Self {
        self.delimiter = delimiter;
        self
    }
}

/// A row skipped by [`load_csv_stream_lenient`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowIssue {
    pub line: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CsvStream {
    pub observations: Vec<Observation>,
    pub skipped: Vec<RowIssue>,
}

/// Reads every row, failing on the first malformed one.
pub fn load_csv_stream(path: &Path, schema: &CsvSchema) -> Result<Vec<Observation>> {
    read_csv(path, schema, true).map(|s| s.observations)
}

/// Reads every row, skipping and reporting malformed ones.
pub fn load_csv_stream_lenient(path: &Path, schema: &CsvSchema) -> Result<CsvStream> {
    read_csv(path, schema, false)
}

fn read_csv(path: &Path, schema: &CsvSchema, strict: bool) -> Result<CsvStream> {
    if !schema.delimiter.is_ascii() {
        return Err(Error::InvalidConfig("CSV delimiter must be a single ASCII character".into()));
    }
    if schema.features.is_empty() {
        return Err(Error::InvalidConfig("CSV schema declares no feature columns".into()));
    }
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Schema(format!("{} has no header row", path.display())));
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("column {name:?} missing from header")))
    };
    let feature_idx = schema.features.iter().map(|f| find(f)).collect::<Result<Vec<_>>>()?;
    let label_idx = find(&schema.label)?;

    let mut stream = CsvStream::default();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        match parse_row(&record, &feature_idx, label_idx, schema) {
            Ok((x, y)) => stream.observations.push(Observation {
                step: stream.observations.len() as u64,
                x,
                y,
            }),
            Err(message) if strict => return Err(Error::Parse { line, message }),
            Err(message) => stream.skipped.push(RowIssue { line, message }),
        }
    }
    Ok(stream)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn parse_cell(record: &csv::StringRecord, idx: usize, name: &str) -> std::result::Result<f64, String> {
    let cell = record.get(idx).ok_or_else(|| format!("missing value for column {name:?}"))?;
    let v: f64 = cell
        .parse()
        .map_err(|_| format!("column {name:?}: {cell:?} is not a number"))?;
    if !v.is_finite() {
        return Err(format!("column {name:?}: non-finite value {cell:?}"));
    }
    Ok(v)
}

fn parse_row(
    record: &csv::StringRecord,
    feature_idx: &[usize],
    label_idx: usize,
    schema: &CsvSchema,
) -> std::result::Result<(Vec<f64>, f64), String> {
    let x = feature_idx
        .iter()
        .zip(&schema.features)
        .map(|(&i, name)| parse_cell(record, i, name))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let y = parse_cell(record, label_idx, &schema.label)?;
    if schema.label_kind == LabelKind::Binary && y != 0.0 && y != 1.0 {
        return Err(format!("label {:?} must be 0 or 1, got {y}", schema.label));
    }
    Ok((x, y))
}

/// `ln(r / (100 - r))` for a percentage strictly inside (0, 100).
pub fn logit_transform(rate_percent: f64) -> Result<f64> {
    if !(rate_percent > 0.0 && rate_percent < 100.0) {
        return Err(Error::invalid(format!(
            "rate must lie strictly inside (0, 100), got {rate_percent}"
        )));
    }
    Ok((rate_percent / (100.0 - rate_percent)).ln())
}

pub fn inverse_logit_transform(value: f64) -> f64 {
    100.0 * sigmoid(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn noiseless_line() {
        let cfg = GeneratorConfig::new(1, 500, 3).unwrap().with_noise(0.0);
        for obs in generate(&cfg).unwrap() {
            assert_eq!(obs.y, 2.0 * obs.x[0]);
            assert!((-2.0..2.0).contains(&obs.x[0]));
        }
    }

    #[test]
    fn collinear_design_noise_scale() {
        let cfg = GeneratorConfig::new(2, 10_000, 11).unwrap();
        let r: Vec<f64> = generate(&cfg)
            .unwrap()
            .iter()
            .map(|o| o.x[2] - 2.0 * o.x[0] - 3.0 * o.x[1])
            .collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt();
        assert!((sd / 0.01 - 1.0).abs() < 0.2, "sd {sd}");
        let d: Vec<f64> = generate(&cfg).unwrap().iter().map(|o| o.x[1] - o.x[0]).collect();
        let sd_d = (d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64).sqrt();
        assert!((sd_d / 0.01 - 1.0).abs() < 0.2);
    }

    #[test]
    fn logistic_intercept_frequency() {
        // condition on x near the origin via the exact conditional probability
        let cfg = GeneratorConfig::new(3, 10_000, 5).unwrap();
        let data = generate(&cfg).unwrap();
        let near: Vec<&Observation> = data
            .iter()
            .filter(|o| o.x[0].abs() < 0.1 && o.x[1].abs() < 0.1)
            .collect();
        let expected: f64 = near
            .iter()
            .map(|o| sigmoid(1.0 + 2.0 * o.x[0] + 3.0 * o.x[1]))
            .sum::<f64>()
            / near.len() as f64;
        let freq = near.iter().filter(|o| o.y == 1.0).count() as f64 / near.len() as f64;
        let se = (expected * (1.0 - expected) / near.len() as f64).sqrt();
        assert!((freq - expected).abs() < 3.0 * se + 1e-12, "{freq} vs {expected}");
        assert!((expected - sigmoid(1.0)).abs() < 0.1);
    }

    #[test]
    fn reproducible_and_streams_differ() {
        let cfg = GeneratorConfig::new(4, 200, 42).unwrap();
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        assert_ne!(generate(&cfg).unwrap(), generate(&cfg.with_stream(1)).unwrap());
        let reps = generate_replicates(&cfg, 3).unwrap();
        assert_eq!(reps[1], generate(&cfg.with_stream(1)).unwrap());
    }

    #[test]
    fn ols_recovers_slope() {
        let data = generate(&GeneratorConfig::new(1, 10_000, 7).unwrap()).unwrap();
        let n = data.len() as f64;
        let mx = data.iter().map(|o| o.x[0]).sum::<f64>() / n;
        let my = data.iter().map(|o| o.y).sum::<f64>() / n;
        let sxy: f64 = data.iter().map(|o| (o.x[0] - mx) * (o.y - my)).sum();
        let sxx: f64 = data.iter().map(|o| (o.x[0] - mx).powi(2)).sum();
        let slope = sxy / sxx;
        assert!((1.99..=2.01).contains(&slope));
    }

    #[test]
    fn unknown_experiment_rejected() {
        assert!(matches!(GeneratorConfig::new(9, 10, 0), Err(Error::InvalidConfig(_))));
        let mut cfg = GeneratorConfig::new(1, 10, 0).unwrap();
        cfg.experiment = 0;
        assert!(matches!(generate(&cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn csv_well_formed() {
        let f = write_tmp("date,a,b,y\n2020-01,1,2,3\n2020-02,4,5,6\n2020-03,7,8,9\n");
        let schema = CsvSchema::new(vec!["b".into(), "a".into()], "y");
        let obs = load_csv_stream(f.path(), &schema).unwrap();
        assert_eq!(obs.len(), 3);
        assert_eq!(obs[0].x, vec![2.0, 1.0]);
        assert_eq!(obs[2].y, 9.0);
        assert_eq!(obs[2].step, 2);
    }

    #[test]
    fn csv_schema_and_parse_errors() {
        let f = write_tmp("a,y\n1,2\n");
        let schema = CsvSchema::new(vec!["a".into(), "b".into()], "y");
        assert!(matches!(load_csv_stream(f.path(), &schema), Err(Error::Schema(_))));

        let f = write_tmp("a,y\n1,2\n3,4\nfoo,5\n6,7\n");
        let schema = CsvSchema::new(vec!["a".into()], "y");
        match load_csv_stream(f.path(), &schema) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let lenient = load_csv_stream_lenient(f.path(), &schema).unwrap();
        assert_eq!(lenient.observations.len(), 3);
        assert_eq!(lenient.skipped[0].line, 4);
        assert_eq!(lenient.observations[2].y, 7.0);

        assert!(matches!(
            load_csv_stream(Path::new("/nonexistent/data.csv"), &schema),
            Err(Error::Io { .. })
        ));
        let empty = write_tmp("");
        assert!(matches!(load_csv_stream(empty.path(), &schema), Err(Error::Schema(_))));
    }

    #[test]
    fn csv_binary_labels_and_delimiter() {
        let f = write_tmp("nswdemand;vicdemand;class\n0.4;0.5;1\n0.3;0.2;0\n0.1;0.1;2\n");
        let schema = CsvSchema::new(vec!["nswdemand".into(), "vicdemand".into()], "class")
            .binary()
            .with_delimiter(';');
        let s = load_csv_stream_lenient(f.path(), &schema).unwrap();
        assert_eq!(s.observations.len(), 2);
        assert_eq!(s.observations[0].label(), 1);
        assert_eq!(s.skipped.len(), 1);
    }

    #[test]
    fn logit_examples() {
        assert_eq!(logit_transform(50.0).unwrap(), 0.0);
        assert!((logit_transform(4.0).unwrap() + 3.1781).abs() < 1e-4);
        let back = inverse_logit_transform(logit_transform(7.3).unwrap());
        assert!((back - 7.3).abs() < 1e-12);
        assert!(logit_transform(0.0).is_err());
        assert!(logit_transform(100.0).is_err());
        assert!(logit_transform(-3.0).is_err());
    }

    #[test]
    fn level_shift_moves_mean() {
        let cfg = LevelShiftConfig { n: 4000, dim: 2, noise: 0.0, shift_at: 2000, shift: 3.0, seed: 1, stream: 0 };
        let data = generate_level_shift(&cfg).unwrap();
        for o in &data {
            let base = 1.0 + 0.5 * o.x[0] + o.x[1];
            let expected = if o.step >= 2000 { base + 3.0 } else { base };
            assert!((o.y - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn logistic_drift_flips_relationship() {
        let data = generate_logistic_drift(20_000, 10_000, 3, 0).unwrap();
        let agree = |part: &[Observation]| {
            part.iter().filter(|o| (o.x[0] + o.x[1] > 0.0) == (o.y == 1.0)).count() as f64 / part.len() as f64
        };
        assert!(agree(&data[..10_000]) > 0.7);
        assert!(agree(&data[10_000..]) < 0.5);
    }
}
