//! Dense linear-algebra and projection primitives shared by the learners.
//!
//! Dimensions here are small (a few dozen at most), so everything is dense and
//! eigendecompositions are computed directly.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};

/// Tolerance used when validating that entries of a [`ProbVector`] sum to one.
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// A square symmetric matrix.
///
/// Inputs are symmetrized as `(M + Mᵀ)/2` on construction, so the stored
/// matrix is exactly symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::invalid(format!(
                "matrix is {}x{}, expected square",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::invalid("matrix must have positive dimension"));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(SymMatrix(sym))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Rank-one matrix `x xᵀ`.
    pub fn outer(x: &[f64]) -> Self {
        let v = DVector::from_column_slice(x);
        SymMatrix(&v * v.transpose())
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::invalid(format!(
                "row of length {} in a {n}-row matrix",
                bad.len()
            )));
        }
        SymMatrix::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.0.diagonal().iter().copied().collect()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }

    /// `xᵀ M x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, xi)| xi * x.iter().enumerate().map(|(j, xj)| self.0[(i, j)] * xj).sum::<f64>())
            .sum()
    }

    pub fn frobenius_distance(&self, other: &SymMatrix) -> f64 {
        (&self.0 - &other.0).norm()
    }

    /// `self + alpha * other`, staying symmetric.
    pub fn add_scaled(&self, alpha: f64, other: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &other.0 * alpha)
    }

    pub fn scaled(&self, alpha: f64) -> SymMatrix {
        SymMatrix(&self.0 * alpha)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        let eig = eigh_symmetric(self)?;
        Ok(eig.values[eig.values.len() - 1])
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        SymMatrix::from_rows(&rows)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(m: SymMatrix) -> Self {
        m.to_rows()
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues in descending order.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, one per column, aligned with `values`.
    pub vectors: DMatrix<f64>,
}

impl Eigh {
    /// `V diag(values) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&self.values));
        &self.vectors * lambda * self.vectors.transpose()
    }
}

pub fn eigh_symmetric(m: &SymMatrix) -> Result<Eigh> {
    if !m.is_finite() {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let eig = SymmetricEigen::new(m.as_matrix().clone());
    let n = m.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Eigh { values, vectors })
}

/// Euclidean projection onto the cone of positive semidefinite matrices:
/// eigenvalues below zero are clipped to exactly zero.
pub fn project_psd(m: &SymMatrix) -> Result<SymMatrix> {
    let eig = eigh_symmetric(m)?;
    if eig.values.iter().all(|&v| v >= 0.0) {
        return Ok(m.clone());
    }
    let n = m.dim();
    let mut out = DMatrix::zeros(n, n);
    for (k, &zeta) in eig.values.iter().enumerate() {
        if zeta <= 0.0 {
            continue;
        }
        let v = eig.vectors.column(k);
        out += v * v.transpose() * zeta;
    }
    SymMatrix::new(out)
}

/// A point of the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("probability vector must be non-empty"));
        }
        check_finite("probability vector", &weights)?;
        if let Some(w) = weights.iter().find(|&&w| !(0.0..=1.0).contains(&w)) {
            return Err(Error::invalid(format!("weight {w} outside [0, 1]")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
            return Err(Error::invalid(format!("weights sum to {sum}, expected 1")));
        }
        Ok(ProbVector(weights))
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform distribution needs at least one point");
        ProbVector(vec![1.0 / n as f64; n])
    }

    /// Point mass on index `k`.
    pub fn vertex(n: usize, k: usize) -> Self {
        assert!(k < n, "vertex index {k} out of range for n = {n}");
        let mut w = vec![0.0; n];
        w[k] = 1.0;
        ProbVector(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    /// Index of the largest weight; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.0.iter().enumerate() {
            if w > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn squared_distance(&self, other: &ProbVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ProbVector::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

/// Threshold `tau` such that `max(z_i - tau, 0)` sums to one.
pub fn simplex_threshold(z: &[f64]) -> f64 {
    let mut sorted = z.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - 1.0) / (j + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        }
    }
    tau
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(z: &[f64]) -> Result<ProbVector> {
    if z.is_empty() {
        return Err(Error::invalid("cannot project an empty vector"));
    }
    check_finite("simplex projection input", z)?;
    let tau = simplex_threshold(z);
    let mut w: Vec<f64> = z.iter().map(|&v| (v - tau).max(0.0)).collect();
    // absorb roundoff so the sum is 1 to machine precision
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v = (*v / sum).min(1.0);
    }
    Ok(ProbVector(w))
}

/// Single-pass per-feature mean and variance (Welford), with an optional
/// intercept column that is passed through unscaled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStandardizer {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    intercept: Option<usize>,
}

impl RunningStandardizer {
    pub fn new(dim: usize) -> Self {
        RunningStandardizer {
            count: 0,
            mean: vec![0.0; dim],
            m2: vec![0.0; dim],
            intercept: None,
        }
    }

    /// Marks column `index` as an intercept that is never scaled.
    pub fn with_intercept(mut self, index: usize) -> Self {
        assert!(index < self.mean.len(), "intercept column out of range");
        self.intercept = Some(index);
        self
    }

    pub fn fit(dim: usize, rows: impl IntoIterator<Item = impl AsRef<[f64]>>) -> Result<Self> {
        let mut s = RunningStandardizer::new(dim);
        for row in rows {
            s.push(row.as_ref())?;
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn m2(&self) -> &[f64] {
        &self.m2
    }

    pub fn push(&mut self, x: &[f64]) -> Result<()> {
        check_len("standardizer update", x.len(), self.dim())?;
        check_finite("standardizer update", x)?;
        self.count += 1;
        let n = self.count as f64;
        for ((mean, m2), &v) in self.mean.iter_mut().zip(&mut self.m2).zip(x) {
            let delta = v - *mean;
            *mean += delta / n;
            *m2 += delta * (v - *mean);
        }
        Ok(())
    }

    /// Returns the state after observing `x`, leaving `self` untouched.
    pub fn update(&self, x: &[f64]) -> Result<Self> {
        let mut next = self.clone();
        next.push(x)?;
        Ok(next)
    }

    /// Sample variance (denominator `count - 1`).
    pub fn variance(&self) -> Vec<f64> {
        let denom = self.count.saturating_sub(1).max(1) as f64;
        self.m2.iter().map(|m| m / denom).collect()
    }

    pub fn std_dev(&self) -> Vec<f64> {
        self.variance().into_iter().map(f64::sqrt).collect()
    }

    pub fn standardize(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("standardize", x.len(), self.dim())?;
        if self.count < 2 {
            return Err(Error::InsufficientData(format!(
                "standardization needs at least 2 samples, have {}",
                self.count
            )));
        }
        let sd = self.std_dev();
        x.iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.intercept == Some(j) {
                    Ok(v)
                } else if sd[j] > 0.0 {
                    Ok((v - self.mean[j]) / sd[j])
                } else {
                    Err(Error::DegenerateFeature(j))
                }
            })
            .collect()
    }

    pub fn destandardize(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_len("destandardize", z.len(), self.dim())?;
        let sd = self.std_dev();
        Ok(z
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                if self.intercept == Some(j) {
                    v
                } else {
                    v * sd[j] + self.mean[j]
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sym(rng: &mut impl Rng, n: usize) -> SymMatrix {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-2.0..2.0));
        SymMatrix::new(m).unwrap()
    }

    #[test]
    fn eigh_identity_and_diagonal() {
        let e = eigh_symmetric(&SymMatrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        let e = eigh_symmetric(&SymMatrix::from_diagonal(&[2.0, 5.0, -1.0])).unwrap();
        assert_eq!(e.values, vec![5.0, 2.0, -1.0]);
    }

    #[test]
    fn eigh_reconstructs_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_sym(&mut rng, 4);
        let e = eigh_symmetric(&m).unwrap();
        let scale = 1.0 + m.as_matrix().norm();
        assert!((e.reconstruct() - m.as_matrix()).norm() <= 1e-8 * scale);
        let gram = e.vectors.transpose() * &e.vectors;
        assert!((gram - DMatrix::identity(4, 4)).norm() <= 1e-8);
        assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn eigh_rejects_nan() {
        let m = SymMatrix::from_diagonal(&[1.0, f64::NAN]);
        assert!(matches!(eigh_symmetric(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sym_matrix_rejects_non_square() {
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
        assert!(SymMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn construction_symmetrizes() {
        let m = SymMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 0), 1.0);
    }

    #[test]
    fn psd_projection_examples() {
        let id = SymMatrix::identity(3);
        assert_eq!(project_psd(&id).unwrap(), id);
        let p = project_psd(&SymMatrix::from_diagonal(&[1.0, -2.0])).unwrap();
        assert!((p.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(p.get(1, 1).abs() < 1e-12);
        assert!(p.get(0, 1).abs() < 1e-12);
    }

    #[test]
    fn psd_projection_beats_random_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_sym(&mut rng, 4);
        let proj = project_psd(&m).unwrap();
        let best = proj.frobenius_distance(&m);
        for _ in 0..1000 {
            let a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.5..1.5));
            let candidate = SymMatrix::new(&a * a.transpose()).unwrap();
            assert!(candidate.frobenius_distance(&m) >= best - 1e-12);
        }
    }

    #[test]
    fn simplex_examples() {
        let p = project_simplex(&[0.2, 0.5, 0.3]).unwrap();
        for (a, b) in p.as_slice().iter().zip([0.2, 0.5, 0.3]) {
            assert!((a - b).abs() < 1e-15);
        }
        let p = project_simplex(&[0.0, 0.0, 0.0]).unwrap();
        assert!(p.as_slice().iter().all(|&w| (w - 1.0 / 3.0).abs() < 1e-15));
        let p = project_simplex(&[1.2, -0.2]).unwrap();
        assert_eq!(p.as_slice(), &[1.0, 0.0]);
        assert!(project_simplex(&[]).is_err());
        assert!(project_simplex(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn simplex_two_point_grid_oracle() {
        // nearest point of {(t, 1 - t)} to (1.2, -0.2) by scanning t
        let z = [1.2, -0.2];
        let mut best = (f64::INFINITY, 0.0);
        for k in 0..=100_000 {
            let t = k as f64 / 100_000.0;
            let d = (t - z[0]).powi(2) + (1.0 - t - z[1]).powi(2);
            if d < best.0 {
                best = (d, t);
            }
        }
        let p = project_simplex(&z).unwrap();
        assert!((p.as_slice()[0] - best.1).abs() < 1e-5);
    }

    #[test]
    fn prob_vector_validation_and_argmax() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![]).is_err());
        assert_eq!(ProbVector::uniform(4).argmax(), 0);
        assert_eq!(ProbVector::new(vec![0.2, 0.8]).unwrap().argmax(), 1);
    }

    #[test]
    fn standardizer_small_cases() {
        let s = RunningStandardizer::new(2).update(&[3.0, -1.0]).unwrap();
        assert_eq!(s.mean(), &[3.0, -1.0]);
        assert_eq!(s.m2(), &[0.0, 0.0]);

        let s = RunningStandardizer::fit(1, [[0.0], [2.0]]).unwrap();
        assert_eq!(s.mean(), &[1.0]);
        assert_eq!(s.variance(), vec![2.0]);
        assert!(RunningStandardizer::new(2).update(&[1.0]).is_err());
    }

    #[test]
    fn standardizer_matches_two_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<[f64; 2]> = (0..1000)
            .map(|_| [rng.random_range(-5.0..5.0), 100.0 + rng.random::<f64>()])
            .collect();
        let s = RunningStandardizer::fit(2, &rows).unwrap();
        for j in 0..2 {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / 1000.0;
            let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / 999.0;
            assert!((s.mean()[j] - mean).abs() < 1e-10);
            assert!((s.variance()[j] - var).abs() < 1e-10);
        }
    }

    #[test]
    fn standardize_examples() {
        // mean 0, sample std 2
        let r = 2f64.sqrt();
        let s = RunningStandardizer::fit(1, [[-r], [r]]).unwrap();
        let z = s.standardize(&[4.0]).unwrap();
        assert!((z[0] - 2.0).abs() < 1e-12);
        assert_eq!(s.standardize(&[0.0]).unwrap(), vec![0.0]);

        let s = RunningStandardizer::fit(2, [[1.0, 2.0], [1.0, 4.0], [1.0, 6.0]])
            .unwrap()
            .with_intercept(0);
        let z = s.standardize(&[1.0, 4.0]).unwrap();
        assert_eq!(z, vec![1.0, 0.0]);
    }

    #[test]
    fn standardize_degenerate_feature() {
        let s = RunningStandardizer::fit(2, [[1.0, 2.0], [1.0, 4.0]]).unwrap();
        assert!(matches!(
            s.standardize(&[1.0, 3.0]),
            Err(Error::DegenerateFeature(0))
        ));
        let one = RunningStandardizer::fit(1, [[1.0]]).unwrap();
        assert!(one.standardize(&[1.0]).is_err());
    }

    #[test]
    fn standardize_round_trip() {
        let s = RunningStandardizer::fit(3, [[1.0, 5.0, -3.0], [2.0, 7.0, 0.5], [4.0, 6.5, 1.0]])
            .unwrap();
        let x = [3.3, 6.1, -0.7];
        let back = s.destandardize(&s.standardize(&x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(x) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
