//! Small dense symmetric positive definite linear algebra.
//!
//! Everything here is desk scale (`n <= 32` or so): observation matrices,
//! the per-agent weight matrices, and the sums of both. Solves go through a
//! Cholesky factorization with one step of iterative refinement, eigenvalues
//! through cyclic Jacobi sweeps. No attempt is made at sparse or large-n
//! performance.

use thiserror::Error;

/// Default lower bound on the smallest eigenvalue for positive definiteness
/// checks.
pub const DEFAULT_SPD_TOLERANCE: f64 = 1e-12;

/// Residual contract for [`SpdMatrix::solve`]: `||Ax - b|| <= SOLVE_TOL * (1 + ||b||)`.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpdError {
    #[error("matrix dimension must be positive")]
    EmptyDimension,
    #[error("expected {expected} entries/rows, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("entry ({row},{col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("entries ({row},{col}) and ({col},{row}) differ: {a} vs {b}")]
    NotSymmetric {
        row: usize,
        col: usize,
        a: f64,
        b: f64,
    },
    #[error("matrix is not positive definite (Cholesky pivot {pivot} is {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
}

/// Violation report produced by [`SpdMatrix::assert_spd`].
#[derive(Debug, Clone, PartialEq)]
pub enum SpdViolation {
    Asymmetric {
        row: usize,
        col: usize,
        a: f64,
        b: f64,
    },
    /// Smallest eigenvalue does not clear the tolerance.
    EigenvalueTooSmall { min_eigenvalue: f64, tolerance: f64 },
}

impl std::fmt::Display for SpdViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpdViolation::Asymmetric { row, col, a, b } => {
                write!(f, "asymmetric at ({row},{col}): {a} vs {b}")
            }
            SpdViolation::EigenvalueTooSmall {
                min_eigenvalue,
                tolerance,
            } => {
                write!(
                    f,
                    "smallest eigenvalue {min_eigenvalue} <= tolerance {tolerance}"
                )
            }
        }
    }
}

/// An `n x n` real symmetric matrix, stored row-major.
///
/// Symmetry is exact and enforced at construction. Positive definiteness is
/// a property of most values that live here (observations, weight matrices)
/// but is only checked on demand via [`SpdMatrix::assert_spd`], so symmetric
/// indefinite values are representable and report violations cleanly.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl SpdMatrix {
    /// Builds from a flat row-major buffer, checking shape, finiteness, and
    /// exact symmetry.
    pub fn from_flat(n: usize, entries: Vec<f64>) -> Result<Self, SpdError> {
        if n == 0 {
            return Err(SpdError::EmptyDimension);
        }
        if entries.len() != n * n {
            return Err(SpdError::DimensionMismatch {
                expected: n * n,
                found: entries.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let v = entries[i * n + j];
                if !v.is_finite() {
                    return Err(SpdError::NonFinite { row: i, col: j });
                }
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let a = entries[i * n + j];
                let b = entries[j * n + i];
                if a != b {
                    return Err(SpdError::NotSymmetric {
                        row: i,
                        col: j,
                        a,
                        b,
                    });
                }
            }
        }
        Ok(SpdMatrix { n, entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, SpdError> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(SpdError::DimensionMismatch {
                    expected: n,
                    found: rows[i].len(),
                });
            }
        }
        let flat: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_flat(n, flat)
    }

    pub fn identity(n: usize) -> Self {
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            entries[i * n + i] = 1.0;
        }
        SpdMatrix { n, entries }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self, SpdError> {
        let n = diag.len();
        if n == 0 {
            return Err(SpdError::EmptyDimension);
        }
        let mut entries = vec![0.0; n * n];
        for (i, &v) in diag.iter().enumerate() {
            if !v.is_finite() {
                return Err(SpdError::NonFinite { row: i, col: i });
            }
            entries[i * n + i] = v;
        }
        Ok(SpdMatrix { n, entries })
    }

    /// Forms `X^T X` from a square factor `X`.
    ///
    /// The `(i,j)` and `(j,i)` products are computed once and mirrored, so the
    /// result is bit-exactly symmetric regardless of rounding.
    pub fn from_factor(factor: &[Vec<f64>]) -> Result<Self, SpdError> {
        let n = factor.len();
        if n == 0 {
            return Err(SpdError::EmptyDimension);
        }
        for (i, row) in factor.iter().enumerate() {
            if row.len() != n {
                return Err(SpdError::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(SpdError::NonFinite { row: i, col: j });
                }
            }
        }
        let mut entries = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let mut s = 0.0;
                for row in factor {
                    s += row[i] * row[j];
                }
                entries[i * n + j] = s;
                entries[j * n + i] = s;
            }
        }
        Ok(SpdMatrix { n, entries })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn add(&self, other: &SpdMatrix) -> Result<SpdMatrix, SpdError> {
        if self.n != other.n {
            return Err(SpdError::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        let entries = self
            .entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(SpdMatrix { n: self.n, entries })
    }

    pub fn scaled(&self, factor: f64) -> SpdMatrix {
        SpdMatrix {
            n: self.n,
            entries: self.entries.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>, SpdError> {
        if x.len() != self.n {
            return Err(SpdError::DimensionMismatch {
                expected: self.n,
                found: x.len(),
            });
        }
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.entries[i * self.n..(i + 1) * self.n];
            out[i] = row.iter().zip(x).map(|(a, b)| a * b).sum();
        }
        Ok(out)
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64, SpdError> {
        let ax = self.matvec(x)?;
        Ok(x.iter().zip(&ax).map(|(a, b)| a * b).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Solves `A x = b` via a square-root-free Cholesky (`LDLᵀ`)
    /// factorization plus iterative refinement.
    ///
    /// Meets `||Ax - b|| <= 1e-9 * (1 + ||b||)` for well-posed inputs and is
    /// deterministic given its inputs; diagonal systems solve exactly. A
    /// non-positive pivot surfaces as [`SpdError::NotPositiveDefinite`],
    /// never a panic.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SpdError> {
        if b.len() != self.n {
            return Err(SpdError::DimensionMismatch {
                expected: self.n,
                found: b.len(),
            });
        }
        let factors = self.ldlt()?;
        let mut x = ldlt_solve(&factors, self.n, b);
        // Up to two refinement passes; cheap at this scale and keeps the
        // residual contract honest for moderately conditioned systems.
        for _ in 0..2 {
            let ax = self.matvec(&x)?;
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let rnorm = norm(&r);
            if rnorm <= 1e-12 * (1.0 + norm(b)) {
                break;
            }
            let d = ldlt_solve(&factors, self.n, &r);
            for (xi, di) in x.iter_mut().zip(&d) {
                *xi += di;
            }
        }
        Ok(x)
    }

    /// `A = L D Lᵀ` with unit lower-triangular `L` (strict lower triangle of
    /// the buffer) and positive diagonal `D` (its diagonal).
    fn ldlt(&self) -> Result<Vec<f64>, SpdError> {
        let n = self.n;
        let mut f = vec![0.0; n * n];
        for j in 0..n {
            let mut dj = self.entries[j * n + j];
            for k in 0..j {
                dj -= f[j * n + k] * f[j * n + k] * f[k * n + k];
            }
            if dj <= 0.0 || !dj.is_finite() {
                return Err(SpdError::NotPositiveDefinite {
                    pivot: j,
                    value: dj,
                });
            }
            f[j * n + j] = dj;
            for i in (j + 1)..n {
                let mut t = self.entries[i * n + j];
                for k in 0..j {
                    t -= f[i * n + k] * f[j * n + k] * f[k * n + k];
                }
                f[i * n + j] = t / dj;
            }
        }
        Ok(f)
    }

    /// All eigenvalues, ascending. Cyclic Jacobi sweeps; fine for symmetric
    /// matrices of this size and accurate to roughly machine precision times
    /// the matrix norm.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let n = self.n;
        if n == 1 {
            return vec![self.entries[0]];
        }
        let mut a = self.entries.clone();
        let scale = self.frobenius_norm().max(f64::MIN_POSITIVE);
        for _sweep in 0..60 {
            let mut off = 0.0;
            for i in 0..n {
                for j in (i + 1)..n {
                    off += a[i * n + j] * a[i * n + j];
                }
            }
            if off.sqrt() <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[p * n + p];
                    let aqq = a[q * n + q];
                    if apq.abs() <= f64::EPSILON * 1e-3 * (app.abs() + aqq.abs()) {
                        a[p * n + q] = 0.0;
                        a[q * n + p] = 0.0;
                        continue;
                    }
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for r in 0..n {
                        if r == p || r == q {
                            continue;
                        }
                        let arp = a[r * n + p];
                        let arq = a[r * n + q];
                        a[r * n + p] = c * arp - s * arq;
                        a[p * n + r] = a[r * n + p];
                        a[r * n + q] = s * arp + c * arq;
                        a[q * n + r] = a[r * n + q];
                    }
                    a[p * n + p] = app - t * apq;
                    a[q * n + q] = aqq + t * apq;
                    a[p * n + q] = 0.0;
                    a[q * n + p] = 0.0;
                }
            }
        }
        let mut eigs: Vec<f64> = (0..n).map(|i| a[i * n + i]).collect();
        eigs.sort_by(f64::total_cmp);
        eigs
    }

    /// Largest eigenvalue. For positive definite input this equals the
    /// spectral radius.
    pub fn spectral_radius(&self) -> f64 {
        *self.eigenvalues().last().expect("dimension is positive")
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Checks symmetry and that the smallest eigenvalue clears `tolerance`.
    pub fn assert_spd(&self, tolerance: f64) -> Result<(), SpdViolation> {
        let n = self.n;
        for i in 0..n {
            for j in (i + 1)..n {
                let a = self.entries[i * n + j];
                let b = self.entries[j * n + i];
                if a != b {
                    return Err(SpdViolation::Asymmetric {
                        row: i,
                        col: j,
                        a,
                        b,
                    });
                }
            }
        }
        let min_eigenvalue = self.min_eigenvalue();
        if min_eigenvalue <= tolerance {
            return Err(SpdViolation::EigenvalueTooSmall {
                min_eigenvalue,
                tolerance,
            });
        }
        Ok(())
    }
}

fn ldlt_solve(factors: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
    // forward: L y = b (unit diagonal)
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= factors[i * n + k] * y[k];
        }
        y[i] = s;
    }
    // scale: D w = y
    for i in 0..n {
        y[i] /= factors[i * n + i];
    }
    // backward: Lᵀ x = w
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= factors[k * n + i] * x[k];
        }
        x[i] = s;
    }
    x
}

/// Euclidean norm.
pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Euclidean distance between two equal-length vectors.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn standard_normal_matrix(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        use rand::distributions::Distribution;
        let normal = rand_distr_standard_normal();
        (0..n)
            .map(|_| (0..n).map(|_| normal.sample(rng)).collect())
            .collect()
    }

    // Box-Muller from two uniforms; avoids pulling in a distributions crate
    // just for the tests.
    struct BoxMuller;
    impl rand::distributions::Distribution<f64> for BoxMuller {
        fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        }
    }
    fn rand_distr_standard_normal() -> BoxMuller {
        BoxMuller
    }

    #[test]
    fn from_factor_identity() {
        let x = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = SpdMatrix::from_factor(&x).unwrap();
        assert_eq!(m, SpdMatrix::identity(2));
    }

    #[test]
    fn from_factor_hand_multiplied() {
        // X = [[1,1],[0,1]]  =>  X^T X = [[1,1],[1,2]]
        let x = vec![vec![1.0, 1.0], vec![0.0, 1.0]];
        let m = SpdMatrix::from_factor(&x).unwrap();
        assert_eq!(m.entries(), &[1.0, 1.0, 1.0, 2.0]);
    }

    #[test]
    fn from_factor_random_sample_is_spd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = standard_normal_matrix(3, &mut rng);
        let m = SpdMatrix::from_factor(&x).unwrap();
        m.assert_spd(DEFAULT_SPD_TOLERANCE).unwrap();
    }

    #[test]
    fn from_factor_rejects_bad_input() {
        assert!(matches!(
            SpdMatrix::from_factor(&[vec![1.0, 2.0]]),
            Err(SpdError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            SpdMatrix::from_factor(&[vec![1.0, f64::NAN], vec![0.0, 1.0]]),
            Err(SpdError::NonFinite { .. })
        ));
    }

    #[test]
    fn construction_rejects_asymmetry() {
        let err = SpdMatrix::from_flat(2, vec![1.0, 2.0, 3.0, 4.0]).unwrap_err();
        assert!(matches!(err, SpdError::NotSymmetric { row: 0, col: 1, .. }));
    }

    #[test]
    fn solve_identity_and_diagonal() {
        let i = SpdMatrix::identity(2);
        assert_eq!(i.solve(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);

        let d = SpdMatrix::from_diagonal(&[2.0, 4.0]).unwrap();
        assert_eq!(d.solve(&[2.0, 4.0]).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn solve_substitutes_back() {
        let a = SpdMatrix::from_flat(2, vec![1.0, 1.0, 1.0, 2.0]).unwrap();
        let x = a.solve(&[2.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-12);
        assert!((x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solve_reports_indefinite_input() {
        let a = SpdMatrix::from_flat(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(matches!(
            a.solve(&[1.0, 1.0]),
            Err(SpdError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn eigenvalue_extremes() {
        assert!((SpdMatrix::identity(3).spectral_radius() - 1.0).abs() < 1e-12);
        let d = SpdMatrix::from_diagonal(&[2.0, 5.0]).unwrap();
        assert!((d.spectral_radius() - 5.0).abs() < 1e-12);
        assert!((d.min_eigenvalue() - 2.0).abs() < 1e-12);

        // characteristic polynomial of [[1,1],[1,2]]: roots (3 +- sqrt(5)) / 2
        let a = SpdMatrix::from_flat(2, vec![1.0, 1.0, 1.0, 2.0]).unwrap();
        let hi = (3.0 + 5.0_f64.sqrt()) / 2.0;
        let lo = (3.0 - 5.0_f64.sqrt()) / 2.0;
        assert!((a.spectral_radius() - hi).abs() <= 1e-9 * hi);
        assert!((a.min_eigenvalue() - lo).abs() <= 1e-9 * lo);
    }

    #[test]
    fn min_eigenvalue_below_spectral_radius() {
        let d = SpdMatrix::from_diagonal(&[2.0, 5.0]).unwrap();
        assert!(d.min_eigenvalue() < d.spectral_radius());
        // equality only for scalar multiples of the identity
        let s = SpdMatrix::from_diagonal(&[3.0, 3.0, 3.0]).unwrap();
        assert_eq!(s.min_eigenvalue(), s.spectral_radius());
    }

    #[test]
    fn assert_spd_reports_violations() {
        SpdMatrix::identity(2).assert_spd(1e-12).unwrap();

        let indefinite = SpdMatrix::from_flat(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        match indefinite.assert_spd(1e-12).unwrap_err() {
            SpdViolation::EigenvalueTooSmall { min_eigenvalue, .. } => {
                assert!((min_eigenvalue - (-1.0)).abs() < 1e-9);
            }
            other => panic!("unexpected violation {other:?}"),
        }

        let singular = SpdMatrix::from_flat(2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(singular.assert_spd(1e-12).is_err());
    }

    #[test]
    fn solve_residual_on_random_spd_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..200 {
            let n = 1 + (trial % 6);
            let a = loop {
                let x = standard_normal_matrix(n, &mut rng);
                let candidate = SpdMatrix::from_factor(&x).unwrap();
                if candidate.assert_spd(DEFAULT_SPD_TOLERANCE).is_ok() {
                    break candidate;
                }
            };
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let x = a.solve(&b).unwrap();
            let ax = a.matvec(&x).unwrap();
            let residual = distance(&ax, &b);
            assert!(
                residual <= SOLVE_RESIDUAL_TOL * (1.0 + norm(&b)),
                "trial {trial}: residual {residual} too large"
            );
        }
    }
}
