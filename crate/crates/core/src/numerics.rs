//! Small dense complex linear algebra.
//!
//! Everything here works on [`ComplexMatrix`], a row-major `f64` complex
//! matrix sized for link-level work (a handful of antennas, never more than
//! a few dozen rows). There is no blocking and no pivoting.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

pub use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative Hermitian tolerance accepted by [`cholesky`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Pivot floor for [`cholesky`], relative to `trace(A) / n`.
pub const PIVOT_FLOOR: f64 = 1e-14;
/// Smallest diagonal magnitude accepted by [`invert_lower_triangular`].
pub const DIAGONAL_FLOOR: f64 = 1e-14;
/// Power iteration stops once the Rayleigh quotient moves less than this (relative).
pub const POWER_ITER_TOL: f64 = 1e-12;
/// Power iteration cap.
pub const POWER_ITER_MAX: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix is not Hermitian (relative asymmetry {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("triangular matrix has a (near-)zero diagonal entry at row {0}")]
    SingularDiagonal(usize),
    #[error("matrix is identically zero")]
    ZeroMatrix,
    #[error("power iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Dense complex matrix, row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![C64::new(0.0, 0.0); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a matrix from row-major entries. Panics if the length is wrong.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "row-major data length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len(), diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = C64::new(d, 0.0);
        }
        m
    }

    /// Column vector (n x 1).
    pub fn column_vector(v: &[C64]) -> Self {
        Self { rows: v.len(), cols: 1, data: v.to_vec() }
    }

    /// Outer product `a * b^H`.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        Self::from_fn(a.len(), b.len(), |i, j| a[i] * b[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<C64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Column-major flattening, i.e. `vec(A)`.
    pub fn vec(&self) -> Vec<C64> {
        let mut out = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                out.push(self[(i, j)]);
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn scale_complex(&self, s: C64) -> Self {
        Self { rows: self.rows, cols: self.cols, data: self.data.iter().map(|z| z * s).collect() }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_lower_triangular(&self) -> bool {
        (0..self.rows).all(|i| ((i + 1)..self.cols).all(|j| self[(i, j)] == C64::new(0.0, 0.0)))
    }

    /// `|| A - A^H ||_F / || A ||_F`, zero for the zero matrix.
    pub fn hermitian_defect(&self) -> f64 {
        let norm = self.frobenius_norm();
        if norm == 0.0 {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc += (self[(i, j)] - self[(j, i)].conj()).norm_sqr();
            }
        }
        acc.sqrt() / norm
    }

    pub fn mul_vec(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols, "matrix-vector dimension mismatch");
        (0..self.rows).map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                let rrow = rhs.row(k);
                let orow = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// `A^H A` without materialising the adjoint.
    pub fn gram(&self) -> ComplexMatrix {
        let n = self.cols;
        let mut out = Self::zeros(n, n);
        for k in 0..self.rows {
            let r = self.row(k);
            for (i, ai) in r.iter().enumerate() {
                let ai = ai.conj();
                for (o, aj) in out.data[i * n..(i + 1) * n].iter_mut().zip(r) {
                    *o += ai * aj;
                }
            }
        }
        out
    }

    pub fn add_scaled_identity(&self, s: f64) -> ComplexMatrix {
        let mut out = self.clone();
        for i in 0..self.rows.min(self.cols) {
            out[(i, i)] += s;
        }
        out
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for z in self.row(i) {
                write!(f, "{:+.4e}{:+.4e}j ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs)
    }
}

pub fn vec_norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `a^H b`.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Cholesky factor `L` with `A = L L^H`, strictly positive real diagonal.
pub fn cholesky(a: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    if !a.is_square() {
        return Err(NumericsError::NotSquare { rows: a.rows, cols: a.cols });
    }
    let defect = a.hermitian_defect();
    if defect > HERMITIAN_TOL {
        return Err(NumericsError::NotHermitian(defect));
    }
    let n = a.rows;
    let floor = PIVOT_FLOOR * (a.trace().re / n as f64).abs();
    let mut l = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for k in 0..j {
            d -= l[(j, k)].norm_sqr();
        }
        if !(d > floor) || d <= 0.0 {
            return Err(NumericsError::NotPositiveDefinite { row: j, pivot: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix by column-wise forward substitution.
pub fn invert_lower_triangular(l: &ComplexMatrix) -> Result<ComplexMatrix, NumericsError> {
    if !l.is_square() {
        return Err(NumericsError::NotSquare { rows: l.rows, cols: l.cols });
    }
    let n = l.rows;
    if let Some(i) = (0..n).find(|&i| !(l[(i, i)].norm() > DIAGONAL_FLOOR)) {
        return Err(NumericsError::SingularDiagonal(i));
    }
    let mut inv = ComplexMatrix::zeros(n, n);
    for j in 0..n {
        inv[(j, j)] = C64::new(1.0, 0.0) / l[(j, j)];
        for i in (j + 1)..n {
            let mut s = C64::new(0.0, 0.0);
            for k in j..i {
                s += l[(i, k)] * inv[(k, j)];
            }
            inv[(i, j)] = -s / l[(i, i)];
        }
    }
    Ok(inv)
}

/// Largest singular value with its unit singular vectors: `H * right = sigma * left`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingularTriplet {
    pub sigma: f64,
    pub left: Vec<C64>,
    pub right: Vec<C64>,
}

struct PowerResult {
    lambda: f64,
    vector: Vec<C64>,
    converged: bool,
}

fn normalize(v: &mut [C64]) -> f64 {
    let n = vec_norm(v);
    if n > 0.0 {
        for z in v.iter_mut() {
            *z /= n;
        }
    }
    n
}

fn power_iteration(gram: &ComplexMatrix, start: Vec<C64>) -> PowerResult {
    let mut v = start;
    normalize(&mut v);
    let mut lambda = inner(&v, &gram.mul_vec(&v)).re;
    for _ in 0..POWER_ITER_MAX {
        let mut w = gram.mul_vec(&v);
        if normalize(&mut w) == 0.0 {
            return PowerResult { lambda: 0.0, vector: v, converged: true };
        }
        let next = inner(&w, &gram.mul_vec(&w)).re;
        v = w;
        let done = (next - lambda).abs() <= POWER_ITER_TOL * next.abs();
        lambda = next;
        if done {
            return PowerResult { lambda, vector: v, converged: true };
        }
    }
    PowerResult { lambda, vector: v, converged: false }
}

/// Dominant eigenpair of the Hermitian PSD Gram matrix `A^H A`.
///
/// Starts from the normalised all-ones vector; a second deterministic start
/// (the heaviest column of the Gram matrix) covers the case where all-ones is
/// orthogonal to the dominant eigenspace. The larger Rayleigh quotient wins.
fn dominant_gram_eigen(gram: &ComplexMatrix) -> PowerResult {
    let n = gram.cols();
    let ones = vec![C64::new(1.0, 0.0); n];
    let first = power_iteration(gram, ones);
    let heaviest = (0..n)
        .max_by(|&a, &b| vec_norm(&gram.column(a)).total_cmp(&vec_norm(&gram.column(b))))
        .unwrap_or(0);
    let second = power_iteration(gram, gram.column(heaviest));
    if second.lambda > first.lambda * (1.0 + 1e-12) {
        second
    } else {
        first
    }
}

pub fn dominant_singular_triplet(h: &ComplexMatrix) -> Result<SingularTriplet, NumericsError> {
    if h.frobenius_norm() == 0.0 {
        return Err(NumericsError::ZeroMatrix);
    }
    let res = dominant_gram_eigen(&h.gram());
    if !res.converged {
        return Err(NumericsError::NoConvergence(POWER_ITER_MAX));
    }
    let sigma = res.lambda.max(0.0).sqrt();
    let mut left = h.mul_vec(&res.vector);
    normalize(&mut left);
    Ok(SingularTriplet { sigma, left, right: res.vector })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixNorms {
    pub spectral: f64,
    pub frobenius: f64,
}

/// Spectral norm via power iteration on `A^H A`.
pub fn spectral_norm(a: &ComplexMatrix) -> f64 {
    if a.rows == 0 || a.cols == 0 || a.frobenius_norm() == 0.0 {
        return 0.0;
    }
    dominant_gram_eigen(&a.gram()).lambda.max(0.0).sqrt()
}

pub fn matrix_norms(a: &ComplexMatrix) -> MatrixNorms {
    let frobenius = a.frobenius_norm();
    // power iteration can overshoot by an ulp or two
    let spectral = spectral_norm(a).min(frobenius);
    MatrixNorms { spectral, frobenius }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(rows, cols, |_, _| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
    }

    #[test]
    fn cholesky_identity_and_diagonal() {
        let i3 = ComplexMatrix::identity(3);
        assert_eq!(cholesky(&i3).unwrap(), i3);
        let l = cholesky(&ComplexMatrix::from_real_diagonal(&[2.0, 2.0])).unwrap();
        assert!((l[(0, 0)].re - 2f64.sqrt()).abs() < 1e-15);
        assert!((l[(1, 1)].re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(l[(1, 0)], c(0.0, 0.0));
    }

    #[test]
    fn cholesky_reconstructs_random_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let b = random_matrix(&mut rng, 4, 4);
            let a = (&b * &b.adjoint()).add_scaled_identity(1.0);
            let l = cholesky(&a).unwrap();
            assert!(l.is_lower_triangular());
            for i in 0..4 {
                assert!(l[(i, i)].re > 0.0 && l[(i, i)].im == 0.0);
            }
            let err = (&(&l * &l.adjoint()) - &a).frobenius_norm();
            assert!(err < 1e-10 * a.frobenius_norm(), "err {err}");
        }
    }

    #[test]
    fn cholesky_rejects_bad_input() {
        let mut a = ComplexMatrix::identity(2);
        a[(0, 1)] = c(0.5, 0.0);
        assert!(matches!(cholesky(&a), Err(NumericsError::NotHermitian(_))));
        let indefinite = ComplexMatrix::from_real_diagonal(&[1.0, -1.0]);
        assert!(matches!(cholesky(&indefinite), Err(NumericsError::NotPositiveDefinite { row: 1, .. })));
        let singular = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]);
        assert!(matches!(cholesky(&singular), Err(NumericsError::NotPositiveDefinite { .. })));
    }

    #[test]
    fn triangular_inverse_cases() {
        let i4 = ComplexMatrix::identity(4);
        assert_eq!(invert_lower_triangular(&i4).unwrap(), i4);
        let inv = invert_lower_triangular(&ComplexMatrix::from_real_diagonal(&[2.0, 4.0])).unwrap();
        assert_eq!(inv, ComplexMatrix::from_real_diagonal(&[0.5, 0.25]));
        let singular = ComplexMatrix::from_real_diagonal(&[1.0, 0.0]);
        assert_eq!(invert_lower_triangular(&singular), Err(NumericsError::SingularDiagonal(1)));
    }

    #[test]
    fn triangular_inverse_matches_forward_substitution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let mut l = random_matrix(&mut rng, 4, 4);
            for i in 0..4 {
                for j in (i + 1)..4 {
                    l[(i, j)] = c(0.0, 0.0);
                }
                l[(i, i)] += c(2.0, 0.0);
            }
            let inv = invert_lower_triangular(&l).unwrap();
            // oracle: solve L x = e_j by plain forward substitution
            for j in 0..4 {
                let mut x = [c(0.0, 0.0); 4];
                for i in 0..4 {
                    let rhs = if i == j { c(1.0, 0.0) } else { c(0.0, 0.0) };
                    let s: C64 = (0..i).map(|k| l[(i, k)] * x[k]).sum();
                    x[i] = (rhs - s) / l[(i, i)];
                }
                for i in 0..4 {
                    assert!((inv[(i, j)] - x[i]).norm() < 1e-12);
                }
            }
            let err = (&(&l * &inv) - &ComplexMatrix::identity(4)).frobenius_norm();
            assert!(err <= 1e-10 * 4.0);
        }
    }

    #[test]
    fn dominant_triplet_simple_cases() {
        let d = ComplexMatrix::from_real_diagonal(&[3.0, 1.0]);
        let t = dominant_singular_triplet(&d).unwrap();
        assert!((t.sigma - 3.0).abs() < 1e-10);
        assert!((t.right[0].norm() - 1.0).abs() < 1e-8);
        assert!(t.right[1].norm() < 1e-6);

        let a = vec![c(0.6, 0.0), c(0.0, 0.8)];
        let b = vec![c(0.0, 1.0), c(0.0, 0.0), c(0.0, 0.0)];
        let t = dominant_singular_triplet(&ComplexMatrix::outer(&a, &b)).unwrap();
        assert!((t.sigma - 1.0).abs() < 1e-12);
        assert!((inner(&b, &t.right).norm() - 1.0).abs() < 1e-10);

        assert_eq!(dominant_singular_triplet(&ComplexMatrix::zeros(2, 2)), Err(NumericsError::ZeroMatrix));
    }

    #[test]
    fn dominant_triplet_when_all_ones_is_orthogonal() {
        // all-ones lies in the null space of this matrix
        let h = ComplexMatrix::from_row_major(2, 2, vec![c(1.0, 0.0), c(-1.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)]);
        let t = dominant_singular_triplet(&h).unwrap();
        assert!((t.sigma - 2.0).abs() < 1e-10);
    }

    #[test]
    fn norms_basic() {
        let n = matrix_norms(&ComplexMatrix::identity(3));
        assert!((n.spectral - 1.0).abs() < 1e-14);
        assert!((n.frobenius - 3f64.sqrt()).abs() < 1e-14);
        let z = matrix_norms(&ComplexMatrix::zeros(3, 2));
        assert_eq!((z.spectral, z.frobenius), (0.0, 0.0));
    }

    #[test]
    fn spectral_never_exceeds_frobenius() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let r = rng.gen_range(1..6);
            let cc = rng.gen_range(1..6);
            let a = random_matrix(&mut rng, r, cc);
            let n = matrix_norms(&a);
            assert!(n.spectral <= n.frobenius + 1e-12);
            assert!(n.spectral >= 0.0);
        }
    }
}
