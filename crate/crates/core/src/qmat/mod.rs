//! Small dense complex linear algebra for operators and states of a few
//! levels.
//!
//! Matrices are stored row-major. Everything downstream (Lindblad generator,
//! speed-limit functionals, permutation scoring) is written against
//! [`ComplexMatrix`], [`Ket`] and [`EigenSystem`].

mod eigen;

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

pub use eigen::{hermitian_eigensystem, hermitian_eigensystem_aligned, EigenSystem};

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Relative Hermiticity tolerance accepted by the eigensolver.
pub const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("matrix is not Hermitian: ||M - M^dag||_F = {defect:.3e} (relative {relative:.3e})")]
    NotHermitian { defect: f64, relative: f64 },
    #[error("Jacobi eigensolver did not converge in {sweeps} sweeps (off-diagonal norm {residual:.3e})")]
    NoConvergence { sweeps: usize, residual: f64 },
    #[error("matrix contains non-finite entries")]
    NotFinite,
    #[error("expected {expected} entries, got {got}")]
    BadLength { expected: usize, got: usize },
    #[error("zero vector cannot be normalized")]
    ZeroVector,
    #[error("{0}")]
    InvalidBasis(String),
}

/// Square complex matrix of dimension `dim`.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for k in 0..dim {
            m[(k, k)] = ONE;
        }
        m
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                data.push(f(r, c));
            }
        }
        Self { dim, data }
    }

    /// Builds a matrix from row-major entries; `entries.len()` must be a
    /// perfect square.
    pub fn from_row_major(entries: Vec<C64>) -> Result<Self, LinalgError> {
        let dim = (entries.len() as f64).sqrt().round() as usize;
        if dim * dim != entries.len() || dim == 0 {
            return Err(LinalgError::BadLength {
                expected: dim.max(1) * dim.max(1),
                got: entries.len(),
            });
        }
        Ok(Self { dim, data: entries })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (k, &d) in diag.iter().enumerate() {
            m[(k, k)] = C64::new(d, 0.0);
        }
        m
    }

    /// Outer product `|a><b|`.
    pub fn outer(a: &Ket, b: &Ket) -> Self {
        Self::from_fn(a.dim(), |r, c| a[r] * b[c].conj())
    }

    /// Pure-state projector `|psi><psi|`.
    pub fn projector(psi: &Ket) -> Self {
        Self::outer(psi, psi)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.dim, |r, c| self[(c, r)].conj())
    }

    /// `(M + M^dag) / 2`.
    pub fn hermitian_part(&self) -> Self {
        Self::from_fn(self.dim, |r, c| 0.5 * (self[(r, c)] + self[(c, r)].conj()))
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|k| self[(k, k)]).sum()
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|k| self[(k, k)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// `||M - M^dag||_F`.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.dim {
            for c in 0..self.dim {
                acc += (self[(r, c)] - self[(c, r)].conj()).norm_sqr();
            }
        }
        acc.sqrt()
    }

    /// Largest modulus among the off-diagonal entries.
    pub fn max_off_diagonal(&self) -> f64 {
        let mut best = 0.0f64;
        for r in 0..self.dim {
            for c in 0..self.dim {
                if r != c {
                    best = best.max(self[(r, c)].norm());
                }
            }
        }
        best
    }

    pub fn scale(&self, s: C64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn scale_in_place(&mut self, s: C64) {
        for z in &mut self.data {
            *z *= s;
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: C64, other: &ComplexMatrix) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// `A*B - B*A`.
    pub fn commutator(&self, other: &ComplexMatrix) -> Self {
        &(self * other) - &(other * self)
    }

    /// `A*B + B*A`.
    pub fn anticommutator(&self, other: &ComplexMatrix) -> Self {
        &(self * other) + &(other * self)
    }

    pub fn apply(&self, v: &Ket) -> Ket {
        debug_assert_eq!(self.dim, v.dim());
        let amps = (0..self.dim)
            .map(|r| (0..self.dim).map(|c| self[(r, c)] * v[c]).sum())
            .collect();
        Ket { amps }
    }

    /// `<a| M |b>`.
    pub fn matrix_element(&self, a: &Ket, b: &Ket) -> C64 {
        a.inner(&self.apply(b))
    }

    /// `C = A*B`, skipping zero entries of `A`; jump operators are usually
    /// single matrix units, so this is the hot path of the integrator.
    pub fn mul_into(&self, rhs: &ComplexMatrix, out: &mut ComplexMatrix) {
        let n = self.dim;
        debug_assert_eq!(n, rhs.dim);
        out.dim = n;
        out.data.clear();
        out.data.resize(n * n, ZERO);
        for r in 0..n {
            for k in 0..n {
                let a = self.data[r * n + k];
                if a.re == 0.0 && a.im == 0.0 {
                    continue;
                }
                let row = &rhs.data[k * n..(k + 1) * n];
                let dst = &mut out.data[r * n..(r + 1) * n];
                for (d, &b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
    }

    fn check_dim(&self, other: &ComplexMatrix) -> Result<(), LinalgError> {
        if self.dim != other.dim {
            return Err(LinalgError::DimensionMismatch {
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix({}x{}) [", self.dim, self.dim)?;
        for r in 0..self.dim {
            write!(f, "  ")?;
            for c in 0..self.dim {
                let z = self[(r, c)];
                write!(f, "{:+.4e}{:+.4e}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r * self.dim + c]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r * self.dim + c]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix sum");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix difference");
        ComplexMatrix {
            dim: self.dim,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.dim, rhs.dim, "dimension mismatch in matrix product");
        let mut out = ComplexMatrix::zeros(self.dim);
        self.mul_into(rhs, &mut out);
        out
    }
}

/// State vector. Not normalized unless built through [`Ket::normalized`].
#[derive(Debug, Clone, PartialEq)]
pub struct Ket {
    amps: Vec<C64>,
}

impl Ket {
    pub fn new(amps: Vec<C64>) -> Self {
        Self { amps }
    }

    pub fn from_real(amps: &[f64]) -> Self {
        Self {
            amps: amps.iter().map(|&x| C64::new(x, 0.0)).collect(),
        }
    }

    /// Standard basis vector `|index>`.
    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Self { amps }
    }

    pub fn normalized(amps: Vec<C64>) -> Result<Self, LinalgError> {
        let mut k = Self { amps };
        k.normalize()?;
        Ok(k)
    }

    pub fn normalize(&mut self) -> Result<(), LinalgError> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(LinalgError::ZeroVector);
        }
        for a in &mut self.amps {
            *a /= n;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`, antilinear in `self`.
    pub fn inner(&self, other: &Ket) -> C64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&self, s: C64) -> Ket {
        Ket {
            amps: self.amps.iter().map(|&a| a * s).collect(),
        }
    }

    /// `self += alpha * other`.
    pub fn add_scaled(&mut self, alpha: C64, other: &Ket) {
        for (a, &b) in self.amps.iter_mut().zip(&other.amps) {
            *a += alpha * b;
        }
    }

    pub fn distance(&self, other: &Ket) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

impl Index<usize> for Ket {
    type Output = C64;
    fn index(&self, k: usize) -> &C64 {
        &self.amps[k]
    }
}

/// `sqrt(Tr(M^dag M))`.
pub fn frobenius_norm(m: &ComplexMatrix) -> f64 {
    m.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Tr(A B)` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<C64, LinalgError> {
    a.check_dim(b)?;
    let n = a.dim;
    let mut acc = ZERO;
    for r in 0..n {
        for k in 0..n {
            acc += a.data[r * n + k] * b.data[k * n + r];
        }
    }
    Ok(acc)
}

/// Outcome of [`validate_density_matrix`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityReport {
    pub hermiticity_defect: f64,
    pub trace_deviation: f64,
    pub min_eigenvalue: f64,
    pub tolerance: f64,
    pub passes: bool,
}

/// Checks Hermiticity, unit trace and positivity of `rho`, each against
/// `tol`. The spectrum is taken from the Hermitian part so the check never
/// fails on the eigensolver's own precondition.
pub fn validate_density_matrix(rho: &ComplexMatrix, tol: f64) -> DensityReport {
    if !rho.is_finite() {
        return DensityReport {
            hermiticity_defect: f64::NAN,
            trace_deviation: f64::NAN,
            min_eigenvalue: f64::NAN,
            tolerance: tol,
            passes: false,
        };
    }
    let hermiticity_defect = rho.hermiticity_defect();
    let trace_deviation = (rho.trace() - ONE).norm();
    let min_eigenvalue = min_eigenvalue(rho);
    let passes = hermiticity_defect <= tol && trace_deviation <= tol && min_eigenvalue >= -tol;
    DensityReport {
        hermiticity_defect,
        trace_deviation,
        min_eigenvalue,
        tolerance: tol,
        passes,
    }
}

/// Smallest eigenvalue of the Hermitian part of `m`.
pub fn min_eigenvalue(m: &ComplexMatrix) -> f64 {
    match hermitian_eigensystem(&m.hermitian_part()) {
        Ok(es) => es.eigenvalues()[0],
        Err(_) => f64::NAN,
    }
}

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    /// Wraps `m` after [`validate_density_matrix`] passes at `tol`.
    pub fn new(m: ComplexMatrix, tol: f64) -> Result<Self, DensityReport> {
        let report = validate_density_matrix(&m, tol);
        if report.passes {
            Ok(Self(m))
        } else {
            Err(report)
        }
    }

    pub fn pure(psi: &Ket) -> Self {
        Self(ComplexMatrix::projector(psi))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim).scale(C64::new(1.0 / dim as f64, 0.0)))
    }

    /// `sum_n weights[n] |E_n><E_n|` over the columns of `basis`.
    ///
    /// Caller is responsible for `weights` being a probability vector.
    pub fn diagonal_in(basis: &EigenSystem, weights: &[f64]) -> Self {
        assert_eq!(basis.dim(), weights.len(), "populations/basis size mismatch");
        let n = basis.dim();
        let mut m = ComplexMatrix::zeros(n);
        for (v, &w) in basis.eigenvectors().iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            for r in 0..n {
                let a = v[r] * w;
                for c in 0..n {
                    m[(r, c)] += a * v[c].conj();
                }
            }
        }
        Self(m)
    }

    #[cfg(test)]
    pub(crate) fn from_matrix_unchecked(m: ComplexMatrix) -> Self {
        Self(m)
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim
    }

    pub fn purity(&self) -> f64 {
        trace_product(&self.0, &self.0).map(|z| z.re).unwrap_or(f64::NAN)
    }
}
