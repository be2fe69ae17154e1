//! Dense complex linear algebra for small Hilbert spaces.
//!
//! Operators are stored inline in a fixed `MAX_DIM x MAX_DIM` buffer so the
//! integrator's inner loop never allocates. Only the leading `dim x dim`
//! block is meaningful.

use std::fmt;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Largest supported Hilbert dimension.
pub const MAX_DIM: usize = 5;

/// Tolerance on `|Re tr(rho) - 1|`.
pub const TRACE_TOL: f64 = 1e-9;
/// Tolerance on `|Im tr(rho)|`.
pub const TRACE_IMAG_TOL: f64 = 1e-12;
/// Tolerance on `max |rho - rho^dagger|`.
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Lower bound on the smallest eigenvalue of a density matrix.
pub const PSD_TOL: f64 = -1e-9;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// A dense `dim x dim` complex matrix.
#[derive(Clone, Copy, PartialEq)]
pub struct Operator {
    dim: usize,
    m: [[C64; MAX_DIM]; MAX_DIM],
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows: Vec<Vec<C64>> = (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.m[i][j]).collect())
            .collect();
        f.debug_struct("Operator")
            .field("dim", &self.dim)
            .field("entries", &rows)
            .finish()
    }
}

fn check_dim(dim: usize) -> Result<()> {
    if (2..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(Error::InvalidDimension(dim))
    }
}

impl Operator {
    fn blank(dim: usize) -> Self {
        Operator {
            dim,
            m: [[ZERO; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        check_dim(dim)?;
        Ok(Self::blank(dim))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::from_fn(dim, |i, j| if i == j { ONE } else { ZERO })
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Result<Self> {
        check_dim(dim)?;
        let mut out = Self::blank(dim);
        for i in 0..dim {
            for j in 0..dim {
                out.m[i][j] = f(i, j);
            }
        }
        Ok(out)
    }

    /// Builds an operator from row vectors; every row must have `rows.len()` entries.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        check_dim(dim)?;
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Shape {
                expected: dim,
                found: bad.len(),
            });
        }
        Self::from_fn(dim, |i, j| rows[i][j])
    }

    pub fn diagonal(values: &[C64]) -> Result<Self> {
        Self::from_fn(values.len(), |i, j| if i == j { values[i] } else { ZERO })
    }

    /// `|k><k|`.
    pub fn projector(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::Domain(format!("level {k} outside dimension {dim}")));
        }
        Self::from_fn(dim, |i, j| if i == k && j == k { ONE } else { ZERO })
    }

    /// Outer product `|ket><bra|`.
    pub fn outer(ket: &[C64], bra: &[C64]) -> Result<Self> {
        if ket.len() != bra.len() {
            return Err(Error::Shape {
                expected: ket.len(),
                found: bra.len(),
            });
        }
        Self::from_fn(ket.len(), |i, j| ket[i] * bra[j].conj())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        assert!(i < self.dim && j < self.dim, "index out of range");
        self.m[i][j]
    }

    pub fn same_shape(&self, other: &Operator) -> Result<()> {
        if self.dim == other.dim {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: self.dim,
                found: other.dim,
            })
        }
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::blank(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] = self.m[j][i].conj();
            }
        }
        out
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.m[i][i]).sum()
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.m[i][j] *= s;
            }
        }
        out
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// `self * rhs`. Panics on dimension mismatch; use [`Operator::same_shape`] first
    /// when the operands come from untrusted input.
    pub fn matmul(&self, rhs: &Operator) -> Self {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        let n = self.dim;
        let mut out = Self::blank(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.m[i][k];
                if a == ZERO {
                    continue;
                }
                for j in 0..n {
                    out.m[i][j] += a * rhs.m[k][j];
                }
            }
        }
        out
    }

    /// `[self, other]`.
    pub fn commutator(&self, other: &Operator) -> Self {
        self.matmul(other) - other.matmul(self)
    }

    /// `{self, other}`.
    pub fn anticommutator(&self, other: &Operator) -> Self {
        self.matmul(other) + other.matmul(self)
    }

    /// `u * self * u^dagger`.
    pub fn conjugate_by(&self, u: &Operator) -> Self {
        u.matmul(self).matmul(&u.adjoint())
    }

    pub fn max_abs(&self) -> f64 {
        self.entries().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        (*self - *other).max_abs()
    }

    /// `max |A - A^dagger|` over entries.
    pub fn hermiticity_error(&self) -> f64 {
        self.max_abs_diff(&self.adjoint())
    }

    /// Largest absolute row sum; an upper bound on the spectral radius.
    pub fn inf_norm(&self) -> f64 {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.m[i][j].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.entries().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Eigenvalues of the Hermitian part `(A + A^dagger)/2`, ascending.
    pub fn hermitian_eigenvalues(&self) -> Vec<f64> {
        let n = self.dim;
        let h = (*self + self.adjoint()).scale_re(0.5);
        let mat = DMatrix::from_fn(n, n, |i, j| h.m[i][j]);
        let mut ev: Vec<f64> = mat.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    fn entries(&self) -> impl Iterator<Item = C64> + '_ {
        (0..self.dim).flat_map(move |i| (0..self.dim).map(move |j| self.m[i][j]))
    }
}

impl Index<(usize, usize)> for Operator {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        assert!(i < self.dim && j < self.dim, "index out of range");
        &self.m[i][j]
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(mut self, rhs: Operator) -> Operator {
        self += rhs;
        self
    }
}

impl AddAssign for Operator {
    fn add_assign(&mut self, rhs: Operator) {
        assert_eq!(self.dim, rhs.dim, "operator dimension mismatch");
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.m[i][j] += rhs.m[i][j];
            }
        }
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        self + (-rhs)
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        self.scale_re(-1.0)
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        self.matmul(&rhs)
    }
}

/// Truncated ladder operator `a` with `a[i][i+1] = sqrt(i+1)`.
pub fn annihilation_op(dim: usize) -> Result<Operator> {
    Operator::from_fn(dim, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    })
}

pub fn creation_op(dim: usize) -> Result<Operator> {
    Ok(annihilation_op(dim)?.adjoint())
}

/// `a^dagger a`.
pub fn number_op(dim: usize) -> Result<Operator> {
    let diag: Vec<C64> = (0..dim).map(|k| C64::new(k as f64, 0.0)).collect();
    Operator::diagonal(&diag)
}

/// Rotation axis on a two-level subspace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

/// A pair of adjacent transmon levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Subspace {
    #[serde(rename = "01")]
    Q01,
    #[serde(rename = "12")]
    Q12,
}

impl Subspace {
    pub fn lower(self) -> usize {
        match self {
            Subspace::Q01 => 0,
            Subspace::Q12 => 1,
        }
    }

    pub fn upper(self) -> usize {
        self.lower() + 1
    }
}

/// Pauli matrix embedded in `subspace`, with `sigma_z = |upper><upper| - |lower><lower|`
/// so that `sigma_z` has the same sense as the number operator.
pub fn subspace_pauli(axis: Axis, subspace: Subspace, dim: usize) -> Result<Operator> {
    let (l, u) = (subspace.lower(), subspace.upper());
    if u >= dim {
        return Err(Error::Domain(format!(
            "subspace {subspace:?} needs dimension >= {}",
            u + 1
        )));
    }
    let mut op = Operator::zeros(dim)?;
    match axis {
        Axis::X => {
            op.m[l][u] = ONE;
            op.m[u][l] = ONE;
        }
        Axis::Y => {
            op.m[l][u] = C64::new(0.0, -1.0);
            op.m[u][l] = C64::new(0.0, 1.0);
        }
        Axis::Z => {
            op.m[u][u] = ONE;
            op.m[l][l] = -ONE;
        }
    }
    Ok(op)
}

/// `exp(-i angle sigma_axis / 2)` on `subspace`, identity on every other level.
pub fn subspace_rotation(axis: Axis, angle: f64, subspace: Subspace, dim: usize) -> Result<Operator> {
    let sigma = subspace_pauli(axis, subspace, dim)?;
    let (l, u) = (subspace.lower(), subspace.upper());
    let c = (angle / 2.0).cos();
    let s = (angle / 2.0).sin();
    let mut out = Operator::identity(dim)?;
    for &i in &[l, u] {
        for &j in &[l, u] {
            let id = if i == j { 1.0 } else { 0.0 };
            out.m[i][j] = C64::new(c * id, 0.0) - C64::new(0.0, s) * sigma.m[i][j];
        }
    }
    Ok(out)
}

/// Validity diagnostics of a candidate density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Validity {
    pub trace_error: f64,
    pub trace_imag: f64,
    pub hermiticity_error: f64,
    pub min_eigenvalue: f64,
}

impl Validity {
    pub fn of(op: &Operator) -> Self {
        let tr = op.trace();
        Validity {
            trace_error: (tr.re - 1.0).abs(),
            trace_imag: tr.im.abs(),
            hermiticity_error: op.hermiticity_error(),
            min_eigenvalue: op.hermitian_eigenvalues()[0],
        }
    }

    pub fn is_valid(&self) -> bool {
        self.trace_error <= TRACE_TOL
            && self.trace_imag <= TRACE_IMAG_TOL
            && self.hermiticity_error <= HERMITIAN_TOL
            && self.min_eigenvalue >= PSD_TOL
    }
}

/// A validated density matrix: unit trace, Hermitian, positive semidefinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix {
    op: Operator,
}

impl DensityMatrix {
    pub fn new(op: Operator) -> Result<Self> {
        let v = Validity::of(&op);
        if !v.is_valid() {
            return Err(Error::InvalidState(format!(
                "not a density matrix: trace error {:.3e}, imaginary trace {:.3e}, \
                 hermiticity error {:.3e}, min eigenvalue {:.3e}",
                v.trace_error, v.trace_imag, v.hermiticity_error, v.min_eigenvalue
            )));
        }
        Ok(DensityMatrix { op })
    }

    /// `|k><k|`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        Ok(DensityMatrix {
            op: Operator::projector(dim, k)?,
        })
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim
    }

    pub fn population(&self, k: usize) -> f64 {
        self.op[(k, k)].re
    }

    pub fn validity(&self) -> Validity {
        Validity::of(&self.op)
    }

    /// Applies an instantaneous unitary, `U rho U^dagger`.
    pub fn evolve_unitary(&self, u: &Operator) -> Result<Self> {
        self.op.same_shape(u)?;
        Ok(DensityMatrix {
            op: self.op.conjugate_by(u),
        })
    }
}

/// `|psi><psi|`. A ket whose norm is off by more than 1e-12 is normalized and
/// a warning is logged.
pub fn dm_pure(ket: &[C64]) -> Result<DensityMatrix> {
    check_dim(ket.len())?;
    let norm = ket.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return Err(Error::InvalidState("zero or non-finite state vector".into()));
    }
    let psi: Vec<C64> = if (norm - 1.0).abs() > 1e-12 {
        log::warn!("state vector norm {norm} != 1; normalizing");
        ket.iter().map(|c| c / norm).collect()
    } else {
        ket.to_vec()
    };
    DensityMatrix::new(Operator::outer(&psi, &psi)?)
}

/// `tr(rho A)`.
pub fn expectation(rho: &DensityMatrix, a: &Operator) -> Result<C64> {
    rho.op.same_shape(a)?;
    Ok(rho.op.matmul(a).trace())
}
