//! Density operators for one and two spins.
//!
//! Conditional states produced by projecting one particle keep the trace of
//! the projection (½ for the EPR state). Renormalization is a separate,
//! explicit step via [`DensityMatrix::renormalized`].

use std::fmt;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::qstate::{bell_state, make_spinor, pauli_matrices, BellKind, Sign, UnitAxis};

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-12;

/// One of the two spins of a pair. Particle 1 is the slow tensor index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Particle {
    First,
    Second,
}

impl Particle {
    pub fn other(self) -> Particle {
        match self {
            Particle::First => Particle::Second,
            Particle::Second => Particle::First,
        }
    }
}

impl TryFrom<u8> for Particle {
    type Error = Error;

    fn try_from(value: u8) -> Result<Self> {
        match value {
            1 => Ok(Particle::First),
            2 => Ok(Particle::Second),
            n => Err(Error::InvalidParticle(n)),
        }
    }
}

/// Hermitian, positive semidefinite 2×2 or 4×4 matrix with its trace
/// recorded at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<Complex64>,
    trace: f64,
}

impl DensityMatrix {
    /// Validates shape, Hermiticity and positivity.
    pub fn from_matrix(m: DMatrix<Complex64>) -> Result<Self> {
        let (rows, cols) = m.shape();
        if rows != cols || !(rows == 2 || rows == 4) {
            return Err(Error::BadDimension { rows, cols });
        }
        let dev = (&m - m.adjoint()).camax();
        if dev.is_nan() || dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        let hermitian = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        let min_ev = hermitian
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        if min_ev < -PSD_TOL {
            return Err(Error::NotPositive(min_ev));
        }
        let trace = m.trace().re;
        Ok(Self { m, trace })
    }

    pub fn from_matrix2(m: Matrix2<Complex64>) -> Result<Self> {
        Self::from_matrix(DMatrix::from_iterator(2, 2, m.iter().copied()))
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.m
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.m[(row, col)]
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    /// True for trace 1; false for sub-normalized conditional states.
    pub fn is_normalized(&self) -> bool {
        (self.trace - 1.0).abs() <= TRACE_TOL
    }

    pub fn renormalized(&self) -> Result<Self> {
        if self.trace.abs() <= TRACE_TOL {
            return Err(Error::ZeroTrace);
        }
        Ok(Self {
            m: &self.m / Complex64::new(self.trace, 0.0),
            trace: 1.0,
        })
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.m + self.m.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// `Tr(ρ²)`
    pub fn purity(&self) -> f64 {
        (&self.m * &self.m).trace().re
    }

    /// `Tr(ρ·op)`; real for Hermitian `op`.
    pub fn expectation(&self, op: &DMatrix<Complex64>) -> f64 {
        (&self.m * op).trace().re
    }

    /// Kronecker product `self ⊗ other` of two single-spin densities.
    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        if self.dim() != 2 || other.dim() != 2 {
            return Err(Error::BadDimension {
                rows: self.dim() * other.dim(),
                cols: self.dim() * other.dim(),
            });
        }
        Ok(Self {
            m: self.m.kronecker(&other.m),
            trace: self.trace * other.trace,
        })
    }

    /// Traces out `traced`, returning the reduced state of the other spin.
    pub fn partial_trace(&self, traced: Particle) -> Result<DensityMatrix> {
        let m = partial_trace_raw(&self.m, traced)?;
        Self::from_matrix(m)
    }
}

impl fmt::Display for DensityMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.dim() {
            for c in 0..self.dim() {
                let z = self.m[(r, c)];
                write!(f, "{:>9.5}{:+.5}i ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "trace = {}", self.trace)
    }
}

fn partial_trace_raw(m: &DMatrix<Complex64>, traced: Particle) -> Result<DMatrix<Complex64>> {
    let (rows, cols) = m.shape();
    if rows != 4 || cols != 4 {
        return Err(Error::BadDimension { rows, cols });
    }
    Ok(DMatrix::from_fn(2, 2, |i, j| {
        (0..2)
            .map(|k| match traced {
                Particle::Second => m[(2 * i + k, 2 * j + k)],
                Particle::First => m[(2 * k + i, 2 * k + j)],
            })
            .sum()
    }))
}

/// Lifts a single-spin operator to the pair space, acting on `on`.
pub fn embed(op: &DMatrix<Complex64>, on: Particle) -> DMatrix<Complex64> {
    let id = DMatrix::<Complex64>::identity(2, 2);
    match on {
        Particle::First => op.kronecker(&id),
        Particle::Second => id.kronecker(op),
    }
}

pub(crate) fn to_dmatrix(m: &Matrix2<Complex64>) -> DMatrix<Complex64> {
    DMatrix::from_iterator(2, 2, m.iter().copied())
}

/// Pure-state projector `|s⟩⟨s|` along `axis` (unit trace).
pub fn axis_projector(axis: &UnitAxis, sign: Sign) -> DensityMatrix {
    let p = make_spinor(axis, sign).projector();
    DensityMatrix {
        m: to_dmatrix(&p),
        trace: 1.0,
    }
}

/// `|Ψ⁻⟩⟨Ψ⁻|` from the singlet outer product.
pub fn epr_density() -> DensityMatrix {
    let v = bell_state(BellKind::SingletMinus);
    let v = v.as_vector();
    DensityMatrix {
        m: DMatrix::from_fn(4, 4, |i, j| v[i] * v[j].conj()),
        trace: 1.0,
    }
}

/// `¼(I⊗I − σ¹·σ²)`, the rotation-invariant operator form of the EPR state.
pub fn epr_density_from_pauli() -> DensityMatrix {
    let mut m = DMatrix::<Complex64>::identity(4, 4);
    for s in pauli_matrices() {
        let s = to_dmatrix(&s);
        m -= s.kronecker(&s);
    }
    DensityMatrix {
        m: m * Complex64::new(0.25, 0.0),
        trace: 1.0,
    }
}

/// Projects `projected` onto `|sign⟩` along `axis` and traces it out:
/// `Tr_p{ |s⟩⟨s|_p ρ }`.
///
/// The result is the sub-normalized state of the remaining spin. For the EPR
/// state it is `½|−s⟩⟨−s|` along the same axis.
pub fn conditional_collapse(
    rho12: &DensityMatrix,
    axis: &UnitAxis,
    projected_sign: Sign,
    projected_particle: Particle,
) -> Result<DensityMatrix> {
    if rho12.dim() != 4 {
        return Err(Error::BadDimension {
            rows: rho12.dim(),
            cols: rho12.dim(),
        });
    }
    let proj = embed(axis_projector(axis, projected_sign).matrix(), projected_particle);
    let reduced = partial_trace_raw(&(proj * &rho12.m), projected_particle)?;
    DensityMatrix::from_matrix(reduced)
}

/// `½(ρ¹(+)⊗ρ²(−) + ρ¹(−)⊗ρ²(+))` with unit-trace projectors at `axis1` for
/// particle 1 and `axis2` for particle 2.
///
/// Interference terms between the `+-` and `-+` components are absent.
pub fn disentangled_pair_density(axis1: &UnitAxis, axis2: &UnitAxis) -> DensityMatrix {
    let pm = axis_projector(axis1, Sign::Plus)
        .m
        .kronecker(&axis_projector(axis2, Sign::Minus).m);
    let mp = axis_projector(axis1, Sign::Minus)
        .m
        .kronecker(&axis_projector(axis2, Sign::Plus).m);
    DensityMatrix {
        m: (pm + mp) * Complex64::new(0.5, 0.0),
        trace: 1.0,
    }
}

/// `ρ¹(s1)⊗ρ²(s2)` with both projectors along the shared `axis`.
pub fn product_density(axis: &UnitAxis, sign1: Sign, sign2: Sign) -> DensityMatrix {
    DensityMatrix {
        m: axis_projector(axis, sign1).m.kronecker(&axis_projector(axis, sign2).m),
        trace: 1.0,
    }
}
