//! Single-spin and two-spin states.
//!
//! Spinors are expressed in the reference basis quantized along z
//! (`theta = 0, phi = 0`). Two-spin amplitudes use the product ordering
//! `(++, +-, -+, --)` with particle 1 as the slow index.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI, TAU};
use std::fmt;

use nalgebra::{Matrix2, Vector2, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Measurement outcome or state label of a spin component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Sign::Plus => '+',
            Sign::Minus => '-',
        }
    }
}

impl fmt::Display for Sign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// sin/cos that return exact values on the polar grid points 0, π/2, π.
///
/// Keeps equatorial axes exactly in the x-y plane.
fn polar_sin_cos(theta: f64) -> (f64, f64) {
    if theta == 0.0 {
        (0.0, 1.0)
    } else if theta == FRAC_PI_2 {
        (1.0, 0.0)
    } else if theta == PI {
        (0.0, -1.0)
    } else {
        theta.sin_cos()
    }
}

/// A direction on the unit sphere: a quantization axis or an analyzer
/// orientation.
///
/// Angles are canonicalized on construction: `theta` in `[0, π]` and `phi`
/// in `[0, 2π)`. A polar angle that reflects through a pole is folded back
/// and the azimuth is shifted by π, so the represented point is unchanged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitAxis {
    theta: f64,
    phi: f64,
    v: [f64; 3],
}

impl UnitAxis {
    /// Builds an axis from polar and azimuthal angles in radians.
    ///
    /// Panics on non-finite input; use [`UnitAxis::try_new`] for untrusted
    /// angles.
    pub fn new(theta: f64, phi: f64) -> Self {
        Self::try_new(theta, phi).expect("axis angles must be finite")
    }

    pub fn try_new(theta: f64, phi: f64) -> Result<Self> {
        if !theta.is_finite() || !phi.is_finite() {
            return Err(Error::NonFiniteAngle { theta, phi });
        }
        let mut t = theta.rem_euclid(TAU);
        let mut p = phi;
        if t > PI {
            t = TAU - t;
            p += PI;
        }
        let mut p = p.rem_euclid(TAU);
        if p >= TAU {
            p = 0.0;
        }
        let (st, ct) = polar_sin_cos(t);
        let (sp, cp) = p.sin_cos();
        Ok(Self {
            theta: t,
            phi: p,
            v: [st * cp, st * sp, ct],
        })
    }

    /// Axis in the x-y plane at azimuth `phi`.
    pub fn in_plane(phi: f64) -> Self {
        Self::new(FRAC_PI_2, phi)
    }

    pub fn z() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn x() -> Self {
        Self::new(FRAC_PI_2, 0.0)
    }

    pub fn y() -> Self {
        Self::new(FRAC_PI_2, FRAC_PI_2)
    }

    /// Builds an axis from a Cartesian direction; the input need not be
    /// normalized.
    pub fn from_vector(v: [f64; 3]) -> Result<Self> {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if !n.is_finite() || n == 0.0 {
            return Err(Error::ZeroVector);
        }
        let u = [v[0] / n, v[1] / n, v[2] / n];
        let theta = u[0].hypot(u[1]).atan2(u[2]);
        let mut phi = u[1].atan2(u[0]).rem_euclid(TAU);
        if phi >= TAU {
            phi = 0.0;
        }
        Ok(Self { theta, phi, v: u })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }

    /// Cartesian components `(sinθcosφ, sinθsinφ, cosθ)`.
    pub fn vector(&self) -> [f64; 3] {
        self.v
    }

    pub fn dot(&self, other: &UnitAxis) -> f64 {
        self.v[0] * other.v[0] + self.v[1] * other.v[1] + self.v[2] * other.v[2]
    }

    pub fn cross(&self, other: &UnitAxis) -> [f64; 3] {
        let (a, b) = (self.v, other.v);
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }
}

/// A spin-½ state `(up, down)` in the reference z basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spinor {
    pub up: Complex64,
    pub down: Complex64,
}

impl Spinor {
    pub fn as_vector(&self) -> Vector2<Complex64> {
        Vector2::new(self.up, self.down)
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &Spinor) -> Complex64 {
        self.up.conj() * other.up + self.down.conj() * other.down
    }

    pub fn norm_sqr(&self) -> f64 {
        self.up.norm_sqr() + self.down.norm_sqr()
    }

    /// `|self⟩⟨self|`
    pub fn projector(&self) -> Matrix2<Complex64> {
        let v = self.as_vector();
        v * v.adjoint()
    }
}

/// Eigenstate of the Pauli operator along `axis` with eigenvalue `sign`.
///
/// `|+⟩ = (cos θ/2, sin θ/2 e^{iφ})`, `|−⟩ = (−sin θ/2 e^{−iφ}, cos θ/2)`.
/// No extra global phase is attached to either state.
pub fn make_spinor(axis: &UnitAxis, sign: Sign) -> Spinor {
    let (s, c) = (axis.theta / 2.0).sin_cos();
    match sign {
        Sign::Plus => Spinor {
            up: Complex64::new(c, 0.0),
            down: Complex64::from_polar(s, axis.phi),
        },
        Sign::Minus => Spinor {
            up: -Complex64::from_polar(s, -axis.phi),
            down: Complex64::new(c, 0.0),
        },
    }
}

/// The three Pauli matrices `[σx, σy, σz]`.
pub fn pauli_matrices() -> [Matrix2<Complex64>; 3] {
    [
        Matrix2::new(ZERO, ONE, ONE, ZERO),
        Matrix2::new(ZERO, -I, I, ZERO),
        Matrix2::new(ONE, ZERO, ZERO, -ONE),
    ]
}

/// `n·σ` for the unit vector `n` of `axis`.
pub fn pauli_axis_matrix(axis: &UnitAxis) -> Matrix2<Complex64> {
    let [nx, ny, nz] = axis.vector();
    let off = Complex64::new(nx, -ny);
    Matrix2::new(Complex64::new(nz, 0.0), off, off.conj(), Complex64::new(-nz, 0.0))
}

/// Normalized two-spin state in the `(++, +-, -+, --)` product basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSpinState {
    amp: Vector4<Complex64>,
}

impl TwoSpinState {
    /// Wraps four amplitudes, normalizing them. Returns `None` for the zero
    /// vector.
    pub fn from_amplitudes(amp: [Complex64; 4]) -> Option<Self> {
        let v = Vector4::from(amp);
        let n = v.norm();
        if n == 0.0 || !n.is_finite() {
            return None;
        }
        Some(Self {
            amp: v / Complex64::new(n, 0.0),
        })
    }

    /// `|a⟩₁ ⊗ |b⟩₂`
    pub fn product(first: &Spinor, second: &Spinor) -> Self {
        Self {
            amp: first
                .as_vector()
                .kronecker(&second.as_vector())
                .fixed_rows::<4>(0)
                .into(),
        }
    }

    pub fn amplitudes(&self) -> [Complex64; 4] {
        [self.amp[0], self.amp[1], self.amp[2], self.amp[3]]
    }

    pub fn as_vector(&self) -> &Vector4<Complex64> {
        &self.amp
    }

    /// `⟨self|other⟩`
    pub fn inner(&self, other: &TwoSpinState) -> Complex64 {
        self.amp.dotc(&other.amp)
    }

    pub fn norm(&self) -> f64 {
        self.amp.norm()
    }
}

/// The four maximally entangled two-spin states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BellKind {
    /// `(0, 1, −1, 0)/√2`, the singlet.
    SingletMinus,
    /// `(0, 1, 1, 0)/√2`
    TripletPlus,
    /// `(1, 0, 0, 1)/√2`
    PhiPlus,
    /// `(1, 0, 0, −1)/√2`
    PhiMinus,
}

impl BellKind {
    pub const ALL: [BellKind; 4] = [
        BellKind::SingletMinus,
        BellKind::TripletPlus,
        BellKind::PhiPlus,
        BellKind::PhiMinus,
    ];
}

pub fn bell_state(kind: BellKind) -> TwoSpinState {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let amp = match kind {
        BellKind::SingletMinus => [ZERO, h, -h, ZERO],
        BellKind::TripletPlus => [ZERO, h, h, ZERO],
        BellKind::PhiPlus => [h, ZERO, ZERO, h],
        BellKind::PhiMinus => [h, ZERO, ZERO, -h],
    };
    TwoSpinState {
        amp: Vector4::from(amp),
    }
}

/// Antisymmetric pair state with both spins quantized at the same polar
/// angle `theta` but independent azimuths.
///
/// Equal azimuths give the singlet for every `theta`; unequal azimuths model
/// a pair that has lost azimuthal phase coherence. Only the shared-polar-angle
/// case is provided.
pub fn entangled_pair_state(theta: f64, phi1: f64, phi2: f64) -> TwoSpinState {
    let (s, c) = (theta / 2.0).sin_cos();
    let cs = c * s;
    let e = |x: f64| Complex64::from_polar(1.0, x);
    let d = phi1 - phi2;
    let amp = [
        (e(-phi1) - e(-phi2)) * cs,
        Complex64::new(c * c, 0.0) + e(-d) * (s * s),
        -Complex64::new(c * c, 0.0) - e(d) * (s * s),
        (e(phi1) - e(phi2)) * cs,
    ];
    let inv = Complex64::new(FRAC_1_SQRT_2, 0.0);
    TwoSpinState {
        amp: Vector4::from(amp) * inv,
    }
}

/// `|⟨Ψ⁻|state⟩|²`, insensitive to the global phase of `state`.
pub fn singlet_fidelity(state: &TwoSpinState) -> f64 {
    bell_state(BellKind::SingletMinus).inner(state).norm_sqr().min(1.0)
}
