//! Closed-form coincidence probabilities and correlation functions.
//!
//! Entangled pairs give `E = −cos θ_ab`. Disentangled pairs sharing a hidden
//! axis `p̂` give `E = −(a·p̂)(p̂·b)` before averaging; averaging `p̂` over the
//! sphere or over the photon polarization plane scales the entangled curve by
//! ⅓ or ½.
//!
//! The `doubled` flag maps photon polarizer angles onto spin angles: every
//! analyzer separation angle (`θ_ab`, `θ_a`, `θ_b`) is doubled before use.
//! Hidden-axis sampling is never doubled.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::density::{axis_projector, embed, to_dmatrix, DensityMatrix, Particle};
use crate::error::{Error, Result};
use crate::qstate::{pauli_axis_matrix, Sign, UnitAxis};

/// Largest |z| an analyzer may have and still count as in-plane.
pub const PLANE_TOL: f64 = 1e-9;

/// Distribution of hidden quantization axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Geometry {
    /// Isotropic over the unit sphere.
    Sphere3D,
    /// Isotropic over the x-y plane (photon polarization).
    PlanePhoton,
}

impl Geometry {
    /// Coefficient multiplying `cos θ_ab` after averaging over hidden axes.
    pub fn averaging_factor(self) -> f64 {
        match self {
            Geometry::Sphere3D => 1.0 / 3.0,
            Geometry::PlanePhoton => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Geometry::Sphere3D => "sphere",
            Geometry::PlanePhoton => "plane",
        }
    }
}

impl FromStr for Geometry {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sphere" | "sphere3d" => Ok(Geometry::Sphere3D),
            "plane" | "planephoton" | "photon" => Ok(Geometry::PlanePhoton),
            _ => Err(format!("unknown geometry `{s}` (expected `sphere` or `plane`)")),
        }
    }
}

/// Population model for the pairs reaching the detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Model {
    Entangled,
    Disentangled,
    /// Fraction `lambda` of disentangled pairs; the remainder stay entangled.
    Mixture(f64),
}

impl Model {
    pub fn mixture(lambda: f64) -> Result<Model> {
        let m = Model::Mixture(lambda);
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Model::Mixture(l) if !(0.0..=1.0).contains(&l) => Err(Error::InvalidMixture(l)),
            _ => Ok(()),
        }
    }

    /// Population fraction of disentangled pairs.
    pub fn disentangled_fraction(&self) -> f64 {
        match *self {
            Model::Entangled => 0.0,
            Model::Disentangled => 1.0,
            Model::Mixture(l) => l,
        }
    }

    /// Convex combination of the entangled and disentangled values.
    pub fn blend(&self, entangled: f64, disentangled: f64) -> f64 {
        match *self {
            Model::Entangled => entangled,
            Model::Disentangled => disentangled,
            Model::Mixture(l) => (1.0 - l) * entangled + l * disentangled,
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Model::Entangled => write!(f, "entangled"),
            Model::Disentangled => write!(f, "disentangled"),
            Model::Mixture(l) => write!(f, "mixture:{l}"),
        }
    }
}

impl FromStr for Model {
    type Err = String;

    /// Accepts `entangled`, `disentangled` or `mixture:<lambda>`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "entangled" => return Ok(Model::Entangled),
            "disentangled" => return Ok(Model::Disentangled),
            _ => {}
        }
        let lambda = lower
            .strip_prefix("mixture:")
            .ok_or_else(|| format!("unknown model `{s}` (expected entangled, disentangled or mixture:<lambda>)"))?;
        let l: f64 = lambda
            .parse()
            .map_err(|_| format!("mixture fraction `{lambda}` is not a number"))?;
        Model::mixture(l).map_err(|e| e.to_string())
    }
}

/// Probabilities of the four coincidence outcomes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutcomeProbs {
    pub p_pp: f64,
    pub p_pm: f64,
    pub p_mp: f64,
    pub p_mm: f64,
}

impl OutcomeProbs {
    /// Symmetric table with `p_pp = p_mm = ¼(1 − k)` and `p_pm = p_mp = ¼(1 + k)`.
    fn anti(k: f64) -> Self {
        let same = 0.25 * (1.0 - k);
        let diff = 0.25 * (1.0 + k);
        Self {
            p_pp: same,
            p_pm: diff,
            p_mp: diff,
            p_mm: same,
        }
    }

    /// Outcomes in the fixed order `(++, +-, -+, --)`.
    pub fn as_array(&self) -> [f64; 4] {
        [self.p_pp, self.p_pm, self.p_mp, self.p_mm]
    }

    pub fn sum(&self) -> f64 {
        self.as_array().iter().sum()
    }

    pub fn get(&self, s1: Sign, s2: Sign) -> f64 {
        match (s1, s2) {
            (Sign::Plus, Sign::Plus) => self.p_pp,
            (Sign::Plus, Sign::Minus) => self.p_pm,
            (Sign::Minus, Sign::Plus) => self.p_mp,
            (Sign::Minus, Sign::Minus) => self.p_mm,
        }
    }

    /// `P++ − P+- − P-+ + P--`
    pub fn correlation(&self) -> f64 {
        self.p_pp - self.p_pm - self.p_mp + self.p_mm
    }

    /// `(1 − w)·self + w·other`
    pub fn blend(&self, other: &OutcomeProbs, w: f64) -> OutcomeProbs {
        let mix = |x: f64, y: f64| (1.0 - w) * x + w * y;
        OutcomeProbs {
            p_pp: mix(self.p_pp, other.p_pp),
            p_pm: mix(self.p_pm, other.p_pm),
            p_mp: mix(self.p_mp, other.p_mp),
            p_mm: mix(self.p_mm, other.p_mm),
        }
    }
}

/// Cosine of the angle between two directions, doubled when `doubled`.
pub fn separation_cos(u: &UnitAxis, v: &UnitAxis, doubled: bool) -> f64 {
    let c = u.dot(v).clamp(-1.0, 1.0);
    if doubled {
        2.0 * c * c - 1.0
    } else {
        c
    }
}

fn check_plane(geometry: Geometry, axes: &[&UnitAxis]) -> Result<()> {
    if geometry == Geometry::PlanePhoton {
        for a in axes {
            let z = a.vector()[2].abs();
            if z > PLANE_TOL {
                return Err(Error::OutOfPlaneAnalyzer(z));
            }
        }
    }
    Ok(())
}

/// Detection probabilities `(P(+), P(−))` for one spin of a pair whose source
/// state is `source_sign` along `p_hat`, measured along `analyzer`.
///
/// Each value carries the factor ½ of a four-outcome normalization, so the
/// pair sums to ½.
pub fn single_detection_probs(p_hat: &UnitAxis, source_sign: Sign, analyzer: &UnitAxis) -> (f64, f64) {
    let c = analyzer.dot(p_hat).clamp(-1.0, 1.0);
    // ½cos²(θ/2) = ¼(1 + cosθ)
    let aligned = 0.25 * (1.0 + c);
    let opposed = 0.25 * (1.0 - c);
    match source_sign {
        Sign::Plus => (aligned, opposed),
        Sign::Minus => (opposed, aligned),
    }
}

pub fn entangled_joint_probs(a: &UnitAxis, b: &UnitAxis, doubled: bool) -> OutcomeProbs {
    OutcomeProbs::anti(separation_cos(a, b, doubled))
}

pub fn entangled_correlation(a: &UnitAxis, b: &UnitAxis, doubled: bool) -> f64 {
    entangled_joint_probs(a, b, doubled).correlation()
}

/// Sub-ensemble probabilities given the cosines `a·p̂` and `p̂·b`.
pub fn subensemble_probs_from_cosines(cos_a: f64, cos_b: f64) -> OutcomeProbs {
    OutcomeProbs::anti(cos_a * cos_b)
}

/// Coincidence probabilities for disentangled pairs that all share `p_hat`.
pub fn subensemble_joint_probs(p_hat: &UnitAxis, a: &UnitAxis, b: &UnitAxis) -> OutcomeProbs {
    subensemble_probs_from_cosines(a.dot(p_hat), p_hat.dot(b))
}

/// `−(a·p̂)(p̂·b)`
pub fn subensemble_correlation(p_hat: &UnitAxis, a: &UnitAxis, b: &UnitAxis) -> f64 {
    -(a.dot(p_hat) * p_hat.dot(b))
}

/// Disentangled correlation averaged over hidden axes.
pub fn averaged_correlation(a: &UnitAxis, b: &UnitAxis, geometry: Geometry, doubled: bool) -> Result<f64> {
    check_plane(geometry, &[a, b])?;
    Ok(-geometry.averaging_factor() * separation_cos(a, b, doubled))
}

/// Disentangled coincidence probabilities averaged over hidden axes.
pub fn averaged_joint_probs(a: &UnitAxis, b: &UnitAxis, geometry: Geometry, doubled: bool) -> Result<OutcomeProbs> {
    check_plane(geometry, &[a, b])?;
    Ok(OutcomeProbs::anti(
        geometry.averaging_factor() * separation_cos(a, b, doubled),
    ))
}

/// Averaged disentangled probability from the entangled one: `⅛ + ½·P_E`.
///
/// The constant ⅛ is the random-coincidence floor left once the interference
/// terms are gone.
pub fn disentangled_from_entangled(p_e: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&p_e) {
        return Err(Error::ProbabilityOutOfRange(p_e));
    }
    Ok(0.125 + 0.5 * p_e)
}

/// Coincidence probabilities for `model`.
pub fn joint_probs(
    model: Model,
    geometry: Geometry,
    a: &UnitAxis,
    b: &UnitAxis,
    doubled: bool,
) -> Result<OutcomeProbs> {
    model.validate()?;
    match model {
        Model::Entangled => Ok(entangled_joint_probs(a, b, doubled)),
        Model::Disentangled => averaged_joint_probs(a, b, geometry, doubled),
        Model::Mixture(l) => {
            let e = entangled_joint_probs(a, b, doubled);
            let d = averaged_joint_probs(a, b, geometry, doubled)?;
            Ok(e.blend(&d, l))
        }
    }
}

/// Correlation function `E(a, b)` for `model`.
pub fn correlation(model: Model, geometry: Geometry, a: &UnitAxis, b: &UnitAxis, doubled: bool) -> Result<f64> {
    model.validate()?;
    let e = entangled_correlation(a, b, doubled);
    let d = match model {
        Model::Entangled => 0.0,
        _ => averaged_correlation(a, b, geometry, doubled)?,
    };
    Ok(model.blend(e, d))
}

/// `S = |E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)|`
#[allow(clippy::too_many_arguments)]
pub fn chsh(
    model: Model,
    geometry: Geometry,
    a: &UnitAxis,
    a_prime: &UnitAxis,
    b: &UnitAxis,
    b_prime: &UnitAxis,
    doubled: bool,
) -> Result<f64> {
    let e = |x: &UnitAxis, y: &UnitAxis| correlation(model, geometry, x, y, doubled);
    Ok((e(a, b)? - e(a, b_prime)? + e(a_prime, b)? + e(a_prime, b_prime)?).abs())
}

/// Polar and azimuthal angles of `u` in a right-handed frame whose pole is
/// `pole`.
fn angles_in_frame(u: &UnitAxis, pole: &UnitAxis) -> (f64, f64) {
    let p = pole.vector();
    let helper = if p[2].abs() < 0.9 { UnitAxis::z() } else { UnitAxis::x() };
    let e1 = UnitAxis::from_vector(pole.cross(&helper)).expect("helper is never parallel to the pole");
    let e2 = pole.cross(&e1);
    let v = u.vector();
    let x = u.dot(&e1);
    let y = v[0] * e2[0] + v[1] * e2[1] + v[2] * e2[2];
    let z = u.dot(pole);
    (x.hypot(y).atan2(z), y.atan2(x))
}

/// `cos θ_ab − [cos θ_a cos θ_b + sin θ_a sin θ_b cos(φ_a − φ_b)]` with the
/// angles of `a` and `b` measured from `p_hat`.
///
/// The second bracketed term is the part of the entangled correlation that
/// the disentangled sub-ensemble lacks.
pub fn angle_identity_residual(a: &UnitAxis, b: &UnitAxis, p_hat: &UnitAxis) -> f64 {
    let (ta, pa) = angles_in_frame(a, p_hat);
    let (tb, pb) = angles_in_frame(b, p_hat);
    a.dot(b) - (ta.cos() * tb.cos() + ta.sin() * tb.sin() * (pa - pb).cos())
}

fn axis_operator(axis: &UnitAxis) -> DMatrix<Complex64> {
    to_dmatrix(&pauli_axis_matrix(axis))
}

/// `⟨a·σ¹ σ²·b⟩ − ⟨a·σ¹⟩⟨σ²·b⟩` evaluated by traces against `rho`.
pub fn correlation_from_density(rho: &DensityMatrix, a: &UnitAxis, b: &UnitAxis) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(Error::BadDimension {
            rows: rho.dim(),
            cols: rho.dim(),
        });
    }
    let sa = axis_operator(a);
    let sb = axis_operator(b);
    let joint = rho.expectation(&sa.kronecker(&sb));
    let left = rho.expectation(&embed(&sa, Particle::First));
    let right = rho.expectation(&embed(&sb, Particle::Second));
    Ok(joint - left * right)
}

/// Coincidence probabilities `Tr(ρ Π¹_a(s1) ⊗ Π²_b(s2))`, normalized by the
/// trace of `rho`.
pub fn joint_probs_from_density(rho: &DensityMatrix, a: &UnitAxis, b: &UnitAxis) -> Result<OutcomeProbs> {
    if rho.dim() != 4 {
        return Err(Error::BadDimension {
            rows: rho.dim(),
            cols: rho.dim(),
        });
    }
    let p = |s1: Sign, s2: Sign| {
        let op = axis_projector(a, s1).matrix().kronecker(axis_projector(b, s2).matrix());
        rho.expectation(&op) / rho.trace()
    };
    Ok(OutcomeProbs {
        p_pp: p(Sign::Plus, Sign::Plus),
        p_pm: p(Sign::Plus, Sign::Minus),
        p_mp: p(Sign::Minus, Sign::Plus),
        p_mm: p(Sign::Minus, Sign::Minus),
    })
}
