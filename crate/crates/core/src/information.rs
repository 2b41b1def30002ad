//! Scalar and matrix Fisher information.
//!
//! Two routes are provided: closed forms for the singlet model, and central
//! finite differences over any outcome distribution. They are kept independent
//! so that one can check the other.

use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::qubit_model::{
    assemblage_for, partially_coherent_singlet, AliceZ, BobXz, Outcome, PauliAxis, PauliSetting,
};

/// Largest visibility at which the closed forms are evaluated.
pub const VISIBILITY_CEILING: f64 = 1.0 - 1e-9;

/// Default central-difference step, in radians and in visibility units.
pub const FD_STEP: f64 = 1e-5;

/// Probabilities below this are left out of Fisher sums.
pub const MIN_PROBABILITY: f64 = 1e-12;

/// Probabilities below this are rejected as invalid.
const NEGATIVE_PROBABILITY: f64 = -1e-9;

/// Condition number above which a 2x2 matrix is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;

/// 2x2 symmetric Fisher information matrix, parameter order `(φ, v)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FisherMatrix {
    pub phi_phi: f64,
    pub phi_v: f64,
    pub v_v: f64,
}

impl FisherMatrix {
    pub fn new(phi_phi: f64, phi_v: f64, v_v: f64) -> Self {
        Self { phi_phi, phi_v, v_v }
    }

    pub fn diagonal(phi_phi: f64, v_v: f64) -> Self {
        Self::new(phi_phi, 0.0, v_v)
    }

    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Self::new(m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)])
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.phi_phi, self.phi_v, self.phi_v, self.v_v)
    }

    pub fn determinant(&self) -> f64 {
        self.phi_phi * self.v_v - self.phi_v * self.phi_v
    }

    /// PSD within an absolute tolerance.
    pub fn is_psd(&self, tol: f64) -> bool {
        self.phi_phi >= -tol && self.v_v >= -tol && self.determinant() >= -tol
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(k * self.phi_phi, k * self.phi_v, k * self.v_v)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::new(
            self.phi_phi + other.phi_phi,
            self.phi_v + other.phi_v,
            self.v_v + other.v_v,
        )
    }

    /// Inverse with a condition-number guard.
    pub fn inverse(&self) -> Result<Matrix2<f64>> {
        invert_checked(&self.to_matrix())
    }
}

/// Inverts a symmetric 2x2 matrix, rejecting condition numbers above [`MAX_CONDITION`].
pub fn invert_checked(m: &Matrix2<f64>) -> Result<Matrix2<f64>> {
    let eig = m.symmetric_eigenvalues();
    let (lo, hi) = (eig[0].abs().min(eig[1].abs()), eig[0].abs().max(eig[1].abs()));
    let condition = if lo == 0.0 { f64::INFINITY } else { hi / lo };
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularMatrix { condition });
    }
    m.try_inverse().ok_or(Error::SingularMatrix { condition })
}

/// `1/(F⁻¹)_φφ = F_φφ − F_φv²/F_vv` and the Schur penalty it subtracts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveInfo {
    pub value: f64,
    pub schur_penalty: f64,
}

// ---------------------------------------------------------------------------
// Finite-difference route
// ---------------------------------------------------------------------------

fn check_probabilities(p: &[f64]) -> Result<()> {
    match p.iter().find(|&&x| !(x >= NEGATIVE_PROBABILITY)) {
        Some(bad) => Err(domain(format!("probability {bad:e} is negative or NaN"))),
        None => Ok(()),
    }
}

/// `Σ_r (∂_φ p)² / p` by central differences of an outcome distribution.
pub fn fisher_scalar<M>(model: M, phi: f64, step: f64) -> Result<f64>
where
    M: Fn(f64) -> Vec<f64>,
{
    if !(step > 0.0) {
        return Err(domain(format!("finite-difference step {step} must be positive")));
    }
    let (p, plus, minus) = (model(phi), model(phi + step), model(phi - step));
    check_probabilities(&p)?;
    check_probabilities(&plus)?;
    check_probabilities(&minus)?;
    let mut f = 0.0;
    for r in 0..p.len() {
        if p[r] < MIN_PROBABILITY {
            continue;
        }
        let d = (plus[r] - minus[r]) / (2.0 * step);
        f += d * d / p[r];
    }
    Ok(f)
}

/// Fisher matrix over `(φ, v)` by central differences in both parameters.
pub fn fisher_matrix_fd<M>(model: M, phi: f64, v: f64, step: f64) -> Result<FisherMatrix>
where
    M: Fn(f64, f64) -> Vec<f64>,
{
    if !(step > 0.0) {
        return Err(domain(format!("finite-difference step {step} must be positive")));
    }
    let p = model(phi, v);
    let (pp, pm) = (model(phi + step, v), model(phi - step, v));
    let (vp, vm) = (model(phi, v + step), model(phi, v - step));
    for dist in [&p, &pp, &pm, &vp, &vm] {
        check_probabilities(dist)?;
    }
    let mut out = FisherMatrix::new(0.0, 0.0, 0.0);
    for r in 0..p.len() {
        if p[r] < MIN_PROBABILITY {
            continue;
        }
        let dphi = (pp[r] - pm[r]) / (2.0 * step);
        let dv = (vp[r] - vm[r]) / (2.0 * step);
        out.phi_phi += dphi * dphi / p[r];
        out.phi_v += dphi * dv / p[r];
        out.v_v += dv * dv / p[r];
    }
    Ok(out)
}

/// Joint `(a, b)` distribution of the single-parameter protocol (Bob measures
/// `Z` only), from the density matrix. Order: `a ∈ {H, V}` outer, `b ∈ {H, V}` inner.
pub fn born_single_parameter_joint(phi: f64, v: f64) -> Result<Vec<f64>> {
    let state = partially_coherent_singlet(v)?.apply_phase(phi);
    let asm = assemblage_for(&state, PauliAxis::X);
    let bob = PauliSetting::bob(PauliAxis::Z);
    let mut out = Vec::with_capacity(4);
    for a in AliceZ::ALL {
        for b in Outcome::BOTH {
            out.push(asm.joint_probability(a.singlet_frame_outcome(), bob, b));
        }
    }
    Ok(out)
}

/// Joint eight-outcome distribution of the phase branch (Bob picks X or Z with
/// probability ½), from the density matrix. Order: `a ∈ {H, V}` outer,
/// `b ∈ {D, A, H, V}` inner.
pub fn born_phase_joint(phi: f64, v: f64) -> Result<Vec<f64>> {
    let state = partially_coherent_singlet(v)?.apply_phase(phi);
    let asm = assemblage_for(&state, PauliAxis::X);
    let mut out = Vec::with_capacity(8);
    for a in AliceZ::ALL {
        for b in BobXz::ALL {
            let (axis, outcome) = b.setting();
            out.push(0.5 * asm.joint_probability(a.singlet_frame_outcome(), PauliSetting::bob(axis), outcome));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

fn check_visibility(v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(domain(format!("visibility {v} outside [0, 1]")));
    }
    Ok(())
}

/// Conditional Fisher information on φ when Bob measures `Z`:
/// `v² cos²φ / (1 − v² sin²φ)`.
pub fn conditional_fisher(phi: f64, v: f64) -> Result<f64> {
    check_visibility(v)?;
    if !phi.is_finite() {
        return Err(domain("phase must be finite"));
    }
    let (s, c) = phi.sin_cos();
    let denom = 1.0 - v * v * s * s;
    if denom < 1e-14 {
        return Err(Error::Singularity(format!("conditional Fisher pole at v = {v}, φ = {phi}")));
    }
    Ok(v * v * c * c / denom)
}

/// Conditional Fisher matrix over `(φ, v)` when Bob alternates X and Z.
pub fn conditional_fisher_matrix(phi: f64, v: f64) -> Result<FisherMatrix> {
    check_visibility(v)?;
    if !phi.is_finite() {
        return Err(domain("phase must be finite"));
    }
    if v > VISIBILITY_CEILING {
        return Err(Error::Singularity(format!(
            "Fisher matrix evaluated at v = {v} above the 1 - 1e-9 ceiling"
        )));
    }
    let (s, c) = phi.sin_cos();
    let (s2, c2, v2) = (s * s, c * c, v * v);
    let dz = 1.0 - v2 * s2;
    let dx = 1.0 - v2 * c2;
    let sin2 = (2.0 * phi).sin();
    let phi_phi = 0.5 * v2 * (c2 / dz + s2 / dx);
    let phi_v = -v2 * v * (4.0 * phi).sin() / (8.0 * (1.0 - v2) + 2.0 * v2 * v2 * sin2 * sin2);
    let v_v = s2 / (2.0 * dz) + c2 / (2.0 * dx);
    Ok(FisherMatrix::new(phi_phi, phi_v, v_v))
}

/// Effective information on φ after accounting for the nuisance `v`.
pub fn effective_phase_info(f: &FisherMatrix) -> Result<EffectiveInfo> {
    if f.v_v <= 1e-15 {
        if f.phi_v == 0.0 {
            return Ok(EffectiveInfo { value: f.phi_phi, schur_penalty: 0.0 });
        }
        return Err(Error::Degenerate(format!(
            "F_vv = {:e} with nonzero correlation {:e}",
            f.v_v, f.phi_v
        )));
    }
    let schur_penalty = f.phi_v * f.phi_v / f.v_v;
    Ok(EffectiveInfo {
        value: f.phi_phi - schur_penalty,
        schur_penalty,
    })
}

/// `R = (F⁻¹)_φv / √((F⁻¹)_φφ (F⁻¹)_vv)`.
pub fn correlation_coefficient(finv: &Matrix2<f64>) -> Result<f64> {
    let (a, d) = (finv[(0, 0)], finv[(1, 1)]);
    if !(a > 0.0 && d > 0.0) {
        return Err(Error::Degenerate(format!("nonpositive inverse diagonal ({a:e}, {d:e})")));
    }
    Ok((finv[(0, 1)] / (a * d).sqrt()).clamp(-1.0, 1.0))
}
