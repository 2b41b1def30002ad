//! Two-qubit model: the partially coherent singlet, Bob's phase rotation,
//! assemblages and Born-rule outcome probabilities.
//!
//! All closed forms in this crate are written in the singlet frame, where the
//! shared state is
//!
//! ```text
//!            | 0    0    0   0 |
//! rho(v) = ½ | 0    1   -v   0 |     basis |HH>, |HV>, |VH>, |VV>  (Alice ⊗ Bob)
//!            | 0   -v    1   0 |
//!            | 0    0    0   0 |
//! ```
//!
//! The source in the lab emits `(|HD> + |VA>)/√2`, which is the same state up
//! to a local rotation on Alice's qubit (see [`experimental_frame`]). Under that
//! rotation Alice's lab `Z` measurement is her singlet-frame `X` measurement, so
//! the phase branch of the protocol is modelled with Alice measuring `X` here
//! and her outcomes relabelled `H`/`V`.

use nalgebra::{Matrix2, Matrix4, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use crate::error::{domain, Error, Result};

pub type Matrix2c = Matrix2<Complex64>;
pub type Matrix4c = Matrix4<Complex64>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

/// Below this trace an Alice outcome is treated as impossible.
pub const MIN_OUTCOME_TRACE: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PauliAxis {
    X,
    Y,
    Z,
}

impl PauliAxis {
    pub const ALL: [PauliAxis; 3] = [PauliAxis::X, PauliAxis::Y, PauliAxis::Z];

    pub fn matrix(self) -> Matrix2c {
        match self {
            PauliAxis::X => Matrix2c::new(ZERO, ONE, ONE, ZERO),
            PauliAxis::Y => Matrix2c::new(ZERO, -I, I, ZERO),
            PauliAxis::Z => Matrix2c::new(ONE, ZERO, ZERO, -ONE),
        }
    }

    /// Eigenvector for the given outcome.
    ///
    /// `+1` ↦ D, L, H and `-1` ↦ A, R, V for X, Y, Z respectively.
    pub fn eigenvector(self, outcome: Outcome) -> Vector2<Complex64> {
        let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
        match (self, outcome) {
            (PauliAxis::Z, Outcome::Plus) => Vector2::new(ONE, ZERO),
            (PauliAxis::Z, Outcome::Minus) => Vector2::new(ZERO, ONE),
            (PauliAxis::X, Outcome::Plus) => Vector2::new(r, r),
            (PauliAxis::X, Outcome::Minus) => Vector2::new(r, -r),
            (PauliAxis::Y, Outcome::Plus) => Vector2::new(r, r * I),
            (PauliAxis::Y, Outcome::Minus) => Vector2::new(r, -r * I),
        }
    }

    pub fn projector(self, outcome: Outcome) -> Matrix2c {
        let e = self.eigenvector(outcome);
        e * e.adjoint()
    }

    /// Polarization label of an outcome in this basis.
    pub fn label(self, outcome: Outcome) -> &'static str {
        match (self, outcome) {
            (PauliAxis::X, Outcome::Plus) => "D",
            (PauliAxis::X, Outcome::Minus) => "A",
            (PauliAxis::Y, Outcome::Plus) => "L",
            (PauliAxis::Y, Outcome::Minus) => "R",
            (PauliAxis::Z, Outcome::Plus) => "H",
            (PauliAxis::Z, Outcome::Minus) => "V",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Party {
    Alice,
    Bob,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PauliSetting {
    pub axis: PauliAxis,
    pub party: Party,
}

impl PauliSetting {
    pub fn alice(axis: PauliAxis) -> Self {
        Self { axis, party: Party::Alice }
    }

    pub fn bob(axis: PauliAxis) -> Self {
        Self { axis, party: Party::Bob }
    }
}

/// Binary measurement outcome, `+1` or `-1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub const BOTH: [Outcome; 2] = [Outcome::Plus, Outcome::Minus];

    pub fn sign(self) -> f64 {
        match self {
            Outcome::Plus => 1.0,
            Outcome::Minus => -1.0,
        }
    }

    fn index(self) -> usize {
        match self {
            Outcome::Plus => 0,
            Outcome::Minus => 1,
        }
    }
}

/// Two-qubit density matrix, Alice's qubit first.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoQubitState {
    matrix: Matrix4c,
    visibility: f64,
}

impl TwoQubitState {
    pub fn matrix(&self) -> &Matrix4c {
        &self.matrix
    }

    pub fn visibility(&self) -> f64 {
        self.visibility
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        (self.matrix * self.matrix).trace().re
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let eig = self.matrix.symmetric_eigenvalues();
        [eig[0], eig[1], eig[2], eig[3]]
    }

    /// Bob's reduced state `Tr_A ρ`.
    pub fn bob_reduced(&self) -> Matrix2c {
        let mut out = Matrix2c::zeros();
        for j in 0..2 {
            for k in 0..2 {
                out[(j, k)] = self.matrix[(j, k)] + self.matrix[(2 + j, 2 + k)];
            }
        }
        out
    }

    /// Conjugates Bob's qubit by `exp(-i φ Y/2)`.
    pub fn apply_phase(&self, phi: f64) -> TwoQubitState {
        let full = Matrix2c::identity().kronecker(&phase_rotation(phi));
        TwoQubitState {
            matrix: full * self.matrix * full.adjoint(),
            visibility: self.visibility,
        }
    }

    /// Applies a local unitary on Alice's qubit.
    pub fn rotate_alice(&self, unitary: &Matrix2c) -> TwoQubitState {
        let full = unitary.kronecker(&Matrix2c::identity());
        TwoQubitState {
            matrix: full * self.matrix * full.adjoint(),
            visibility: self.visibility,
        }
    }

    /// Partial projection of Alice's qubit onto `|a⟩`: `(⟨a| ⊗ 1) ρ (|a⟩ ⊗ 1)`.
    pub fn project_alice(&self, axis: PauliAxis, outcome: Outcome) -> Matrix2c {
        let a = axis.eigenvector(outcome);
        let mut out = Matrix2c::zeros();
        for j in 0..2 {
            for k in 0..2 {
                let mut acc = ZERO;
                for i in 0..2 {
                    for ip in 0..2 {
                        acc += a[i].conj() * self.matrix[(2 * i + j, 2 * ip + k)] * a[ip];
                    }
                }
                out[(j, k)] = acc;
            }
        }
        out
    }
}

/// `exp(-i φ Y/2)`, a real rotation matrix.
pub fn phase_rotation(phi: f64) -> Matrix2c {
    let (s, c) = (0.5 * phi).sin_cos();
    Matrix2c::new(
        Complex64::new(c, 0.0),
        Complex64::new(-s, 0.0),
        Complex64::new(s, 0.0),
        Complex64::new(c, 0.0),
    )
}

/// The partially coherent singlet `ρ_AB(v)`.
pub fn partially_coherent_singlet(v: f64) -> Result<TwoQubitState> {
    if !(0.0..=1.0).contains(&v) {
        return Err(domain(format!("visibility {v} outside [0, 1]")));
    }
    let mut m = Matrix4c::zeros();
    m[(1, 1)] = Complex64::new(0.5, 0.0);
    m[(2, 2)] = Complex64::new(0.5, 0.0);
    m[(1, 2)] = Complex64::new(-0.5 * v, 0.0);
    m[(2, 1)] = Complex64::new(-0.5 * v, 0.0);
    Ok(TwoQubitState { matrix: m, visibility: v })
}

/// Alice's local rotation taking the singlet frame to the lab frame,
/// `|H⟩⟨A| − |V⟩⟨D|`.
///
/// It maps the pure singlet onto `(|HD⟩ + |VA⟩)/√2` up to a global sign, and
/// maps singlet-frame `X` outcomes A/D onto lab `Z` outcomes H/V.
pub fn alice_lab_rotation() -> Matrix2c {
    let h = PauliAxis::Z.eigenvector(Outcome::Plus);
    let v = PauliAxis::Z.eigenvector(Outcome::Minus);
    let d = PauliAxis::X.eigenvector(Outcome::Plus);
    let a = PauliAxis::X.eigenvector(Outcome::Minus);
    h * a.adjoint() - v * d.adjoint()
}

/// The state expressed in the lab frame.
pub fn experimental_frame(state: &TwoQubitState) -> TwoQubitState {
    state.rotate_alice(&alice_lab_rotation())
}

/// Subnormalized conditional state `p(a|K) ρ^B_{a|K}`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalState {
    pub matrix: Matrix2c,
    pub alice_outcome: Outcome,
    pub alice_setting: PauliSetting,
}

impl ConditionalState {
    /// `p(a|K)`.
    pub fn weight(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Normalized expectation of a Pauli observable.
    pub fn expectation(&self, axis: PauliAxis) -> Result<f64> {
        let w = self.weight();
        if w < MIN_OUTCOME_TRACE {
            return Err(Error::Degenerate(format!(
                "Alice outcome {:?} has probability {w:.3e}",
                self.alice_outcome
            )));
        }
        Ok((axis.matrix() * self.matrix).trace().re / w)
    }

    /// Normalized variance `1 − ⟨σ⟩²` of a Pauli observable.
    pub fn variance(&self, axis: PauliAxis) -> Result<f64> {
        let m = self.expectation(axis)?;
        Ok(1.0 - m * m)
    }
}

/// Bob's conditional states for one Alice setting, indexed by Alice's outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct Assemblage {
    pub setting: PauliSetting,
    entries: [ConditionalState; 2],
}

impl Assemblage {
    pub fn entry(&self, a: Outcome) -> &ConditionalState {
        &self.entries[a.index()]
    }

    pub fn entries(&self) -> &[ConditionalState; 2] {
        &self.entries
    }

    /// `Σ_a p(a|K) ρ^B_{a|K}`, which must not depend on `K`.
    pub fn bob_marginal(&self) -> Matrix2c {
        self.entries[0].matrix + self.entries[1].matrix
    }

    /// `p(b|a)` for Bob measuring `bob_setting`.
    pub fn outcome_probability(&self, a: Outcome, bob_setting: PauliSetting, b: Outcome) -> Result<f64> {
        let entry = self.entry(a);
        let w = entry.weight();
        if w < MIN_OUTCOME_TRACE {
            return Err(Error::Degenerate(format!(
                "Alice outcome {a:?} for {:?} has probability {w:.3e}",
                self.setting.axis
            )));
        }
        Ok(self.joint_probability(a, bob_setting, b) / w)
    }

    /// `p(b, a) = Tr(|b⟩⟨b| p(a|K) ρ^B_{a|K})`.
    pub fn joint_probability(&self, a: Outcome, bob_setting: PauliSetting, b: Outcome) -> f64 {
        (bob_setting.axis.projector(b) * self.entry(a).matrix).trace().re
    }

    /// Conditional variance `Σ_a p(a|K) Δ²σ[ρ^B_{a|K}]` of a Bob Pauli observable.
    /// Outcomes with zero weight contribute nothing.
    pub fn conditional_variance(&self, axis: PauliAxis) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.weight() >= MIN_OUTCOME_TRACE)
            .map(|e| e.weight() * e.variance(axis).unwrap_or(0.0))
            .sum()
    }
}

/// Bob's conditional states for Alice measuring `alice_axis`.
pub fn assemblage_for(state: &TwoQubitState, alice_axis: PauliAxis) -> Assemblage {
    let setting = PauliSetting::alice(alice_axis);
    let entry = |a: Outcome| ConditionalState {
        matrix: state.project_alice(alice_axis, a),
        alice_outcome: a,
        alice_setting: setting,
    };
    Assemblage {
        setting,
        entries: [entry(Outcome::Plus), entry(Outcome::Minus)],
    }
}

// ---------------------------------------------------------------------------
// Protocol-level outcome tables
// ---------------------------------------------------------------------------

/// Alice's outcome in the phase branch, labelled in the lab `Z` basis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AliceZ {
    H,
    V,
}

impl AliceZ {
    pub const ALL: [AliceZ; 2] = [AliceZ::H, AliceZ::V];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            AliceZ::H => "H",
            AliceZ::V => "V",
        }
    }

    /// The singlet-frame `X` outcome this lab outcome corresponds to.
    pub fn singlet_frame_outcome(self) -> Outcome {
        match self {
            AliceZ::H => Outcome::Minus,
            AliceZ::V => Outcome::Plus,
        }
    }
}

/// Bob's outcome in the phase branch: `X` basis (D/A) or `Z` basis (H/V).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BobXz {
    D,
    A,
    H,
    V,
}

impl BobXz {
    pub const ALL: [BobXz; 4] = [BobXz::D, BobXz::A, BobXz::H, BobXz::V];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            BobXz::D => "D",
            BobXz::A => "A",
            BobXz::H => "H",
            BobXz::V => "V",
        }
    }

    pub fn setting(self) -> (PauliAxis, Outcome) {
        match self {
            BobXz::D => (PauliAxis::X, Outcome::Plus),
            BobXz::A => (PauliAxis::X, Outcome::Minus),
            BobXz::H => (PauliAxis::Z, Outcome::Plus),
            BobXz::V => (PauliAxis::Z, Outcome::Minus),
        }
    }
}

/// Circular-basis outcome of the generator branch (`L` = +1, `R` = −1).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Circular {
    L,
    R,
}

impl Circular {
    pub const ALL: [Circular; 2] = [Circular::L, Circular::R];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Circular::L => "L",
            Circular::R => "R",
        }
    }

    pub fn outcome(self) -> Outcome {
        match self {
            Circular::L => Outcome::Plus,
            Circular::R => Outcome::Minus,
        }
    }
}

/// Offsets `Γ_ab` such that, for Bob's chosen basis,
/// `p(b | a, basis) = (1 + v cos(φ + Γ_ab)) / 2`.
///
/// Indexed `[alice][bob]` with Alice in `H, V` and Bob in `D, A, H, V` order.
/// Obtained from the Born rule on `ρ_AB(v)` with Alice's lab `Z` outcome;
/// `tests::offset_table_matches_born_rule` re-derives every entry.
pub const PHASE_OFFSETS: [[f64; 4]; 2] = [
    [0.0, PI, FRAC_PI_2, -FRAC_PI_2],
    [PI, 0.0, -FRAC_PI_2, FRAC_PI_2],
];

/// `p(b | a)` for Bob measuring in the basis of `b`: `(1 + v cos(φ + Γ_ab))/2`.
pub fn setting_conditional(a: AliceZ, b: BobXz, phi: f64, v: f64) -> f64 {
    0.5 * (1.0 + v * (phi + PHASE_OFFSETS[a.index()][b.index()]).cos())
}

/// `p(b | a)` over Bob's four-outcome measurement that picks X or Z with
/// probability ½ each: `(1 + v cos(φ + Γ_ab))/4`.
pub fn phase_conditional(a: AliceZ, b: BobXz, phi: f64, v: f64) -> f64 {
    0.5 * setting_conditional(a, b, phi, v)
}

/// `∂_φ` and `∂_v` of [`phase_conditional`].
pub fn phase_conditional_gradient(a: AliceZ, b: BobXz, phi: f64, v: f64) -> (f64, f64) {
    let arg = phi + PHASE_OFFSETS[a.index()][b.index()];
    let (s, c) = arg.sin_cos();
    (-0.25 * v * s, 0.25 * c)
}

/// Joint `p(b, a)` over the eight phase-branch outcomes; sums to one.
pub fn phase_joint(a: AliceZ, b: BobXz, phi: f64, v: f64) -> f64 {
    0.5 * phase_conditional(a, b, phi, v)
}

/// Joint `p(b, a)` of the generator branch (Alice Y, Bob Y), indexed `[bob][alice]`.
///
/// Bob's rotation commutes with `Y`, so the table does not depend on φ.
pub fn generator_joint(v: f64) -> [[f64; 2]; 2] {
    let concordant = 0.25 * (1.0 - v);
    let discordant = 0.25 * (1.0 + v);
    [[concordant, discordant], [discordant, concordant]]
}

/// Model value of the conditional variance of Bob's `Y` given Alice's `Y`.
pub fn model_conditional_y_variance(v: f64) -> f64 {
    1.0 - v * v
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    const TOL: f64 = 1e-12;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < TOL
    }

    fn mat_close2(a: &Matrix2c, b: &Matrix2c) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| close(*x, *y))
    }

    fn mat_close4(a: &Matrix4c, b: &Matrix4c) -> bool {
        a.iter().zip(b.iter()).all(|(x, y)| close(*x, *y))
    }

    #[test]
    fn singlet_purity_limits() {
        assert!((partially_coherent_singlet(1.0).unwrap().purity() - 1.0).abs() < TOL);
        let dephased = partially_coherent_singlet(0.0).unwrap();
        assert!((dephased.purity() - 0.5).abs() < TOL);
        let diag: Vec<f64> = (0..4).map(|i| dephased.matrix()[(i, i)].re).collect();
        assert_eq!(diag, vec![0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn singlet_central_block() {
        let s = partially_coherent_singlet(0.97).unwrap();
        let m = s.matrix();
        assert!((m[(1, 1)].re - 0.5).abs() < TOL);
        assert!((m[(2, 2)].re - 0.5).abs() < TOL);
        assert!((m[(1, 2)].re + 0.485).abs() < TOL);
        assert!((m[(2, 1)].re + 0.485).abs() < TOL);
    }

    #[test]
    fn singlet_rejects_bad_visibility() {
        assert!(matches!(partially_coherent_singlet(1.01), Err(Error::Domain(_))));
        assert!(matches!(partially_coherent_singlet(-0.1), Err(Error::Domain(_))));
        assert!(partially_coherent_singlet(f64::NAN).is_err());
    }

    #[test]
    fn state_invariants() {
        for &v in &[0.0, 0.3, 0.97, 1.0] {
            for &phi in &[0.0, 0.7, -2.1, 3.0] {
                let s = partially_coherent_singlet(v).unwrap().apply_phase(phi);
                let m = s.matrix();
                assert!(mat_close4(m, &m.adjoint()));
                assert!(close(s.trace(), ONE));
                assert!(s.eigenvalues().iter().all(|&e| e > -TOL));
            }
        }
    }

    #[test]
    fn phase_identity_and_full_turn() {
        let s = partially_coherent_singlet(0.8).unwrap();
        assert!(mat_close4(s.apply_phase(0.0).matrix(), s.matrix()));
        assert!(mat_close4(s.apply_phase(2.0 * PI).matrix(), s.matrix()));
    }

    #[test]
    fn phase_composes() {
        let s = partially_coherent_singlet(0.6).unwrap();
        let a = s.apply_phase(0.4).apply_phase(1.3);
        let b = s.apply_phase(1.7);
        assert!(mat_close4(a.matrix(), b.matrix()));
    }

    #[test]
    fn conditional_states_after_phase() {
        // Alice X on the rotated singlet reproduces the ρ_D(φ|v), ρ_A(φ|v) closed forms.
        let (v, phi) = (0.97, FRAC_PI_4);
        let state = partially_coherent_singlet(v).unwrap().apply_phase(phi);
        let asm = assemblage_for(&state, PauliAxis::X);
        let (s, c) = phi.sin_cos();
        let q = |x: f64| Complex64::new(0.25 * x, 0.0);
        let rho_d = Matrix2c::new(q(1.0 + v * s), q(-v * c), q(-v * c), q(1.0 - v * s));
        let rho_a = Matrix2c::new(q(1.0 - v * s), q(v * c), q(v * c), q(1.0 + v * s));
        assert!(mat_close2(&asm.entry(Outcome::Plus).matrix, &rho_d));
        assert!(mat_close2(&asm.entry(Outcome::Minus).matrix, &rho_a));
    }

    #[test]
    fn generator_conditional_states() {
        let v = 0.97;
        let asm = assemblage_for(&partially_coherent_singlet(v).unwrap(), PauliAxis::Y);
        let rho_l = Matrix2c::new(q4(1.0, 0.0), q4(0.0, v), q4(0.0, -v), q4(1.0, 0.0));
        let rho_r = Matrix2c::new(q4(1.0, 0.0), q4(0.0, -v), q4(0.0, v), q4(1.0, 0.0));
        assert!(mat_close2(&asm.entry(Outcome::Plus).matrix, &rho_l));
        assert!(mat_close2(&asm.entry(Outcome::Minus).matrix, &rho_r));
        for e in asm.entries() {
            assert!((e.weight() - 0.5).abs() < TOL);
        }
        assert!((asm.entry(Outcome::Plus).expectation(PauliAxis::Y).unwrap() + v).abs() < TOL);
        assert!((asm.entry(Outcome::Minus).expectation(PauliAxis::Y).unwrap() - v).abs() < TOL);
        assert!((asm.conditional_variance(PauliAxis::Y) - model_conditional_y_variance(v)).abs() < TOL);
    }

    fn q4(re: f64, im: f64) -> Complex64 {
        Complex64::new(0.25 * re, 0.25 * im)
    }

    #[test]
    fn alice_z_projection_drops_coherence() {
        for &v in &[0.0, 0.5, 1.0] {
            let asm = assemblage_for(&partially_coherent_singlet(v).unwrap(), PauliAxis::Z);
            for e in asm.entries() {
                assert!((e.weight() - 0.5).abs() < TOL);
                assert!(e.matrix[(0, 1)].norm() < TOL);
                assert!(e.matrix[(1, 0)].norm() < TOL);
            }
            // Z⊗Z perfectly anticorrelated regardless of v.
            let bz = PauliSetting::bob(PauliAxis::Z);
            assert!(asm.joint_probability(Outcome::Plus, bz, Outcome::Plus).abs() < TOL);
            assert!(asm.joint_probability(Outcome::Minus, bz, Outcome::Minus).abs() < TOL);
        }
    }

    #[test]
    fn no_signaling() {
        for &v in &[0.0, 0.4, 0.97] {
            for &phi in &[0.0, 0.9, -1.4] {
                let s = partially_coherent_singlet(v).unwrap().apply_phase(phi);
                let reference = s.bob_reduced();
                for axis in PauliAxis::ALL {
                    let asm = assemblage_for(&s, axis);
                    assert!(mat_close2(&asm.bob_marginal(), &reference));
                    let total: f64 = asm.entries().iter().map(ConditionalState::weight).sum();
                    assert!((total - 1.0).abs() < TOL);
                }
            }
        }
    }

    #[test]
    fn outcome_probability_examples() {
        let asm = assemblage_for(&partially_coherent_singlet(0.97).unwrap(), PauliAxis::Y);
        let p = asm
            .outcome_probability(Outcome::Plus, PauliSetting::bob(PauliAxis::Y), Outcome::Plus)
            .unwrap();
        assert!((p - 0.015).abs() < TOL);

        let flat = partially_coherent_singlet(0.0).unwrap().apply_phase(0.3);
        for alice in [PauliAxis::X, PauliAxis::Y] {
            let asm = assemblage_for(&flat, alice);
            for a in Outcome::BOTH {
                for bob in [PauliAxis::X, PauliAxis::Y] {
                    for b in Outcome::BOTH {
                        let p = asm.outcome_probability(a, PauliSetting::bob(bob), b).unwrap();
                        assert!((p - 0.5).abs() < TOL);
                    }
                }
            }
        }
    }

    #[test]
    fn outcome_probability_degenerate_alice_outcome() {
        // Pure product state |H⟩|V⟩: Alice never sees V.
        let mut m = Matrix4c::zeros();
        m[(1, 1)] = ONE;
        let state = TwoQubitState { matrix: m, visibility: 0.0 };
        let asm = assemblage_for(&state, PauliAxis::Z);
        let err = asm.outcome_probability(Outcome::Minus, PauliSetting::bob(PauliAxis::Z), Outcome::Plus);
        assert!(matches!(err, Err(Error::Degenerate(_))));
    }

    #[test]
    fn offset_table_matches_born_rule() {
        for &v in &[0.0, 0.5, 0.97, 1.0] {
            for &phi in &[-3.0, -0.7, 0.0, FRAC_PI_4, 1.2, 2.9] {
                let state = partially_coherent_singlet(v).unwrap().apply_phase(phi);
                let asm = assemblage_for(&state, PauliAxis::X);
                let mut total = 0.0;
                for a in AliceZ::ALL {
                    let mut per_setting = [0.0; 2];
                    for b in BobXz::ALL {
                        let (axis, outcome) = b.setting();
                        let direct = asm
                            .outcome_probability(a.singlet_frame_outcome(), PauliSetting::bob(axis), outcome)
                            .unwrap();
                        assert!((setting_conditional(a, b, phi, v) - direct).abs() < TOL, "{a:?} {b:?}");
                        per_setting[(axis == PauliAxis::Z) as usize] += direct;
                        total += phase_joint(a, b, phi, v);
                    }
                    assert!(per_setting.iter().all(|p| (p - 1.0).abs() < TOL));
                }
                assert!((total - 1.0).abs() < TOL);
            }
        }
    }

    #[test]
    fn gradient_matches_difference() {
        let h = 1e-6;
        for a in AliceZ::ALL {
            for b in BobXz::ALL {
                let (phi, v) = (0.37, 0.8);
                let (dp, dv) = phase_conditional_gradient(a, b, phi, v);
                let fp = (phase_conditional(a, b, phi + h, v) - phase_conditional(a, b, phi - h, v)) / (2.0 * h);
                let fv = (phase_conditional(a, b, phi, v + h) - phase_conditional(a, b, phi, v - h)) / (2.0 * h);
                assert!((dp - fp).abs() < 1e-9 && (dv - fv).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn generator_table_matches_born_rule() {
        for &v in &[0.0, 0.6, 1.0] {
            let state = partially_coherent_singlet(v).unwrap().apply_phase(0.8);
            let asm = assemblage_for(&state, PauliAxis::Y);
            let table = generator_joint(v);
            for b in Circular::ALL {
                for a in Circular::ALL {
                    let direct = asm.joint_probability(a.outcome(), PauliSetting::bob(PauliAxis::Y), b.outcome());
                    assert!((table[b.index()][a.index()] - direct).abs() < TOL);
                }
            }
        }
    }

    #[test]
    fn lab_frame_state() {
        let lab = experimental_frame(&partially_coherent_singlet(1.0).unwrap());
        // (|HD⟩ + |VA⟩)/√2 in the computational basis is ½(1, 1, 1, -1).
        let psi = nalgebra::Vector4::new(ONE, ONE, ONE, -ONE) * Complex64::new(0.5, 0.0);
        assert!(mat_close4(lab.matrix(), &(psi * psi.adjoint())));

        // Lab Z on Alice equals singlet-frame X with the H/V relabelling.
        for &v in &[0.3, 0.97] {
            let s = partially_coherent_singlet(v).unwrap().apply_phase(0.5);
            let lab = experimental_frame(&s);
            let lab_asm = assemblage_for(&lab, PauliAxis::Z);
            let singlet_asm = assemblage_for(&s, PauliAxis::X);
            assert!(mat_close2(
                &lab_asm.entry(Outcome::Plus).matrix,
                &singlet_asm.entry(AliceZ::H.singlet_frame_outcome()).matrix
            ));
            assert!(mat_close2(
                &lab_asm.entry(Outcome::Minus).matrix,
                &singlet_asm.entry(AliceZ::V.singlet_frame_outcome()).matrix
            ));
        }
    }
}
