//! Two-photon polarization states, analyzers and eavesdropping channels.
//!
//! Everything here is exact linear algebra on 4×4 density matrices. The
//! two-photon basis is ordered `(HH, HV, VH, VV)`: the first label is
//! Alice's photon, the second is Bob's, so index = 2·alice + bob with
//! H = 0 and V = 1. All public angles are in degrees.
//!
//! Attack channels always act on Bob's (second) photon.

use nalgebra::{Complex, Matrix2, Matrix4, Vector2};

use crate::eavesdrop::{AttackMode, AttackSpec};
use crate::error::StateError;

pub type C64 = Complex<f64>;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

/// Normalization tolerance for pure qubits, Hermiticity and trace.
pub const STATE_TOL: f64 = 1e-12;
/// Smallest admissible eigenvalue of a density matrix.
pub const POSITIVITY_TOL: f64 = -1e-10;

/// Alice's analyzer phases α₁..α₄ in degrees.
pub const ALICE_ANGLES: [f64; 4] = [45.0, 90.0, 135.0, 180.0];
/// Bob's analyzer phases β₁..β₄ in degrees.
pub const BOB_ANGLES: [f64; 4] = [0.0, 45.0, 90.0, 135.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    Alice,
    Bob,
}

/// A normalized single-photon polarization state `amp_h |H⟩ + amp_v |V⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PureQubit {
    amp_h: C64,
    amp_v: C64,
}

impl PureQubit {
    pub fn h() -> Self {
        PureQubit {
            amp_h: C64::new(1.0, 0.0),
            amp_v: C64::new(0.0, 0.0),
        }
    }

    pub fn v() -> Self {
        PureQubit {
            amp_h: C64::new(0.0, 0.0),
            amp_v: C64::new(1.0, 0.0),
        }
    }

    /// Accepts amplitudes that are already normalized within [`STATE_TOL`].
    pub fn from_amplitudes(amp_h: C64, amp_v: C64) -> Result<Self, StateError> {
        let norm = amp_h.norm_sqr() + amp_v.norm_sqr();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(StateError::NotNormalized(norm));
        }
        Ok(PureQubit { amp_h, amp_v })
    }

    /// Rescales arbitrary (nonzero) amplitudes onto the unit sphere.
    pub fn normalized(amp_h: C64, amp_v: C64) -> Result<Self, StateError> {
        let norm = (amp_h.norm_sqr() + amp_v.norm_sqr()).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(StateError::NotNormalized(norm * norm));
        }
        Ok(PureQubit {
            amp_h: amp_h / norm,
            amp_v: amp_v / norm,
        })
    }

    pub fn amp_h(&self) -> C64 {
        self.amp_h
    }

    pub fn amp_v(&self) -> C64 {
        self.amp_v
    }

    /// The orthogonal state, `-v* |H⟩ + h* |V⟩`.
    pub fn orthogonal(&self) -> Self {
        PureQubit {
            amp_h: -self.amp_v.conj(),
            amp_v: self.amp_h.conj(),
        }
    }

    pub fn ket(&self) -> Vector2<C64> {
        Vector2::new(self.amp_h, self.amp_v)
    }

    pub fn projector(&self) -> Mat2 {
        let k = self.ket();
        k * k.adjoint()
    }

    pub fn overlap(&self, other: &PureQubit) -> C64 {
        self.amp_h.conj() * other.amp_h + self.amp_v.conj() * other.amp_v
    }

    /// Normalized Stokes vector `(s1, s2, s3)`: H/V, ±45°, and circular components.
    pub fn stokes(&self) -> [f64; 3] {
        let hv = self.amp_h.conj() * self.amp_v;
        [
            self.amp_h.norm_sqr() - self.amp_v.norm_sqr(),
            2.0 * hv.re,
            2.0 * hv.im,
        ]
    }
}

/// Density matrix of a polarization photon pair.
#[derive(Debug, Clone, PartialEq)]
pub struct JointState {
    rho: Mat4,
}

impl JointState {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn from_matrix(rho: Mat4) -> Result<Self, StateError> {
        let s = JointState { rho };
        s.validate()?;
        Ok(s)
    }

    pub(crate) fn from_matrix_unchecked(rho: Mat4) -> Self {
        JointState { rho }
    }

    /// `|ψ⟩⟨ψ|` for a (normalized) two-photon vector in `(HH, HV, VH, VV)` order.
    pub fn from_pure(amps: [C64; 4]) -> Result<Self, StateError> {
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > STATE_TOL {
            return Err(StateError::NotNormalized(norm));
        }
        let k = nalgebra::Vector4::from(amps);
        Ok(JointState { rho: k * k.adjoint() })
    }

    pub fn product(alice: &PureQubit, bob: &PureQubit) -> Self {
        JointState {
            rho: kron(&alice.projector(), &bob.projector()),
        }
    }

    pub fn maximally_mixed() -> Self {
        JointState {
            rho: Mat4::identity() * C64::new(0.25, 0.0),
        }
    }

    pub fn rho(&self) -> &Mat4 {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn eigenvalues(&self) -> [f64; 4] {
        let ev = self.rho.symmetric_eigenvalues();
        [ev[0], ev[1], ev[2], ev[3]]
    }

    pub fn validate(&self) -> Result<(), StateError> {
        let dev = (self.rho - self.rho.adjoint())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if dev > STATE_TOL {
            return Err(StateError::NotHermitian(dev));
        }
        let tr = self.rho.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(StateError::BadTrace(tr.re));
        }
        let min = self.eigenvalues().into_iter().fold(f64::INFINITY, f64::min);
        if min < POSITIVITY_TOL {
            return Err(StateError::NotPositive(min));
        }
        Ok(())
    }

    /// Applies `I ⊗ op` on both sides: `(I⊗op) ρ (I⊗op)†`.
    fn sandwich_bob(&self, op: &Mat2) -> Mat4 {
        let k = kron(&Mat2::identity(), op);
        k * self.rho * k.adjoint()
    }
}

/// Kronecker product `a ⊗ b` (a acts on Alice, b on Bob).
pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|r, c| a[(r / 2, c / 2)] * b[(r % 2, c % 2)])
}

/// `(|H₁H₂⟩ + |V₁V₂⟩)/√2`.
pub fn phi_plus() -> JointState {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let z = C64::new(0.0, 0.0);
    JointState::from_pure([C64::new(s, 0.0), z, z, C64::new(s, 0.0)])
        .expect("phi+ is normalized")
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerPhase {
    party: Party,
    index: u8,
}

impl AnalyzerPhase {
    pub fn new(party: Party, index: u8) -> Result<Self, StateError> {
        if !(1..=4).contains(&index) {
            return Err(StateError::BadSettingIndex(index));
        }
        Ok(AnalyzerPhase { party, index })
    }

    pub fn party(&self) -> Party {
        self.party
    }

    pub fn index(&self) -> u8 {
        self.index
    }

    pub fn angle(&self) -> f64 {
        let i = usize::from(self.index - 1);
        match self.party {
            Party::Alice => ALICE_ANGLES[i],
            Party::Bob => BOB_ANGLES[i],
        }
    }
}

/// Analyzer eigenstate `(|H⟩ ± e^{iφ}|V⟩)/√2`.
fn analyzer_state(phase_deg: f64, plus: bool) -> PureQubit {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sign = if plus { 1.0 } else { -1.0 };
    PureQubit {
        amp_h: C64::new(s, 0.0),
        amp_v: C64::from_polar(sign * s, phase_deg.to_radians()),
    }
}

/// Projectors onto the analyzer's "+" output (detector 1 or 2) and its
/// orthogonal "−" output (detector 1′ or 2′).
pub fn analyzer_projectors(phase_deg: f64) -> (Mat2, Mat2) {
    (
        analyzer_state(phase_deg, true).projector(),
        analyzer_state(phase_deg, false).projector(),
    )
}

/// Joint detection probabilities for one (α, β) setting.
///
/// `p_12` is Alice "+" with Bob "+", `p_12p` Alice "+" with Bob "−", and so on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceProbs {
    pub p_12: f64,
    pub p_12p: f64,
    pub p_1p2: f64,
    pub p_1p2p: f64,
}

impl CoincidenceProbs {
    pub fn sum(&self) -> f64 {
        self.p_12 + self.p_12p + self.p_1p2 + self.p_1p2p
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.p_12, self.p_12p, self.p_1p2, self.p_1p2p]
    }

    pub fn scaled(&self, w: f64) -> Self {
        CoincidenceProbs {
            p_12: self.p_12 * w,
            p_12p: self.p_12p * w,
            p_1p2: self.p_1p2 * w,
            p_1p2p: self.p_1p2p * w,
        }
    }

    /// Probability that the anticorrelated key settings produce unequal bits,
    /// conditioned on a coincidence.
    pub fn key_error(&self) -> f64 {
        (self.p_12 + self.p_1p2p) / self.sum()
    }
}

pub fn coincidence_probs(state: &JointState, alpha_deg: f64, beta_deg: f64) -> CoincidenceProbs {
    let (a_plus, a_minus) = analyzer_projectors(alpha_deg);
    let (b_plus, b_minus) = analyzer_projectors(beta_deg);
    let p = |a: &Mat2, b: &Mat2| (kron(a, b) * state.rho()).trace().re;
    CoincidenceProbs {
        p_12: p(&a_plus, &b_plus),
        p_12p: p(&a_plus, &b_minus),
        p_1p2: p(&a_minus, &b_plus),
        p_1p2p: p(&a_minus, &b_minus),
    }
}

/// Correlation `E = (P₁₂ + P₁′₂′ − P₁₂′ − P₁′₂) / ΣP`.
pub fn correlation_e(probs: &CoincidenceProbs) -> Result<f64, StateError> {
    let total = probs.sum();
    if !(total > 0.0) {
        return Err(StateError::EmptyCorrelation);
    }
    Ok((probs.p_12 + probs.p_1p2p - probs.p_12p - probs.p_1p2) / total)
}

/// Setting combinations entering S, as (alice index, bob index, sign).
pub const S_TERMS: [(u8, u8, f64); 4] = [(1, 1, -1.0), (1, 3, 1.0), (3, 1, 1.0), (3, 3, 1.0)];
/// Setting combinations entering S′.
pub const S_PRIME_TERMS: [(u8, u8, f64); 4] = [(2, 2, 1.0), (2, 4, 1.0), (4, 2, 1.0), (4, 4, -1.0)];

fn bell_combination(state: &JointState, terms: &[(u8, u8, f64); 4]) -> f64 {
    terms
        .iter()
        .map(|&(a, b, sign)| {
            let probs = coincidence_probs(
                state,
                ALICE_ANGLES[usize::from(a - 1)],
                BOB_ANGLES[usize::from(b - 1)],
            );
            // A valid state always has unit-sum analyzer probabilities.
            sign * correlation_e(&probs).unwrap_or(0.0)
        })
        .sum()
}

pub fn bell_s(state: &JointState) -> f64 {
    bell_combination(state, &S_TERMS)
}

pub fn bell_s_prime(state: &JointState) -> f64 {
    bell_combination(state, &S_PRIME_TERMS)
}

/// The three mutually orthogonal great circles of the Poincaré sphere used
/// for attack bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Plane {
    /// `(|H⟩ + e^{iφ}|V⟩)/√2`, the plane holding every analyzer setting.
    A,
    /// `cos θ |H⟩ + sin θ |V⟩`, linear polarizations.
    B,
    /// `(|+45°⟩ + e^{iψ}|−45°⟩)/√2`.
    C,
}

impl Plane {
    pub const ALL: [Plane; 3] = [Plane::A, Plane::B, Plane::C];

    /// Angle period after which the plane's states repeat (up to global phase).
    pub fn period(&self) -> f64 {
        match self {
            Plane::A | Plane::C => 360.0,
            Plane::B => 180.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Plane::A => "A",
            Plane::B => "B",
            Plane::C => "C",
        }
    }
}

impl std::str::FromStr for Plane {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "A" | "a" => Ok(Plane::A),
            "B" | "b" => Ok(Plane::B),
            "C" | "c" => Ok(Plane::C),
            other => Err(format!("unknown plane `{other}` (expected A, B or C)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoincarePoint {
    pub plane: Plane,
    /// φ, θ or ψ in degrees, depending on the plane.
    pub angle: f64,
}

impl PoincarePoint {
    pub fn new(plane: Plane, angle: f64) -> Self {
        PoincarePoint { plane, angle }
    }
}

pub fn poincare_state(point: PoincarePoint) -> PureQubit {
    let a = point.angle.to_radians();
    match point.plane {
        Plane::A => analyzer_state(point.angle, true),
        Plane::B => PureQubit {
            amp_h: C64::new(a.cos(), 0.0),
            amp_v: C64::new(a.sin(), 0.0),
        },
        Plane::C => {
            let e = C64::from_polar(1.0, a);
            let one = C64::new(1.0, 0.0);
            PureQubit {
                amp_h: (one + e) * 0.5,
                amp_v: (one - e) * 0.5,
            }
        }
    }
}

/// Strong polarizer on Bob's photon: keeps only the `chi` component.
///
/// Returns the renormalized surviving state and the probability that the
/// photon passed.
pub fn filter_channel(state: &JointState, chi: &PureQubit) -> Result<(JointState, f64), StateError> {
    let out = state.sandwich_bob(&chi.projector());
    let pass = out.trace().re;
    if !(pass > 1e-15) {
        return Err(StateError::FilterBlocked(pass));
    }
    let rho = out / C64::new(pass, 0.0);
    Ok((JointState::from_matrix_unchecked(rho), pass))
}

/// Phase-averaged QND-style measurement of Bob's photon in the `(chi, chi⊥)`
/// basis: `P ρ P + P⊥ ρ P⊥`.
pub fn dephase_channel(state: &JointState, chi: &PureQubit) -> JointState {
    let rho = state.sandwich_bob(&chi.projector())
        + state.sandwich_bob(&chi.orthogonal().projector());
    JointState::from_matrix_unchecked(rho)
}

fn check_fraction(name: &'static str, value: f64) -> Result<(), StateError> {
    if !(0.0..=1.0).contains(&value) {
        return Err(StateError::FractionOutOfRange { name, value });
    }
    Ok(())
}

/// `f·attacked + (1−f)·clean`, for trace-preserving attacks.
pub fn blend(attacked: &JointState, clean: &JointState, f: f64) -> Result<JointState, StateError> {
    check_fraction("f", f)?;
    let rho = attacked.rho() * C64::new(f, 0.0) + clean.rho() * C64::new(1.0 - f, 0.0);
    Ok(JointState::from_matrix_unchecked(rho))
}

/// Blend for a lossy attack: of the intercepted fraction `f` only `pass_prob`
/// survive, so the coincidence-conditioned state weights the attacked branch by
/// `f·pass_prob` against `1−f`. Also returns the coincidence survival
/// probability `f·pass_prob + 1 − f`.
pub fn blend_lossy(
    attacked: &JointState,
    pass_prob: f64,
    clean: &JointState,
    f: f64,
) -> Result<(JointState, f64), StateError> {
    check_fraction("f", f)?;
    check_fraction("pass_prob", pass_prob)?;
    let wa = f * pass_prob;
    let wc = 1.0 - f;
    let total = wa + wc;
    if !(total > 0.0) {
        return Err(StateError::FilterBlocked(pass_prob));
    }
    let state = blend(attacked, clean, wa / total)?;
    Ok((state, total))
}

/// White-noise admixture `V·state + (1−V)·I/4`.
pub fn visibility_mix(state: &JointState, visibility: f64) -> Result<JointState, StateError> {
    check_fraction("visibility", visibility)?;
    blend(state, &JointState::maximally_mixed(), visibility)
}

/// Closed-form protocol observables of a (coincidence-conditioned) state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub s: f64,
    pub s_prime: f64,
    /// Mean of `ber_per_setting`.
    pub ber_avg: f64,
    /// Key-setting error probabilities ordered by Bob's index:
    /// (α₄,β₁), (α₃,β₂), (α₂,β₃), (α₁,β₄).
    pub ber_per_setting: [f64; 4],
}

pub fn observables(state: &JointState) -> Observables {
    let mut ber_per_setting = [0.0; 4];
    for (j, slot) in ber_per_setting.iter_mut().enumerate() {
        let alpha = ALICE_ANGLES[3 - j];
        let beta = BOB_ANGLES[j];
        *slot = coincidence_probs(state, alpha, beta).key_error();
    }
    Observables {
        s: bell_s(state),
        s_prime: bell_s_prime(state),
        ber_avg: ber_per_setting.iter().sum::<f64>() / 4.0,
        ber_per_setting,
    }
}

/// The coincidence-conditioned state Alice and Bob see under `attack`,
/// starting from φ⁺ degraded to visibility `visibility`.
pub fn attacked_state(attack: &AttackSpec, visibility: f64) -> Result<JointState, StateError> {
    let clean = visibility_mix(&phi_plus(), visibility)?;
    let chi = poincare_state(attack.basis);
    match attack.mode {
        AttackMode::None => Ok(clean),
        AttackMode::Dephase => blend(&dephase_channel(&clean, &chi), &clean, attack.fraction),
        AttackMode::Filter => {
            let (filtered, pass) = filter_channel(&clean, &chi)?;
            Ok(blend_lossy(&filtered, pass, &clean, attack.fraction)?.0)
        }
    }
}

pub fn predicted_observables(attack: &AttackSpec, visibility: f64) -> Result<Observables, StateError> {
    Ok(observables(&attacked_state(attack, visibility)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

    /// Independent route to the coincidence probabilities of φ⁺: project the
    /// state vector directly with scalar complex arithmetic.
    fn phi_plus_amplitude_oracle(alpha: f64, beta: f64, a_plus: bool, b_plus: bool) -> f64 {
        let ket = |phase: f64, plus: bool| {
            let sgn = if plus { 1.0 } else { -1.0 };
            (C64::new(FRAC_1_SQRT_2, 0.0), C64::from_polar(sgn * FRAC_1_SQRT_2, phase.to_radians()))
        };
        let (ah, av) = ket(alpha, a_plus);
        let (bh, bv) = ket(beta, b_plus);
        let amp = (ah.conj() * bh.conj() + av.conj() * bv.conj()) * FRAC_1_SQRT_2;
        amp.norm_sqr()
    }

    #[test]
    fn phi_plus_entries() {
        let rho = phi_plus();
        let r = rho.rho();
        assert!((r[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((r[(0, 3)].re - 0.5).abs() < 1e-15);
        assert!((r[(3, 3)].re - 0.5).abs() < 1e-15);
        assert!(r[(1, 1)].norm() < 1e-15);
        assert!((rho.trace() - 1.0).abs() < 1e-15);
        rho.validate().unwrap();
        let mut ev = rho.eigenvalues();
        ev.sort_by(f64::total_cmp);
        assert!((ev[3] - 1.0).abs() < 1e-12 && ev[..3].iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn analyzer_projector_examples() {
        let (p, m) = analyzer_projectors(0.0);
        let plus45 = PureQubit::normalized(C64::new(1.0, 0.0), C64::new(1.0, 0.0)).unwrap();
        assert!((p - plus45.projector()).norm() < 1e-15);
        let (p90, _) = analyzer_projectors(90.0);
        let right = PureQubit::normalized(C64::new(1.0, 0.0), C64::new(0.0, 1.0)).unwrap();
        assert!((p90 - right.projector()).norm() < 1e-15);
        for phase in [0.0, 17.0, 45.0, 133.3, 270.0] {
            let (p, m2) = analyzer_projectors(phase);
            assert!((p * m2).norm() < 1e-15);
            assert!((p + m2 - Mat2::identity()).norm() < 1e-15);
        }
        assert!((p + m - Mat2::identity()).norm() < 1e-15);
    }

    #[test]
    fn coincidence_examples() {
        let c = coincidence_probs(&phi_plus(), 45.0, 135.0);
        assert!(c.p_12.abs() < 1e-15 && c.p_1p2p.abs() < 1e-15);
        assert!((c.p_12p - 0.5).abs() < 1e-15 && (c.p_1p2 - 0.5).abs() < 1e-15);

        let c = coincidence_probs(&phi_plus(), 45.0, 0.0);
        let want_12 = phi_plus_amplitude_oracle(45.0, 0.0, true, true);
        let want_12p = phi_plus_amplitude_oracle(45.0, 0.0, true, false);
        assert!((want_12 - 0.426_776_695_296_636_9).abs() < 1e-15);
        assert!((c.p_12 - want_12).abs() < 1e-15);
        assert!((c.p_12p - want_12p).abs() < 1e-15);
        assert!((c.p_12p - 0.073_223_304_703_363_1).abs() < 1e-15);

        let c = coincidence_probs(&JointState::maximally_mixed(), 33.0, 101.0);
        for p in c.as_array() {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_agreement_with_direct_projection() {
        let rho = phi_plus();
        for a in (0..24).map(|k| 15.0 * k as f64) {
            for b in (0..24).map(|k| 15.0 * k as f64) {
                let c = coincidence_probs(&rho, a, b);
                let want = [
                    phi_plus_amplitude_oracle(a, b, true, true),
                    phi_plus_amplitude_oracle(a, b, true, false),
                    phi_plus_amplitude_oracle(a, b, false, true),
                    phi_plus_amplitude_oracle(a, b, false, false),
                ];
                for (got, want) in c.as_array().iter().zip(want) {
                    assert!((got - want).abs() < 1e-12, "({a},{b})");
                }
                assert!((c.sum() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn correlation_examples() {
        let e = correlation_e(&coincidence_probs(&phi_plus(), 45.0, 135.0)).unwrap();
        assert!((e + 1.0).abs() < 1e-15);
        let e = correlation_e(&coincidence_probs(&phi_plus(), 45.0, 0.0)).unwrap();
        assert!((e - FRAC_1_SQRT_2).abs() < 1e-15);
        let flat = CoincidenceProbs { p_12: 0.25, p_12p: 0.25, p_1p2: 0.25, p_1p2p: 0.25 };
        assert_eq!(correlation_e(&flat).unwrap(), 0.0);
        let empty = flat.scaled(0.0);
        assert_eq!(correlation_e(&empty), Err(StateError::EmptyCorrelation));
    }

    #[test]
    fn bell_values() {
        assert!((bell_s(&phi_plus()) + 2.0 * SQRT_2).abs() < 1e-12);
        assert!((bell_s_prime(&phi_plus()) + 2.0 * SQRT_2).abs() < 1e-12);
        let mixed = JointState::maximally_mixed();
        assert!(bell_s(&mixed).abs() < 1e-15 && bell_s_prime(&mixed).abs() < 1e-15);
        let chi = poincare_state(PoincarePoint::new(Plane::A, 37.0));
        assert!((bell_s(&dephase_channel(&phi_plus(), &chi)) + SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn poincare_examples() {
        let h = poincare_state(PoincarePoint::new(Plane::B, 0.0));
        assert!((h.amp_h() - C64::new(1.0, 0.0)).norm() < 1e-15 && h.amp_v().norm() < 1e-15);
        let d = poincare_state(PoincarePoint::new(Plane::A, 0.0));
        assert!((d.stokes()[1] - 1.0).abs() < 1e-15);
        // Stokes oracle: a circular state has |s3| = 1 and no linear part.
        let c = poincare_state(PoincarePoint::new(Plane::C, 90.0));
        let [s1, s2, s3] = c.stokes();
        assert!(s1.abs() < 1e-15 && s2.abs() < 1e-15 && (s3.abs() - 1.0).abs() < 1e-15);
        // and it is exactly (|45°⟩ + i|−45°⟩)/√2 expanded in H/V
        let want_h = C64::new(0.5, 0.5);
        let want_v = C64::new(0.5, -0.5);
        assert!((c.amp_h() - want_h).norm() < 1e-15 && (c.amp_v() - want_v).norm() < 1e-15);
    }

    #[test]
    fn poincare_planes_are_mutually_orthogonal_great_circles() {
        let axis = |p: Plane| -> [f64; 3] {
            // normal of the circle = cross product of two points 90° apart on the sphere
            let q = p.period() / 4.0;
            let u = poincare_state(PoincarePoint::new(p, 0.0)).stokes();
            let v = poincare_state(PoincarePoint::new(p, q)).stokes();
            [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]]
        };
        let (a, b, c) = (axis(Plane::A), axis(Plane::B), axis(Plane::C));
        let dot = |x: [f64; 3], y: [f64; 3]| x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
        assert!(dot(a, b).abs() < 1e-12 && dot(b, c).abs() < 1e-12 && dot(a, c).abs() < 1e-12);
        for t in [0.0, 30.0, 77.0] {
            for p in Plane::ALL {
                let q = poincare_state(PoincarePoint::new(p, t));
                let n = q.amp_h().norm_sqr() + q.amp_v().norm_sqr();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn filter_examples() {
        let (out, pass) = filter_channel(&phi_plus(), &PureQubit::h()).unwrap();
        assert!((pass - 0.5).abs() < 1e-15);
        let hh = JointState::product(&PureQubit::h(), &PureQubit::h());
        assert!((out.rho() - hh.rho()).norm() < 1e-15);
        for (a, b) in [(45.0, 0.0), (90.0, 135.0), (180.0, 45.0)] {
            let c = coincidence_probs(&out, a, b);
            for p in c.as_array() {
                assert!((p - 0.25).abs() < 1e-15);
            }
            assert!(correlation_e(&c).unwrap().abs() < 1e-15);
        }
        assert!(matches!(
            filter_channel(&hh, &PureQubit::v()),
            Err(StateError::FilterBlocked(_))
        ));
    }

    #[test]
    fn dephase_examples() {
        let chi = poincare_state(PoincarePoint::new(Plane::A, 0.0));
        let out = dephase_channel(&phi_plus(), &chi);
        out.validate().unwrap();
        let obs = observables(&out);
        assert!((obs.s + SQRT_2).abs() < 1e-12);
        assert!((obs.ber_avg - 0.25).abs() < 1e-12);

        // a state diagonal in the chi basis is a fixed point
        let diag = blend(
            &JointState::product(&PureQubit::h(), &chi),
            &JointState::product(&PureQubit::v(), &chi.orthogonal()),
            0.3,
        )
        .unwrap();
        assert!((dephase_channel(&diag, &chi).rho() - diag.rho()).norm() < 1e-15);
    }

    #[test]
    fn blend_and_visibility_examples() {
        let clean = phi_plus();
        let chi = poincare_state(PoincarePoint::new(Plane::A, 0.0));
        let attacked = dephase_channel(&clean, &chi);
        assert_eq!(blend(&attacked, &clean, 0.0).unwrap().rho(), clean.rho());
        assert!((blend(&attacked, &clean, 1.0).unwrap().rho() - attacked.rho()).norm() < 1e-15);
        let f = 2.0 - SQRT_2;
        let s = bell_s(&blend(&attacked, &clean, f).unwrap());
        assert!((s + 2.0).abs() < 1e-12);
        assert!(blend(&attacked, &clean, 1.5).is_err());
        assert!(blend(&attacked, &clean, -0.1).is_err());

        assert!((visibility_mix(&clean, 1.0).unwrap().rho() - clean.rho()).norm() < 1e-15);
        let mixed = visibility_mix(&clean, 0.0).unwrap();
        assert!((observables(&mixed).ber_avg - 0.5).abs() < 1e-15);
        let v = 0.9388;
        let obs = observables(&visibility_mix(&clean, v).unwrap());
        assert!((obs.ber_avg - (1.0 - v) / 2.0).abs() < 1e-12);
        assert!((obs.ber_avg - 0.0306).abs() < 1e-12);
        assert!((obs.s + 2.0 * SQRT_2 * v).abs() < 1e-12);
        assert!((obs.s + 2.665).abs() < 3.0 * 0.019);
        assert!(visibility_mix(&clean, 1.01).is_err());
    }

    #[test]
    fn predicted_observable_examples() {
        let none = predicted_observables(&AttackSpec::none(), 1.0).unwrap();
        assert!((none.s + 2.0 * SQRT_2).abs() < 1e-12 && (none.s_prime + 2.0 * SQRT_2).abs() < 1e-12);
        assert!(none.ber_avg.abs() < 1e-15);
        for phi in [0.0, 10.0, 123.0] {
            let o = predicted_observables(&AttackSpec::dephase(PoincarePoint::new(Plane::A, phi)), 1.0).unwrap();
            assert!((o.s + SQRT_2).abs() < 1e-12);
            assert!((o.ber_avg - 0.25).abs() < 1e-12);
        }
        let o = predicted_observables(&AttackSpec::filter(PoincarePoint::new(Plane::B, 0.0)), 1.0).unwrap();
        assert!(o.s.abs() < 1e-12 && o.s_prime.abs() < 1e-12);
        assert!((o.ber_avg - 0.5).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_plane_scaling() {
        // Bloch-vector oracle: only the in-measurement-plane Stokes component
        // of chi survives in the correlations.
        for k in 0..=36 {
            let theta = 5.0 * k as f64;
            let chi = poincare_state(PoincarePoint::new(Plane::B, theta));
            let s = bell_s(&dephase_channel(&phi_plus(), &chi));
            let want = -SQRT_2 * (2.0 * theta.to_radians()).sin().powi(2);
            assert!((s - want).abs() < 1e-12, "theta={theta}");
        }
    }

    #[test]
    fn analyzer_phase_mapping() {
        let a = AnalyzerPhase::new(Party::Alice, 4).unwrap();
        assert_eq!(a.angle(), 180.0);
        let b = AnalyzerPhase::new(Party::Bob, 1).unwrap();
        assert_eq!(b.angle(), 0.0);
        assert!(AnalyzerPhase::new(Party::Bob, 5).is_err());
        assert!(AnalyzerPhase::new(Party::Alice, 0).is_err());
    }

    #[test]
    fn qubit_validation() {
        assert!(PureQubit::from_amplitudes(C64::new(1.0, 0.0), C64::new(1.0, 0.0)).is_err());
        assert!(PureQubit::normalized(C64::new(0.0, 0.0), C64::new(0.0, 0.0)).is_err());
        let q = PureQubit::normalized(C64::new(0.3, 0.1), C64::new(-0.2, 0.7)).unwrap();
        assert!(q.overlap(&q.orthogonal()).norm() < 1e-15);
    }
}
