//! Eavesdropping strategies on Bob's photon.
//!
//! Two intercept-resend strategies are modeled. `Filter` is a strong
//! polarizer oriented along χ: photons that fail the projection are absorbed
//! and never produce a coincidence. `Dephase` reads the photon in the
//! (χ, χ⊥) basis without absorbing it, which is observationally the same as
//! randomizing the relative phase between the two basis components.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{ConfigError, PipelineError, StateError};
use crate::postprocess::{ber, ber_sigma, estimate_bell};
use crate::protocol::{outcome_to_bit, run_session, sift, SessionConfig, SessionData, TrialBudget};
use crate::qstate::{
    coincidence_probs, filter_channel, poincare_state, predicted_observables, CoincidenceProbs,
    JointState, Party, Plane, PoincarePoint, ALICE_ANGLES, BOB_ANGLES,
};
use crate::rng::Streams;
use crate::source::{sample_from_probs, Outcome, SourceParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttackMode {
    None,
    Filter,
    Dephase,
}

impl AttackMode {
    pub fn label(&self) -> &'static str {
        match self {
            AttackMode::None => "none",
            AttackMode::Filter => "filter",
            AttackMode::Dephase => "dephase",
        }
    }
}

impl std::str::FromStr for AttackMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(AttackMode::None),
            "filter" => Ok(AttackMode::Filter),
            "dephase" | "qnd" => Ok(AttackMode::Dephase),
            other => Err(format!("unknown attack mode `{other}` (expected none, filter or dephase)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackSpec {
    pub mode: AttackMode,
    pub basis: PoincarePoint,
    /// Fraction of pairs Eve intercepts.
    pub fraction: f64,
}

impl AttackSpec {
    pub fn none() -> Self {
        AttackSpec {
            mode: AttackMode::None,
            basis: PoincarePoint::new(Plane::A, 0.0),
            fraction: 1.0,
        }
    }

    pub fn filter(basis: PoincarePoint) -> Self {
        AttackSpec {
            mode: AttackMode::Filter,
            basis,
            fraction: 1.0,
        }
    }

    pub fn dephase(basis: PoincarePoint) -> Self {
        AttackSpec {
            mode: AttackMode::Dephase,
            basis,
            fraction: 1.0,
        }
    }

    pub fn with_fraction(self, fraction: f64) -> Self {
        AttackSpec { fraction, ..self }
    }

    pub fn validate(&self) -> Result<(), StateError> {
        if self.mode == AttackMode::None {
            return Ok(());
        }
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(StateError::FractionOutOfRange {
                name: "attack.fraction",
                value: self.fraction,
            });
        }
        if !self.basis.angle.is_finite() {
            return Err(StateError::NotNormalized(f64::NAN));
        }
        Ok(())
    }

    /// Whether the attack is active for some pairs.
    pub fn is_active(&self) -> bool {
        self.mode != AttackMode::None && self.fraction > 0.0
    }
}

/// Result of one interception.
#[derive(Debug, Clone, PartialEq)]
pub struct Interception {
    pub post_state: JointState,
    /// Which of Eve's projectors fired; absent when she let the pair pass.
    pub eve_outcome: Option<Outcome>,
    /// The filter absorbed Bob's photon; no coincidence will occur.
    pub lost: bool,
}

fn setting_table(state: &JointState) -> [CoincidenceProbs; 16] {
    std::array::from_fn(|k| coincidence_probs(state, ALICE_ANGLES[k / 4], BOB_ANGLES[k % 4]))
}

fn table_index(a: u8, b: u8) -> usize {
    usize::from(a - 1) * 4 + usize::from(b - 1)
}

#[derive(Debug, Clone)]
struct Branch {
    eve: Outcome,
    weight: f64,
    state: JointState,
    probs: [CoincidenceProbs; 16],
}

/// An attack compiled against a fixed incoming state.
///
/// Eve's possible results (and the state each leaves behind) are computed once
/// so that per-pair sampling is a table lookup.
#[derive(Debug, Clone)]
pub struct Interceptor {
    spec: AttackSpec,
    clean: JointState,
    clean_probs: [CoincidenceProbs; 16],
    branches: Vec<Branch>,
}

impl Interceptor {
    pub fn new(state: &JointState, spec: &AttackSpec) -> Result<Self, StateError> {
        spec.validate()?;
        let chi = poincare_state(spec.basis);
        let candidates: Vec<(Outcome, _)> = match spec.mode {
            AttackMode::None => vec![],
            AttackMode::Filter => vec![(Outcome::Plus, chi)],
            AttackMode::Dephase => vec![(Outcome::Plus, chi), (Outcome::Minus, chi.orthogonal())],
        };
        let mut branches = Vec::new();
        for (eve, basis) in candidates {
            match filter_channel(state, &basis) {
                Ok((post, weight)) => branches.push(Branch {
                    eve,
                    weight,
                    probs: setting_table(&post),
                    state: post,
                }),
                Err(StateError::FilterBlocked(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(Interceptor {
            spec: *spec,
            clean: state.clone(),
            clean_probs: setting_table(state),
            branches,
        })
    }

    pub fn spec(&self) -> &AttackSpec {
        &self.spec
    }

    fn choose<R: Rng + ?Sized>(&self, eve_rng: &mut R) -> Choice {
        if !self.spec.is_active() || eve_rng.random::<f64>() >= self.spec.fraction {
            return Choice::Clean;
        }
        let u = eve_rng.random::<f64>();
        let mut acc = 0.0;
        for (i, b) in self.branches.iter().enumerate() {
            acc += b.weight;
            if u < acc {
                return Choice::Branch(i);
            }
        }
        match self.spec.mode {
            // rounding slack on a trace-preserving measurement
            AttackMode::Dephase if !self.branches.is_empty() => Choice::Branch(self.branches.len() - 1),
            _ => Choice::Lost,
        }
    }

    pub fn intercept<R: Rng + ?Sized>(&self, eve_rng: &mut R) -> Interception {
        match self.choose(eve_rng) {
            Choice::Clean => Interception {
                post_state: self.clean.clone(),
                eve_outcome: None,
                lost: false,
            },
            Choice::Branch(i) => Interception {
                post_state: self.branches[i].state.clone(),
                eve_outcome: Some(self.branches[i].eve),
                lost: false,
            },
            Choice::Lost => Interception {
                post_state: self.clean.clone(),
                eve_outcome: None,
                lost: true,
            },
        }
    }

    /// One pair through Eve and the analyzers `(α_a, β_b)`. `None` means the
    /// filter absorbed Bob's photon.
    pub fn sample_pair<R: Rng + ?Sized, E: Rng + ?Sized>(
        &self,
        a: u8,
        b: u8,
        source_rng: &mut R,
        eve_rng: &mut E,
    ) -> Option<(Outcome, Outcome, Option<Outcome>)> {
        let k = table_index(a, b);
        match self.choose(eve_rng) {
            Choice::Clean => {
                let (ao, bo) = sample_from_probs(&self.clean_probs[k], source_rng);
                Some((ao, bo, None))
            }
            Choice::Branch(i) => {
                let br = &self.branches[i];
                let (ao, bo) = sample_from_probs(&br.probs[k], source_rng);
                Some((ao, bo, Some(br.eve)))
            }
            Choice::Lost => None,
        }
    }

    /// Eve's guess of Bob's key bit once β is announced: she replays Bob's
    /// measurement on her resent eigenstate, drawing his detector from its
    /// Born distribution, and maps it through Bob's relabeling.
    pub fn guess_bob_bit<R: Rng + ?Sized>(
        &self,
        eve_outcome: Outcome,
        bob_index: u8,
        eve_rng: &mut R,
    ) -> Result<bool, StateError> {
        let branch = self
            .branches
            .iter()
            .find(|b| b.eve == eve_outcome)
            .ok_or(StateError::FilterBlocked(0.0))?;
        let p = &branch.probs[table_index(1, bob_index)];
        let bob_plus = (p.p_12 + p.p_1p2) / p.sum();
        let detector = if eve_rng.random::<f64>() < bob_plus {
            Outcome::Plus
        } else {
            Outcome::Minus
        };
        outcome_to_bit(Party::Bob, bob_index, detector)
    }
}

#[derive(Debug, Clone, Copy)]
enum Choice {
    Clean,
    Branch(usize),
    Lost,
}

/// One interception of `state` according to `spec`.
pub fn intercept<R: Rng + ?Sized>(
    state: &JointState,
    spec: &AttackSpec,
    rng: &mut R,
) -> Result<Interception, StateError> {
    Ok(Interceptor::new(state, spec)?.intercept(rng))
}

/// Fraction of sifted key bits Eve knows: bits where her guess matches Bob,
/// plus every bit flagged as coming from a double pair.
pub fn eve_information(data: &SessionData) -> f64 {
    let mut n = 0usize;
    let mut known = 0usize;
    for t in data.trials.iter().filter(|t| t.bob_bit.is_some()) {
        n += 1;
        if t.double_pair || (t.eve_guess.is_some() && t.eve_guess == t.bob_bit) {
            known += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        known as f64 / n as f64
    }
}

/// `n` evenly spaced angles covering one period of `plane`.
pub fn uniform_grid(plane: Plane, n: usize) -> Vec<f64> {
    let step = plane.period() / n as f64;
    (0..n).map(|k| k as f64 * step).collect()
}

/// Default 15° grid over one period of `plane`.
pub fn default_grid(plane: Plane) -> Vec<f64> {
    uniform_grid(plane, (plane.period() / 15.0).round() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaneAverage {
    pub avg_abs_s: f64,
    pub avg_ber: f64,
}

/// Analytic averages of |S| and key BER over an arbitrary set of full
/// interceptions at visibility 1.
pub fn point_set_average(points: &[PoincarePoint], mode: AttackMode) -> Result<PlaneAverage, StateError> {
    if points.is_empty() {
        return Err(StateError::EmptyCorrelation);
    }
    let mut s = 0.0;
    let mut b = 0.0;
    for p in points {
        let spec = AttackSpec {
            mode,
            basis: *p,
            fraction: 1.0,
        };
        let o = predicted_observables(&spec, 1.0)?;
        s += o.s.abs();
        b += o.ber_avg;
    }
    let n = points.len() as f64;
    Ok(PlaneAverage {
        avg_abs_s: s / n,
        avg_ber: b / n,
    })
}

/// Uniform-grid average over one period of `plane` with `n_angles` points.
pub fn plane_average(plane: Plane, mode: AttackMode, n_angles: usize) -> Result<PlaneAverage, StateError> {
    if n_angles < 2 {
        return Err(StateError::EmptyCorrelation);
    }
    let points: Vec<_> = uniform_grid(plane, n_angles)
        .into_iter()
        .map(|a| PoincarePoint::new(plane, a))
        .collect();
    point_set_average(&points, mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub plane: Plane,
    pub angles: Vec<f64>,
    pub mode: AttackMode,
    pub fraction: f64,
    /// Collection windows simulated per angle.
    pub trials_per_point: u64,
    pub visibility: f64,
    pub source: SourceParams,
    pub seed: u64,
}

impl SweepConfig {
    pub fn new(plane: Plane, angles: Vec<f64>, mode: AttackMode) -> Self {
        SweepConfig {
            plane,
            angles,
            mode,
            fraction: 1.0,
            trials_per_point: 20_000,
            visibility: 1.0,
            source: SourceParams::default(),
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub angle: f64,
    pub s_analytic: f64,
    pub s_mc: f64,
    pub s_mc_sigma: f64,
    pub s_prime_analytic: f64,
    pub s_prime_mc: f64,
    pub s_prime_mc_sigma: f64,
    pub ber_analytic: f64,
    pub ber_mc: f64,
    pub ber_mc_sigma: f64,
    pub eve_info: f64,
}

fn sweep_point(cfg: &SweepConfig, index: usize, angle: f64) -> Result<SweepRow, PipelineError> {
    let attack = AttackSpec {
        mode: cfg.mode,
        basis: PoincarePoint::new(cfg.plane, angle),
        fraction: cfg.fraction,
    };
    let theory = predicted_observables(&attack, cfg.visibility)?;
    let session = SessionConfig {
        seed: Streams::new(cfg.seed).derive_seed(&format!("sweep-point-{index}")),
        budget: TrialBudget::Windows(cfg.trials_per_point),
        visibility: cfg.visibility,
        source: cfg.source.clone(),
        attack,
    };
    let data = run_session(&session)?;
    let sifted = sift(&data);
    let bell = estimate_bell(&sifted.bell_s, &sifted.bell_s_prime)?;
    let ber_mc = ber(&sifted.alice_key, &sifted.bob_key)?;
    Ok(SweepRow {
        angle,
        s_analytic: theory.s,
        s_mc: bell.s,
        s_mc_sigma: bell.s_sigma,
        s_prime_analytic: theory.s_prime,
        s_prime_mc: bell.s_prime,
        s_prime_mc_sigma: bell.s_prime_sigma,
        ber_analytic: theory.ber_avg,
        ber_mc,
        ber_mc_sigma: ber_sigma(ber_mc, sifted.alice_key.len()),
        eve_info: eve_information(&data),
    })
}

/// Analytic and Monte-Carlo observables for each attack angle.
///
/// Points run in parallel, each with its own seed derived from the sweep
/// seed and the point's position, and come back in input order.
pub fn sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>, PipelineError> {
    if cfg.angles.is_empty() {
        return Err(ConfigError::Invalid("attack sweep needs at least one angle".into()).into());
    }
    if cfg.trials_per_point == 0 {
        return Err(ConfigError::Invalid("attack sweep needs trials_per_point > 0".into()).into());
    }
    cfg.angles
        .par_iter()
        .enumerate()
        .map(|(i, &a)| sweep_point(cfg, i, a))
        .collect()
}
