//! Alice/Bob session logic: setting choice, classification of setting pairs,
//! bit extraction and sifting.

use rand::Rng;

use crate::eavesdrop::{AttackSpec, Interceptor};
use crate::error::{ConfigError, StateError};
use crate::qstate::{phi_plus, visibility_mix, Party, ALICE_ANGLES, BOB_ANGLES};
use crate::rng::{self, Streams};
use crate::source::{simulate_window_with, Outcome, PairFate, SourceParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SettingClass {
    Key,
    BellS,
    BellSPrime,
    Discard,
}

impl SettingClass {
    pub fn label(&self) -> &'static str {
        match self {
            SettingClass::Key => "Key",
            SettingClass::BellS => "BellS",
            SettingClass::BellSPrime => "BellSPrime",
            SettingClass::Discard => "Discard",
        }
    }
}

impl std::str::FromStr for SettingClass {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Key" => Ok(SettingClass::Key),
            "BellS" => Ok(SettingClass::BellS),
            "BellSPrime" => Ok(SettingClass::BellSPrime),
            "Discard" => Ok(SettingClass::Discard),
            other => Err(format!("unknown class `{other}`")),
        }
    }
}

fn check_index(i: u8) -> Result<(), StateError> {
    if (1..=4).contains(&i) {
        Ok(())
    } else {
        Err(StateError::BadSettingIndex(i))
    }
}

/// Role of the setting pair (α_alice, β_bob).
///
/// Key pairs are the four with α + β = 180°. The S test uses α₁, α₃ with
/// β₁, β₃; the S′ test uses α₂, α₄ with β₂, β₄; the remaining four are unused.
pub fn classify(alice_index: u8, bob_index: u8) -> Result<SettingClass, StateError> {
    check_index(alice_index)?;
    check_index(bob_index)?;
    let class = if alice_index + bob_index == 5 {
        SettingClass::Key
    } else if alice_index % 2 == 1 && bob_index % 2 == 1 {
        SettingClass::BellS
    } else if alice_index % 2 == 0 && bob_index % 2 == 0 {
        SettingClass::BellSPrime
    } else {
        SettingClass::Discard
    };
    Ok(class)
}

/// Bit value of a detector click.
///
/// Detector 1 reads as 0 for α₁, α₃ and as 1 for α₂, α₄. Detector 2′ reads as
/// 0 for β₂, β₄ and as 1 for β₁, β₃. The other detector of each pair gives the
/// complementary bit, so each detector carries both values equally often.
pub fn outcome_to_bit(_party: Party, setting_index: u8, outcome: Outcome) -> Result<bool, StateError> {
    check_index(setting_index)?;
    // Detector 1 and detector 2 both read as 1 on even settings; the rule is
    // the same for either party once 2 is taken as the complement of 2′.
    let bit_of_plus = setting_index % 2 == 0;
    Ok(match outcome {
        Outcome::Plus => bit_of_plus,
        Outcome::Minus => !bit_of_plus,
    })
}

/// Uniform analyzer index in 1..=4.
pub fn pick_setting<R: Rng + ?Sized>(rng: &mut R) -> u8 {
    rng.random_range(1..=4u8)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub window: u64,
    pub alice_index: u8,
    pub bob_index: u8,
    pub alice_outcome: Outcome,
    pub bob_outcome: Outcome,
    pub class: SettingClass,
    pub alice_bit: Option<bool>,
    pub bob_bit: Option<bool>,
    pub double_pair: bool,
    pub spurious: bool,
    /// Which of Eve's projectors fired, when she intercepted this pair.
    pub eve_outcome: Option<Outcome>,
    /// Eve's guess of Bob's key bit (key settings only).
    pub eve_guess: Option<bool>,
}

impl TrialRecord {
    pub fn alice_angle(&self) -> f64 {
        ALICE_ANGLES[usize::from(self.alice_index - 1)]
    }

    pub fn bob_angle(&self) -> f64 {
        BOB_ANGLES[usize::from(self.bob_index - 1)]
    }
}

/// How long a session runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrialBudget {
    /// Wall-clock seconds of collection; one window per analyzer cycle.
    Duration(f64),
    /// Number of collection windows.
    Windows(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub seed: u64,
    pub budget: TrialBudget,
    pub visibility: f64,
    pub source: SourceParams,
    pub attack: AttackSpec,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            seed: 1,
            budget: TrialBudget::Duration(600.0),
            visibility: 1.0,
            source: SourceParams::default(),
            attack: AttackSpec::none(),
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.budget {
            TrialBudget::Duration(d) if !(d.is_finite() && d > 0.0) => {
                return Err(ConfigError::BadValue {
                    key: "duration_s".into(),
                    msg: "must be positive".into(),
                })
            }
            TrialBudget::Windows(0) => {
                return Err(ConfigError::BadValue {
                    key: "n_trials".into(),
                    msg: "must be positive".into(),
                })
            }
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(ConfigError::BadValue {
                key: "visibility".into(),
                msg: "must lie in [0, 1]".into(),
            });
        }
        self.source.validate()?;
        self.attack.validate()?;
        if self.window_count() == 0 {
            return Err(ConfigError::Invalid("session is shorter than one analyzer cycle".into()));
        }
        Ok(())
    }

    pub fn window_count(&self) -> u64 {
        match self.budget {
            TrialBudget::Windows(n) => n,
            TrialBudget::Duration(d) => (d / self.source.cycle_period).round() as u64,
        }
    }

    /// Elapsed collection time covered by the session, s.
    pub fn duration_s(&self) -> f64 {
        self.window_count() as f64 * self.source.cycle_period
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SessionStats {
    pub windows: u64,
    pub empty_windows: u64,
    pub ambiguous: u64,
    /// Pairs removed by a filtering eavesdropper.
    pub lost_pairs: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionData {
    pub config: SessionConfig,
    pub stats: SessionStats,
    pub trials: Vec<TrialRecord>,
}

impl SessionData {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Checks that every stored class agrees with the setting indices.
    pub fn check_consistency(&self) -> Result<(), StateError> {
        for t in &self.trials {
            let c = classify(t.alice_index, t.bob_index)?;
            if c != t.class || (t.class == SettingClass::Key) != t.alice_bit.is_some() {
                return Err(StateError::BadSettingIndex(t.alice_index));
            }
        }
        Ok(())
    }
}

/// Runs a full session: for every analyzer cycle both parties pick settings,
/// the source fills the window, Eve intercepts per the attack spec, and the
/// first surviving event is classified and turned into bits.
///
/// Settings, source physics and Eve each draw from their own named stream of
/// the config seed.
pub fn run_session(config: &SessionConfig) -> Result<SessionData, ConfigError> {
    config.validate()?;
    let clean = visibility_mix(&phi_plus(), config.visibility)?;
    let interceptor = Interceptor::new(&clean, &config.attack)?;
    let streams = Streams::new(config.seed);
    let mut alice_rng = streams.stream(rng::ALICE_SETTINGS);
    let mut bob_rng = streams.stream(rng::BOB_SETTINGS);
    let mut source_rng = streams.stream(rng::SOURCE);
    let mut eve_rng = streams.stream(rng::EVE);

    let n = config.window_count();
    let mut stats = SessionStats {
        windows: n,
        ..SessionStats::default()
    };
    let mut trials = Vec::with_capacity((n as f64 * 0.9) as usize);
    for w in 0..n {
        let a = pick_setting(&mut alice_rng);
        let b = pick_setting(&mut bob_rng);
        let ambiguous = source_rng.random::<f64>() < config.source.ambiguous_setting_prob;
        let mut lost = 0u64;
        let event = simulate_window_with(&config.source, w, &mut source_rng, |r| {
            match interceptor.sample_pair(a, b, r, &mut eve_rng) {
                Some((ao, bo, eve)) => PairFate::Detected(ao, bo, eve),
                None => {
                    lost += 1;
                    PairFate::Lost
                }
            }
        });
        stats.lost_pairs += lost;
        let Some((rec, payload)) = event else {
            stats.empty_windows += 1;
            continue;
        };
        if ambiguous {
            stats.ambiguous += 1;
            continue;
        }
        let class = classify(a, b)?;
        let eve_outcome = payload.flatten();
        let (alice_bit, bob_bit, eve_guess) = if class == SettingClass::Key {
            let ab = outcome_to_bit(Party::Alice, a, rec.alice_outcome)?;
            let bb = outcome_to_bit(Party::Bob, b, rec.bob_outcome)?;
            let guess = match eve_outcome {
                Some(o) => Some(interceptor.guess_bob_bit(o, b, &mut eve_rng)?),
                None => None,
            };
            (Some(ab), Some(bb), guess)
        } else {
            (None, None, None)
        };
        trials.push(TrialRecord {
            window: w,
            alice_index: a,
            bob_index: b,
            alice_outcome: rec.alice_outcome,
            bob_outcome: rec.bob_outcome,
            class,
            alice_bit,
            bob_bit,
            double_pair: rec.double_pair,
            spurious: rec.from_dark_or_accidental,
            eve_outcome,
            eve_guess,
        });
    }
    Ok(SessionData {
        config: config.clone(),
        stats,
        trials,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sifted {
    pub alice_key: Vec<bool>,
    pub bob_key: Vec<bool>,
    /// Key trials in window order, parallel to the keys.
    pub key_trials: Vec<TrialRecord>,
    pub bell_s: Vec<TrialRecord>,
    pub bell_s_prime: Vec<TrialRecord>,
    pub discarded: usize,
}

/// Partitions trials by setting class. Key bits come out in window order.
pub fn sift(data: &SessionData) -> Sifted {
    let mut out = Sifted::default();
    for t in &data.trials {
        match t.class {
            SettingClass::Key => {
                if let (Some(a), Some(b)) = (t.alice_bit, t.bob_bit) {
                    out.alice_key.push(a);
                    out.bob_key.push(b);
                    out.key_trials.push(t.clone());
                }
            }
            SettingClass::BellS => out.bell_s.push(t.clone()),
            SettingClass::BellSPrime => out.bell_s_prime.push(t.clone()),
            SettingClass::Discard => out.discarded += 1,
        }
    }
    out
}
