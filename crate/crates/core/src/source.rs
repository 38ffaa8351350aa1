//! Pair emission, detection and collection-window bookkeeping.
//!
//! Time inside a collection window is modeled only ordinally: the window holds
//! a Poisson number of detected pairs plus a Poisson number of spurious
//! (dark/accidental) coincidences, interleaved in uniformly random order, and
//! only the first event that survives is kept.

use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::ConfigError;
use crate::qstate::{coincidence_probs, CoincidenceProbs, JointState};

/// Which output port of a polarizing beam splitter fired.
///
/// `Plus` is detector 1 (Alice) or 2 (Bob); `Minus` is 1′ or 2′.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Plus,
    Minus,
}

impl Outcome {
    pub fn flipped(self) -> Self {
        match self {
            Outcome::Plus => Outcome::Minus,
            Outcome::Minus => Outcome::Plus,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceParams {
    /// Detected coincidences per second (detector efficiency already folded in).
    pub coincidence_rate: f64,
    /// Collection window, s.
    pub window: f64,
    /// Analyzer switching cycle, s; one window per cycle.
    pub cycle_period: f64,
    /// Coincidence gate, s.
    pub gate: f64,
    /// Detector dead time, s.
    pub dead_time: f64,
    pub detector_efficiency: f64,
    /// Dark counts per second, per detector.
    pub dark_rate: f64,
    /// Accidental coincidences per second.
    pub accidental_rate: f64,
    /// Probability that the analyzer state read out for a window is ambiguous.
    pub ambiguous_setting_prob: f64,
    /// Probability that a recorded event had a second pair inside gate + dead time.
    pub double_pair_key_frac: f64,
    /// Relative loss at Alice's detector 1′: events on it are recorded with
    /// probability `1 − detector_asymmetry`.
    pub detector_asymmetry: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        SourceParams {
            coincidence_rate: 5000.0,
            window: 1e-3,
            cycle_period: 22e-3,
            gate: 5e-9,
            dead_time: 35e-9,
            detector_efficiency: 0.60,
            dark_rate: 400.0,
            accidental_rate: 1e-5,
            ambiguous_setting_prob: 0.119,
            double_pair_key_frac: 0.007,
            detector_asymmetry: 0.0,
        }
    }
}

impl SourceParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let rates = [
            ("source.coincidence_rate", self.coincidence_rate),
            ("source.gate", self.gate),
            ("source.dead_time", self.dead_time),
            ("source.dark_rate", self.dark_rate),
            ("source.accidental_rate", self.accidental_rate),
        ];
        for (key, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(key, "must be finite and non-negative"));
            }
        }
        let fractions = [
            ("source.ambiguous_setting_prob", self.ambiguous_setting_prob),
            ("source.double_pair_key_frac", self.double_pair_key_frac),
            ("source.detector_asymmetry", self.detector_asymmetry),
        ];
        for (key, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(key, "must lie in [0, 1]"));
            }
        }
        if !(self.detector_efficiency > 0.0 && self.detector_efficiency <= 1.0) {
            return Err(bad("source.detector_efficiency", "must lie in (0, 1]"));
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(bad("source.window", "must be positive"));
        }
        if !(self.cycle_period.is_finite() && self.window < self.cycle_period) {
            return Err(bad("source.cycle_period", "must exceed the collection window"));
        }
        Ok(())
    }

    /// Mean number of detected pairs per window.
    pub fn mean_pairs(&self) -> f64 {
        self.coincidence_rate * self.window
    }

    /// Spurious coincidence rate: configured accidentals plus dark-dark
    /// coincidences between one detector on each side within the gate.
    pub fn spurious_rate(&self) -> f64 {
        self.accidental_rate + 2.0 * self.dark_rate * self.dark_rate * self.gate
    }
}

fn bad(key: &str, msg: &str) -> ConfigError {
    ConfigError::BadValue {
        key: key.to_string(),
        msg: msg.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub p_at_least_one: f64,
    pub p_more_than_one: f64,
}

/// Poisson occupancy of one collection window with mean `lambda`.
pub fn poisson_occupancy(lambda: f64) -> WindowStats {
    let e = (-lambda).exp();
    WindowStats {
        p_at_least_one: 1.0 - e,
        p_more_than_one: 1.0 - e * (1.0 + lambda),
    }
}

pub fn window_statistics(params: &SourceParams) -> WindowStats {
    poisson_occupancy(params.mean_pairs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    /// One window per analyzer cycle, Hz.
    pub max_rate: f64,
    /// Windows that hold an event and an unambiguous setting readout, Hz.
    pub usable_rate: f64,
}

pub fn throughput(params: &SourceParams) -> Throughput {
    let max_rate = 1.0 / params.cycle_period;
    let usable_rate =
        max_rate * window_statistics(params).p_at_least_one * (1.0 - params.ambiguous_setting_prob);
    Throughput {
        max_rate,
        usable_rate,
    }
}

/// First-principles probability that another detectable pair lands within
/// gate + dead time of a recorded one. Pairs are emitted at the detected rate
/// divided by the two-detector efficiency, and an extra pair counts when at
/// least one of its photons is detected. The simulator flags double pairs
/// with the calibrated `double_pair_key_frac` instead; this estimate is
/// reported for comparison.
pub fn double_pair_poisson_estimate(params: &SourceParams) -> f64 {
    let eta = params.detector_efficiency;
    let emitted = params.coincidence_rate / (eta * eta);
    let detectable = 1.0 - (1.0 - eta) * (1.0 - eta);
    let mean = emitted * (params.gate + params.dead_time) * detectable;
    1.0 - (-mean).exp()
}

/// Draws one outcome pair from coincidence probabilities, renormalizing if
/// they do not sum to one.
pub fn sample_from_probs<R: Rng + ?Sized>(probs: &CoincidenceProbs, rng: &mut R) -> (Outcome, Outcome) {
    let p = probs.as_array();
    let total: f64 = p.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut pick = 3;
    for (k, pk) in p.iter().enumerate() {
        acc += pk;
        if u < acc {
            pick = k;
            break;
        }
    }
    // Guard against landing on a zero-probability tail from rounding.
    while p[pick] <= 0.0 && pick > 0 {
        pick -= 1;
    }
    match pick {
        0 => (Outcome::Plus, Outcome::Plus),
        1 => (Outcome::Plus, Outcome::Minus),
        2 => (Outcome::Minus, Outcome::Plus),
        _ => (Outcome::Minus, Outcome::Minus),
    }
}

pub fn sample_outcome<R: Rng + ?Sized>(
    state: &JointState,
    alpha_deg: f64,
    beta_deg: f64,
    rng: &mut R,
) -> (Outcome, Outcome) {
    sample_from_probs(&coincidence_probs(state, alpha_deg, beta_deg), rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionRecord {
    pub window_index: u64,
    pub alice_outcome: Outcome,
    pub bob_outcome: Outcome,
    pub double_pair: bool,
    pub from_dark_or_accidental: bool,
}

/// What happened to one pair on its way to the detectors.
pub(crate) enum PairFate<X> {
    Detected(Outcome, Outcome, X),
    Lost,
}

fn draw_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let d = Poisson::new(mean).expect("positive finite mean");
    d.sample(rng) as u64
}

/// Core of the window model, generic over what happens to each real pair.
///
/// Returns the first surviving event; the payload is `None` for spurious
/// coincidences.
pub(crate) fn simulate_window_with<R, X, F>(
    params: &SourceParams,
    window_index: u64,
    rng: &mut R,
    mut pair: F,
) -> Option<(DetectionRecord, Option<X>)>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> PairFate<X>,
{
    let mut real = draw_poisson(params.mean_pairs(), rng);
    let spurious = draw_poisson(params.spurious_rate() * params.window, rng);
    while real + spurious > 0 {
        let take_real = if spurious == 0 {
            true
        } else if real == 0 {
            false
        } else {
            rng.random::<f64>() * ((real + spurious) as f64) < real as f64
        };
        if take_real {
            real -= 1;
            if let PairFate::Detected(a, b, x) = pair(rng) {
                if a == Outcome::Minus
                    && params.detector_asymmetry > 0.0
                    && rng.random::<f64>() < params.detector_asymmetry
                {
                    continue;
                }
                let double_pair = rng.random::<f64>() < params.double_pair_key_frac;
                let rec = DetectionRecord {
                    window_index,
                    alice_outcome: a,
                    bob_outcome: b,
                    double_pair,
                    from_dark_or_accidental: false,
                };
                return Some((rec, Some(x)));
            }
        } else {
            let a = if rng.random::<bool>() { Outcome::Plus } else { Outcome::Minus };
            let b = if rng.random::<bool>() { Outcome::Plus } else { Outcome::Minus };
            let rec = DetectionRecord {
                window_index,
                alice_outcome: a,
                bob_outcome: b,
                double_pair: false,
                from_dark_or_accidental: true,
            };
            return Some((rec, None));
        }
    }
    None
}

/// One collection window with no eavesdropper: first event only.
pub fn simulate_window<R: Rng + ?Sized>(
    params: &SourceParams,
    state: &JointState,
    alpha_deg: f64,
    beta_deg: f64,
    window_index: u64,
    rng: &mut R,
) -> Option<DetectionRecord> {
    let probs = coincidence_probs(state, alpha_deg, beta_deg);
    simulate_window_with(params, window_index, rng, |r| {
        let (a, b) = sample_from_probs(&probs, r);
        PairFate::Detected(a, b, ())
    })
    .map(|(rec, _)| rec)
}
