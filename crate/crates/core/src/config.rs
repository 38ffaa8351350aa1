//! Run configuration as a flat `key=value` text file.
//!
//! Keys may carry a dotted section prefix (`source.coincidence_rate=5000`).
//! Blank lines and lines starting with `#` are ignored. Every key is optional;
//! missing keys keep their defaults, except that at most one of `duration_s`
//! and `n_trials` may be given.
//!
//! | key | default |
//! |-----|---------|
//! | `seed` | 1 |
//! | `duration_s` / `n_trials` | `duration_s=2400` |
//! | `visibility` | 0.9388 |
//! | `source.*` | see [`SourceParams`] |
//! | `attack.mode` | `none` (`filter`, `dephase`) |
//! | `attack.plane`, `attack.angle` | `A`, 0 |
//! | `attack.fraction` | 1 |
//! | `reconcile.initial_block` | auto, `⌈0.73/BER⌉` |
//! | `reconcile.rounds` | 4 |
//! | `reconcile.verify_checks` | 20 |
//! | `reconcile.max_rounds` | 64 |
//! | `amplify.conservative_sigmas` | 3 |
//! | `amplify.security_bits` | 2737 |
//! | `detect.threshold`, `detect.k_sigma` | √2, 2 |
//! | `sweep.plane`, `sweep.mode`, `sweep.grid` | `A`, `dephase`, 15° grid |
//! | `sweep.trials_per_point` | 20000 |
//! | `output.dir` | `out` |

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::eavesdrop::{default_grid, AttackMode, AttackSpec};
use crate::error::ConfigError;
use crate::protocol::{SessionConfig, TrialBudget};
use crate::qstate::{Plane, PoincarePoint};
use crate::source::SourceParams;

#[derive(Debug, Clone, PartialEq)]
pub struct ReconcileSettings {
    /// First block size; `None` derives it from the measured error rate.
    pub initial_block: Option<usize>,
    pub rounds: usize,
    pub verify_checks: usize,
    pub max_rounds: usize,
}

impl Default for ReconcileSettings {
    fn default() -> Self {
        ReconcileSettings {
            initial_block: None,
            rounds: 4,
            verify_checks: 20,
            max_rounds: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmplifySettings {
    /// The BER fed to the Eve bound is the measured BER plus this many
    /// binomial standard errors.
    pub conservative_sigmas: f64,
    /// Bits removed beyond Eve's bound; the residual-information exponent.
    pub security_bits: usize,
}

impl Default for AmplifySettings {
    fn default() -> Self {
        AmplifySettings {
            conservative_sigmas: 3.0,
            security_bits: 2737,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectSettings {
    pub threshold: f64,
    pub k_sigma: f64,
}

impl Default for DetectSettings {
    fn default() -> Self {
        DetectSettings {
            threshold: std::f64::consts::SQRT_2,
            k_sigma: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub plane: Plane,
    pub mode: AttackMode,
    /// `None` selects the default 15° grid for the plane.
    pub grid: Option<Vec<f64>>,
    pub trials_per_point: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        SweepSettings {
            plane: Plane::A,
            mode: AttackMode::Dephase,
            grid: None,
            trials_per_point: 20_000,
        }
    }
}

impl SweepSettings {
    pub fn angles(&self) -> Vec<f64> {
        self.grid.clone().unwrap_or_else(|| default_grid(self.plane))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub duration_s: Option<f64>,
    pub n_trials: Option<u64>,
    pub visibility: f64,
    pub source: SourceParams,
    pub attack: AttackSpec,
    pub reconcile: ReconcileSettings,
    pub amplify: AmplifySettings,
    pub detect: DetectSettings,
    pub sweep: SweepSettings,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            duration_s: Some(2400.0),
            n_trials: None,
            visibility: 0.9388,
            source: SourceParams::default(),
            attack: AttackSpec::none(),
            reconcile: ReconcileSettings::default(),
            amplify: AmplifySettings::default(),
            detect: DetectSettings::default(),
            sweep: SweepSettings::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        msg: e.to_string(),
    })
}

fn parse_grid(key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse::<f64>(key, v.trim())).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = RunConfig::default();
        let mut saw_duration = false;
        let mut saw_trials = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: lineno + 1,
                msg: format!("expected key=value, found `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "duration_s" => saw_duration = true,
                "n_trials" => saw_trials = true,
                _ => {}
            }
            cfg.set(key, value)?;
        }
        if saw_duration && saw_trials {
            return Err(ConfigError::Invalid("set only one of duration_s and n_trials".into()));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key. `duration_s` and `n_trials` replace each other.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let s = &mut self.source;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "duration_s" => {
                self.duration_s = Some(parse(key, value)?);
                self.n_trials = None;
            }
            "n_trials" => {
                self.n_trials = Some(parse(key, value)?);
                self.duration_s = None;
            }
            "visibility" => self.visibility = parse(key, value)?,
            "source.coincidence_rate" => s.coincidence_rate = parse(key, value)?,
            "source.window" => s.window = parse(key, value)?,
            "source.cycle_period" => s.cycle_period = parse(key, value)?,
            "source.gate" => s.gate = parse(key, value)?,
            "source.dead_time" => s.dead_time = parse(key, value)?,
            "source.detector_efficiency" => s.detector_efficiency = parse(key, value)?,
            "source.dark_rate" => s.dark_rate = parse(key, value)?,
            "source.accidental_rate" => s.accidental_rate = parse(key, value)?,
            "source.ambiguous_setting_prob" => s.ambiguous_setting_prob = parse(key, value)?,
            "source.double_pair_key_frac" => s.double_pair_key_frac = parse(key, value)?,
            "source.detector_asymmetry" => s.detector_asymmetry = parse(key, value)?,
            "attack.mode" => self.attack.mode = parse(key, value)?,
            "attack.plane" => self.attack.basis.plane = parse(key, value)?,
            "attack.angle" => self.attack.basis.angle = parse(key, value)?,
            "attack.fraction" => self.attack.fraction = parse(key, value)?,
            "reconcile.initial_block" => {
                self.reconcile.initial_block = match value {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "reconcile.rounds" => self.reconcile.rounds = parse(key, value)?,
            "reconcile.verify_checks" => self.reconcile.verify_checks = parse(key, value)?,
            "reconcile.max_rounds" => self.reconcile.max_rounds = parse(key, value)?,
            "amplify.conservative_sigmas" => self.amplify.conservative_sigmas = parse(key, value)?,
            "amplify.security_bits" => self.amplify.security_bits = parse(key, value)?,
            "detect.threshold" => self.detect.threshold = parse(key, value)?,
            "detect.k_sigma" => self.detect.k_sigma = parse(key, value)?,
            "sweep.plane" => self.sweep.plane = parse(key, value)?,
            "sweep.mode" => self.sweep.mode = parse(key, value)?,
            "sweep.grid" => {
                self.sweep.grid = match value {
                    "default" => None,
                    v => Some(parse_grid(key, v)?),
                }
            }
            "sweep.trials_per_point" => self.sweep.trials_per_point = parse(key, value)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.duration_s.is_some() == self.n_trials.is_some() {
            return Err(ConfigError::Invalid("exactly one of duration_s and n_trials must be set".into()));
        }
        self.session().validate()?;
        if self.reconcile.rounds == 0 || self.reconcile.initial_block == Some(0) {
            return Err(ConfigError::Invalid("reconciliation needs at least one round of nonzero blocks".into()));
        }
        if !(self.amplify.conservative_sigmas >= 0.0) {
            return Err(ConfigError::BadValue {
                key: "amplify.conservative_sigmas".into(),
                msg: "must be non-negative".into(),
            });
        }
        if !(self.detect.threshold.is_finite() && self.detect.k_sigma >= 0.0) {
            return Err(ConfigError::Invalid("detect.threshold must be finite, detect.k_sigma non-negative".into()));
        }
        Ok(())
    }

    pub fn budget(&self) -> TrialBudget {
        match (self.duration_s, self.n_trials) {
            (_, Some(n)) => TrialBudget::Windows(n),
            (Some(d), None) => TrialBudget::Duration(d),
            (None, None) => TrialBudget::Windows(0),
        }
    }

    pub fn session(&self) -> SessionConfig {
        SessionConfig {
            seed: self.seed,
            budget: self.budget(),
            visibility: self.visibility,
            source: self.source.clone(),
            attack: self.attack,
        }
    }

    pub fn attack_point(&self) -> PoincarePoint {
        self.attack.basis
    }

    /// Serializes every setting back to `key=value` lines that [`RunConfig::parse`] accepts.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        put("seed", self.seed.to_string());
        if let Some(d) = self.duration_s {
            put("duration_s", d.to_string());
        }
        if let Some(n) = self.n_trials {
            put("n_trials", n.to_string());
        }
        put("visibility", self.visibility.to_string());
        let s = &self.source;
        put("source.coincidence_rate", s.coincidence_rate.to_string());
        put("source.window", s.window.to_string());
        put("source.cycle_period", s.cycle_period.to_string());
        put("source.gate", s.gate.to_string());
        put("source.dead_time", s.dead_time.to_string());
        put("source.detector_efficiency", s.detector_efficiency.to_string());
        put("source.dark_rate", s.dark_rate.to_string());
        put("source.accidental_rate", s.accidental_rate.to_string());
        put("source.ambiguous_setting_prob", s.ambiguous_setting_prob.to_string());
        put("source.double_pair_key_frac", s.double_pair_key_frac.to_string());
        put("source.detector_asymmetry", s.detector_asymmetry.to_string());
        put("attack.mode", self.attack.mode.label().to_string());
        put("attack.plane", self.attack.basis.plane.label().to_string());
        put("attack.angle", self.attack.basis.angle.to_string());
        put("attack.fraction", self.attack.fraction.to_string());
        put(
            "reconcile.initial_block",
            self.reconcile.initial_block.map_or_else(|| "auto".to_string(), |b| b.to_string()),
        );
        put("reconcile.rounds", self.reconcile.rounds.to_string());
        put("reconcile.verify_checks", self.reconcile.verify_checks.to_string());
        put("reconcile.max_rounds", self.reconcile.max_rounds.to_string());
        put("amplify.conservative_sigmas", self.amplify.conservative_sigmas.to_string());
        put("amplify.security_bits", self.amplify.security_bits.to_string());
        put("detect.threshold", self.detect.threshold.to_string());
        put("detect.k_sigma", self.detect.k_sigma.to_string());
        put("sweep.plane", self.sweep.plane.label().to_string());
        put("sweep.mode", self.sweep.mode.label().to_string());
        put(
            "sweep.grid",
            self.sweep.grid.as_ref().map_or_else(
                || "default".to_string(),
                |g| g.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","),
            ),
        );
        put("sweep.trials_per_point", self.sweep.trials_per_point.to_string());
        put("output.dir", self.output_dir.display().to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::parse("").unwrap(), RunConfig::default());
    }

    #[test]
    fn parses_sections_and_comments() {
        let text = "# comment\nseed = 9\nn_trials=1000\n\nsource.coincidence_rate=4000\nattack.mode=dephase\nattack.plane=B\nattack.angle=22.5\nattack.fraction=0.5\nsweep.grid=0,45,90\n";
        let c = RunConfig::parse(text).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.n_trials, Some(1000));
        assert_eq!(c.duration_s, None);
        assert_eq!(c.source.coincidence_rate, 4000.0);
        assert_eq!(c.attack.mode, AttackMode::Dephase);
        assert_eq!(c.attack.basis, PoincarePoint::new(Plane::B, 22.5));
        assert_eq!(c.sweep.angles(), vec![0.0, 45.0, 90.0]);
    }

    #[test]
    fn round_trips_through_text() {
        let mut c = RunConfig::default();
        c.set("n_trials", "777").unwrap();
        c.set("attack.mode", "filter").unwrap();
        c.set("reconcile.initial_block", "16").unwrap();
        c.set("sweep.grid", "0,15").unwrap();
        assert_eq!(RunConfig::parse(&c.to_kv()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("nonsense"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(matches!(RunConfig::parse("bogus.key=1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(RunConfig::parse("seed=abc"), Err(ConfigError::BadValue { .. })));
        assert!(RunConfig::parse("duration_s=10\nn_trials=5").is_err());
        assert!(RunConfig::parse("n_trials=0").is_err());
        assert!(RunConfig::parse("visibility=2").is_err());
        assert!(RunConfig::parse("attack.mode=filter\nattack.fraction=3").is_err());
        assert!(RunConfig::parse("source.window=0.5").is_err());
    }
}
