//! End-to-end commands behind the `ekert` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::eavesdrop::{eve_information, sweep, SweepConfig, SweepRow};
use crate::error::PipelineError;
use crate::io::{self, sig6};
use crate::postprocess::{
    amplify, ber, ber_sigma, conservative_ber, detection_time, estimate_bell, eve_bound, reconcile,
    residual_info, HashSeed, ReconcileParams, SessionReport,
};
use crate::protocol::{run_session, sift, SessionData};
use crate::qstate::predicted_observables;
use crate::rng::{self, Streams};

/// Everything a key-generation run produces.
#[derive(Debug, Clone)]
pub struct KeygenOutput {
    pub report: SessionReport,
    /// Sifted raw keys, before reconciliation.
    pub alice_key: Vec<bool>,
    pub bob_key: Vec<bool>,
    pub reconciled_key: Vec<bool>,
    pub final_key: Vec<bool>,
}

fn reconcile_params(cfg: &RunConfig, measured_ber: f64, n_raw: usize) -> Result<ReconcileParams, PipelineError> {
    let first = match cfg.reconcile.initial_block {
        Some(b) => b,
        // a clean key still needs a finite block to verify with
        None => ReconcileParams::for_error_rate(measured_ber.max(1.0 / n_raw as f64))?.schedule[0],
    };
    Ok(ReconcileParams {
        schedule: (0..cfg.reconcile.rounds).map(|r| first << r).collect(),
        verify_checks: cfg.reconcile.verify_checks,
        max_rounds: cfg.reconcile.max_rounds,
    })
}

/// Post-processing of a recorded session: sifting, Bell estimate, error
/// estimate, Eve's bound, reconciliation, privacy amplification and the
/// detection-time estimate. Deterministic given the config seed.
pub fn distill(cfg: &RunConfig, data: &SessionData) -> Result<KeygenOutput, PipelineError> {
    let streams = Streams::new(cfg.seed);
    let sifted = sift(data);
    let bell = estimate_bell(&sifted.bell_s, &sifted.bell_s_prime)?;
    let n_raw = sifted.alice_key.len();
    let measured = ber(&sifted.alice_key, &sifted.bob_key)?;
    let sigma = ber_sigma(measured, n_raw);
    let conservative = conservative_ber(measured, n_raw, cfg.amplify.conservative_sigmas);
    let double_pairs = sifted.key_trials.iter().filter(|t| t.double_pair).count();
    let double_pair_frac = double_pairs as f64 / n_raw as f64;
    let bound = eve_bound(conservative, double_pair_frac);
    let eve_bits = (bound * n_raw as f64).round() as usize;

    let params = reconcile_params(cfg, measured, n_raw)?;
    let mut reconcile_rng = streams.stream(rng::RECONCILE);
    let reconciled = reconcile(&sifted.alice_key, &sifted.bob_key, &params, &mut reconcile_rng)?;
    let n_ec = reconciled.key.len();
    let n_final = n_ec.saturating_sub(eve_bits + cfg.amplify.security_bits);
    let final_key = amplify(&reconciled.key, n_final, HashSeed::Seeded(streams.derive_seed(rng::HASH)))?;

    let duration_s = data.config.duration_s();
    let usable_rate = data.trials.len() as f64 / duration_s;
    let detection = detection_time(&data.trials, usable_rate, cfg.detect.threshold, cfg.detect.k_sigma)?;

    let report = SessionReport {
        seed: cfg.seed,
        duration_s,
        windows: data.stats.windows,
        usable_trials: data.trials.len(),
        n_raw,
        ber: measured,
        ber_sigma: sigma,
        ber_conservative: conservative,
        double_pair_frac,
        eve_bound: bound,
        eve_bits,
        eve_info_observed: eve_information(data),
        n_ec,
        bits_disclosed: reconciled.bits_disclosed,
        reconcile_rounds: reconciled.rounds.len(),
        n_final,
        residual: residual_info(n_ec, n_final, eve_bits),
        bell,
        detection,
    };
    Ok(KeygenOutput {
        report,
        alice_key: sifted.alice_key,
        bob_key: sifted.bob_key,
        reconciled_key: reconciled.key,
        final_key,
    })
}

/// Simulates a session and distills it, without touching the filesystem.
pub fn run_keygen(cfg: &RunConfig) -> Result<(SessionData, KeygenOutput), PipelineError> {
    cfg.validate()?;
    let data = run_session(&cfg.session())?;
    let out = distill(cfg, &data)?;
    Ok((data, out))
}

pub const KEYGEN_FILES: [&str; 6] = [
    "alice_key.txt",
    "bob_key.txt",
    "final_key.txt",
    "report.txt",
    "report.csv",
    "session.log",
];

/// Runs [`run_keygen`] and writes the key files, the report (as `key=value`
/// text and as a one-row CSV) and the session log into `out_dir`.
pub fn cmd_keygen(cfg: &RunConfig, out_dir: &Path) -> Result<SessionReport, PipelineError> {
    let (data, out) = run_keygen(cfg)?;
    fs::create_dir_all(out_dir).map_err(|e| PipelineError::io(format!("creating {}", out_dir.display()), e))?;
    io::write_key(&out_dir.join("alice_key.txt"), &out.alice_key)?;
    io::write_key(&out_dir.join("bob_key.txt"), &out.bob_key)?;
    io::write_key(&out_dir.join("final_key.txt"), &out.final_key)?;
    io::write_text(&out_dir.join("report.txt"), &out.report.to_kv())?;
    io::write_text(
        &out_dir.join("report.csv"),
        &format!("{}\n{}\n", SessionReport::csv_header(), out.report.to_csv_row()),
    )?;
    io::write_text(&out_dir.join("session.log"), &io::session_log(cfg, &data))?;
    Ok(out.report)
}

/// Re-distills the session log in `dir`. The result matches the report
/// written by the keygen run that produced the log.
pub fn cmd_report(dir: &Path) -> Result<SessionReport, PipelineError> {
    let text = io::read_text(&dir.join("session.log"))?;
    let (cfg, data) = io::parse_session_log(&text)?;
    Ok(distill(&cfg, &data)?.report)
}

pub fn sweep_config(cfg: &RunConfig) -> SweepConfig {
    SweepConfig {
        plane: cfg.sweep.plane,
        angles: cfg.sweep.angles(),
        mode: cfg.sweep.mode,
        fraction: cfg.attack.fraction,
        trials_per_point: cfg.sweep.trials_per_point,
        visibility: cfg.visibility,
        source: cfg.source.clone(),
        seed: cfg.seed,
    }
}

/// Attack sweep as a CSV table.
pub fn cmd_attack_sweep(cfg: &RunConfig) -> Result<(Vec<SweepRow>, String), PipelineError> {
    cfg.validate()?;
    let rows = sweep(&sweep_config(cfg))?;
    let csv = io::sweep_to_csv(&rows);
    Ok((rows, csv))
}

/// Round-off below 1e-12 prints as zero.
fn clean(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

/// Predicted S, S′ and key error rates for the configured attack and visibility.
pub fn cmd_theory(cfg: &RunConfig) -> Result<String, PipelineError> {
    cfg.validate()?;
    let obs = predicted_observables(&cfg.attack, cfg.visibility)?;
    let a = &cfg.attack;
    let mut out = String::new();
    let _ = writeln!(out, "attack={}", a.mode.label());
    if a.is_active() {
        let _ = writeln!(out, "plane={}", a.basis.plane.label());
        let _ = writeln!(out, "angle={}", sig6(a.basis.angle));
        let _ = writeln!(out, "fraction={}", sig6(a.fraction));
    }
    let _ = writeln!(out, "visibility={}", sig6(cfg.visibility));
    let _ = writeln!(out, "S={}", sig6(clean(obs.s)));
    let _ = writeln!(out, "S_prime={}", sig6(clean(obs.s_prime)));
    for (j, b) in obs.ber_per_setting.iter().enumerate() {
        let _ = writeln!(out, "BER_a{}_b{}={}", 4 - j, j + 1, sig6(clean(*b)));
    }
    let _ = writeln!(out, "BER_avg={}", sig6(clean(obs.ber_avg)));
    Ok(out)
}
