//! Text artifacts: key files, the per-trial session log, and CSV tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::RunConfig;
use crate::eavesdrop::SweepRow;
use crate::error::PipelineError;
use crate::protocol::{SessionData, SessionStats, TrialRecord};
use crate::source::Outcome;

/// Formats with six significant digits, trailing zeros trimmed.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..6).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".to_string()
    } else {
        s
    }
}

pub fn key_to_string(key: &[bool]) -> String {
    let mut s: String = key.iter().map(|&b| if b { '1' } else { '0' }).collect();
    s.push('\n');
    s
}

pub fn parse_key(text: &str) -> Result<Vec<bool>, PipelineError> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    body.chars()
        .enumerate()
        .map(|(i, c)| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(PipelineError::Parse {
                what: "key file",
                line: 1,
                msg: format!("character {} is `{other}`", i + 1),
            }),
        })
        .collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|e| PipelineError::io(format!("writing {}", path.display()), e))
}

pub fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::io(format!("reading {}", path.display()), e))
}

pub fn write_key(path: &Path, key: &[bool]) -> Result<(), PipelineError> {
    write_text(path, &key_to_string(key))
}

pub fn read_key(path: &Path) -> Result<Vec<bool>, PipelineError> {
    parse_key(&read_text(path)?)
}

pub const SWEEP_COLUMNS: [&str; 11] = [
    "angle",
    "S_analytic",
    "S_mc",
    "S_mc_sigma",
    "S_prime_analytic",
    "S_prime_mc",
    "S_prime_mc_sigma",
    "BER_analytic",
    "BER_mc",
    "BER_mc_sigma",
    "eve_info",
];

fn sweep_values(r: &SweepRow) -> [f64; 11] {
    [
        r.angle,
        r.s_analytic,
        r.s_mc,
        r.s_mc_sigma,
        r.s_prime_analytic,
        r.s_prime_mc,
        r.s_prime_mc_sigma,
        r.ber_analytic,
        r.ber_mc,
        r.ber_mc_sigma,
        r.eve_info,
    ]
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = SWEEP_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let cells: Vec<String> = sweep_values(r).iter().map(|&v| sig6(v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn parse_sweep_csv(text: &str) -> Result<Vec<SweepRow>, PipelineError> {
    let bad = |line: usize, msg: String| PipelineError::Parse {
        what: "sweep table",
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == SWEEP_COLUMNS.join(",") => {}
        _ => return Err(bad(1, "unexpected header".into())),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let v: Vec<f64> = line
            .split(',')
            .map(|c| c.parse::<f64>().map_err(|e| bad(i + 1, format!("`{c}`: {e}"))))
            .collect::<Result<_, _>>()?;
        if v.len() != SWEEP_COLUMNS.len() {
            return Err(bad(i + 1, format!("{} cells, expected {}", v.len(), SWEEP_COLUMNS.len())));
        }
        rows.push(SweepRow {
            angle: v[0],
            s_analytic: v[1],
            s_mc: v[2],
            s_mc_sigma: v[3],
            s_prime_analytic: v[4],
            s_prime_mc: v[5],
            s_prime_mc_sigma: v[6],
            ber_analytic: v[7],
            ber_mc: v[8],
            ber_mc_sigma: v[9],
            eve_info: v[10],
        });
    }
    Ok(rows)
}

const TRIAL_HEADER: &str =
    "window,alice_index,bob_index,alice_outcome,bob_outcome,class,alice_bit,bob_bit,double_pair,spurious,eve_outcome,eve_guess";

fn outcome_str(o: Outcome) -> &'static str {
    match o {
        Outcome::Plus => "+",
        Outcome::Minus => "-",
    }
}

fn parse_outcome(s: &str) -> Result<Outcome, String> {
    match s {
        "+" => Ok(Outcome::Plus),
        "-" => Ok(Outcome::Minus),
        other => Err(format!("bad outcome `{other}`")),
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn parse_flag(s: &str) -> Result<bool, String> {
    match s {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(format!("bad flag `{other}`")),
    }
}

fn parse_opt<T>(s: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Option<T>, String> {
    if s.is_empty() {
        Ok(None)
    } else {
        f(s).map(Some)
    }
}

/// Session log: the run configuration (minus the output directory) as
/// `# key=value` lines, session counters as `## key=value` lines, then one
/// CSV row per usable trial.
pub fn session_log(config: &RunConfig, data: &SessionData) -> String {
    let mut out = String::new();
    // the output location is not part of the run, so logs of identical runs match
    for line in config.to_kv().lines().filter(|l| !l.starts_with("output.")) {
        let _ = writeln!(out, "# {line}");
    }
    let s = &data.stats;
    let _ = writeln!(out, "## windows={}", s.windows);
    let _ = writeln!(out, "## empty_windows={}", s.empty_windows);
    let _ = writeln!(out, "## ambiguous={}", s.ambiguous);
    let _ = writeln!(out, "## lost_pairs={}", s.lost_pairs);
    out.push_str(TRIAL_HEADER);
    out.push('\n');
    for t in &data.trials {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            t.window,
            t.alice_index,
            t.bob_index,
            outcome_str(t.alice_outcome),
            outcome_str(t.bob_outcome),
            t.class.label(),
            t.alice_bit.map_or("", flag),
            t.bob_bit.map_or("", flag),
            flag(t.double_pair),
            flag(t.spurious),
            t.eve_outcome.map_or("", outcome_str),
            t.eve_guess.map_or("", flag),
        );
    }
    out
}

fn parse_trial(line: &str) -> Result<TrialRecord, String> {
    let c: Vec<&str> = line.split(',').collect();
    if c.len() != 12 {
        return Err(format!("{} cells, expected 12", c.len()));
    }
    let num = |s: &str| s.parse::<u64>().map_err(|e| format!("`{s}`: {e}"));
    let idx = |s: &str| s.parse::<u8>().map_err(|e| format!("`{s}`: {e}"));
    Ok(TrialRecord {
        window: num(c[0])?,
        alice_index: idx(c[1])?,
        bob_index: idx(c[2])?,
        alice_outcome: parse_outcome(c[3])?,
        bob_outcome: parse_outcome(c[4])?,
        class: c[5].parse()?,
        alice_bit: parse_opt(c[6], parse_flag)?,
        bob_bit: parse_opt(c[7], parse_flag)?,
        double_pair: parse_flag(c[8])?,
        spurious: parse_flag(c[9])?,
        eve_outcome: parse_opt(c[10], parse_outcome)?,
        eve_guess: parse_opt(c[11], parse_flag)?,
    })
}

/// Inverse of [`session_log`]. Rejects logs whose trial classes disagree with
/// their setting indices.
pub fn parse_session_log(text: &str) -> Result<(RunConfig, SessionData), PipelineError> {
    let bad = |line: usize, msg: String| PipelineError::Parse {
        what: "session log",
        line,
        msg,
    };
    let mut config_kv = String::new();
    let mut stats = SessionStats::default();
    let mut trials = Vec::new();
    let mut in_body = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if in_body {
            if !line.is_empty() {
                trials.push(parse_trial(line).map_err(|m| bad(lineno, m))?);
            }
        } else if let Some(kv) = line.strip_prefix("## ") {
            let (k, v) = kv.split_once('=').ok_or_else(|| bad(lineno, "expected key=value".into()))?;
            let v: u64 = v.parse().map_err(|e| bad(lineno, format!("{k}: {e}")))?;
            match k {
                "windows" => stats.windows = v,
                "empty_windows" => stats.empty_windows = v,
                "ambiguous" => stats.ambiguous = v,
                "lost_pairs" => stats.lost_pairs = v,
                other => return Err(bad(lineno, format!("unknown counter `{other}`"))),
            }
        } else if let Some(kv) = line.strip_prefix("# ") {
            config_kv.push_str(kv);
            config_kv.push('\n');
        } else if line == TRIAL_HEADER {
            in_body = true;
        } else {
            return Err(bad(lineno, "expected a comment or the trial header".into()));
        }
    }
    if !in_body {
        return Err(bad(text.lines().count(), "missing trial header".into()));
    }
    let config = RunConfig::parse(&config_kv)?;
    let data = SessionData {
        config: config.session(),
        stats,
        trials,
    };
    data.check_consistency()?;
    Ok((config, data))
}
