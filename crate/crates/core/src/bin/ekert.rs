use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ekert::config::RunConfig;
use ekert::error::{ConfigError, PipelineError};
use ekert::io;
use ekert::pipeline::{cmd_attack_sweep, cmd_keygen, cmd_report, cmd_theory};

/// Entangled-photon key distribution simulator.
#[derive(Parser)]
#[command(name = "ekert", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides the file)
    #[arg(long)]
    seed: Option<u64>,
    /// Number of collection windows (overrides duration_s)
    #[arg(long)]
    trials: Option<u64>,
    /// Session length in seconds (overrides n_trials)
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    visibility: Option<f64>,
    /// Extra key=value settings, applied last
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct AttackArgs {
    /// none, filter or dephase
    #[arg(long)]
    mode: Option<String>,
    /// A, B or C
    #[arg(long)]
    plane: Option<String>,
    #[arg(long)]
    angle: Option<f64>,
    #[arg(long)]
    fraction: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a session and distill a key
    Keygen {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        attack: AttackArgs,
        /// Output directory
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Analytic and Monte-Carlo observables over a grid of attack bases
    AttackSweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        plane: Option<String>,
        /// Comma-separated angles in degrees
        #[arg(long)]
        grid: Option<String>,
        /// filter or dephase
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        fraction: Option<f64>,
        /// Write the table here instead of stdout
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Predicted observables for an attack
    Theory {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        attack: AttackArgs,
    },
    /// Re-distill the session log in a keygen output directory
    Report {
        /// Keygen output directory
        #[arg(long)]
        out: PathBuf,
        /// Also write the report row as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::parse(&io::read_text(path)?)?,
        None => RunConfig::default(),
    };
    let mut set = |k: &str, v: String| cfg.set(k, &v);
    if let Some(s) = common.seed {
        set("seed", s.to_string())?;
    }
    if let Some(n) = common.trials {
        set("n_trials", n.to_string())?;
    }
    if let Some(d) = common.duration {
        set("duration_s", d.to_string())?;
    }
    if let Some(v) = common.visibility {
        set("visibility", v.to_string())?;
    }
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError::Invalid(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        set(k.trim(), v.trim().to_string())?;
    }
    Ok(cfg)
}

fn apply_attack(cfg: &mut RunConfig, a: &AttackArgs) -> Result<(), ConfigError> {
    if let Some(m) = &a.mode {
        cfg.set("attack.mode", m)?;
    }
    if let Some(p) = &a.plane {
        cfg.set("attack.plane", p)?;
    }
    if let Some(x) = a.angle {
        cfg.set("attack.angle", &x.to_string())?;
    }
    if let Some(f) = a.fraction {
        cfg.set("attack.fraction", &f.to_string())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Keygen { common, attack, out } => {
            let mut cfg = load(&common)?;
            apply_attack(&mut cfg, &attack)?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            cfg.validate()?;
            let report = cmd_keygen(&cfg, &cfg.output_dir)?;
            print!("{}", report.to_kv());
        }
        Command::AttackSweep {
            common,
            plane,
            grid,
            mode,
            fraction,
            csv,
        } => {
            let mut cfg = load(&common)?;
            if let Some(p) = plane {
                cfg.set("sweep.plane", &p)?;
            }
            if let Some(g) = grid {
                cfg.set("sweep.grid", &g)?;
            }
            if let Some(m) = mode {
                cfg.set("sweep.mode", &m)?;
            }
            if let Some(f) = fraction {
                cfg.set("attack.fraction", &f.to_string())?;
            }
            let (_, table) = cmd_attack_sweep(&cfg)?;
            match csv {
                Some(path) => io::write_text(&path, &table)?,
                None => print!("{table}"),
            }
        }
        Command::Theory { common, attack } => {
            let mut cfg = load(&common)?;
            apply_attack(&mut cfg, &attack)?;
            print!("{}", cmd_theory(&cfg)?);
        }
        Command::Report { out, csv } => {
            let report = cmd_report(&out)?;
            if let Some(path) = csv {
                io::write_text(
                    &path,
                    &format!(
                        "{}\n{}\n",
                        ekert::postprocess::SessionReport::csv_header(),
                        report.to_csv_row()
                    ),
                )?;
            }
            print!("{}", report.to_kv());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
