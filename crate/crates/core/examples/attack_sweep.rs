//! Analytic and Monte-Carlo observables as Eve rotates her basis around a plane.

use ekert::eavesdrop::{default_grid, sweep, AttackMode, SweepConfig};
use ekert::io::sweep_to_csv;
use ekert::qstate::Plane;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let plane = match std::env::args().nth(1).as_deref() {
        Some("B") => Plane::B,
        Some("C") => Plane::C,
        _ => Plane::A,
    };
    let mut cfg = SweepConfig::new(plane, default_grid(plane), AttackMode::Dephase);
    cfg.trials_per_point = 5000;
    cfg.visibility = 1.0;
    print!("{}", sweep_to_csv(&sweep(&cfg)?));
    Ok(())
}
