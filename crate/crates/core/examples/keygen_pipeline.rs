//! Full session: simulate, sift, reconcile, amplify and report.

use ekert::config::RunConfig;
use ekert::pipeline::run_keygen;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = RunConfig::default();
    cfg.set("duration_s", "600")?;
    let (data, out) = run_keygen(&cfg)?;
    let r = &out.report;
    println!("windows {}  usable trials {}", data.stats.windows, data.trials.len());
    println!("raw key {} bits at {:.3}/s, BER {:.4}", r.n_raw, r.raw_rate(), r.ber);
    println!("S {:+.4} ± {:.4}  S' {:+.4} ± {:.4}", r.bell.s, r.bell.s_sigma, r.bell.s_prime, r.bell.s_prime_sigma);
    println!("reconciled {} bits after {} parities", r.n_ec, r.bits_disclosed);
    println!("final key {} bits at {:.3}/s", r.n_final, r.net_rate());
    Ok(())
}
