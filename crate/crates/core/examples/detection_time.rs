//! Collection time needed before the Bell violation certifies the channel.

use ekert::config::RunConfig;
use ekert::postprocess::detection_time;
use ekert::protocol::run_session;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for seed in 1..=5 {
        let mut cfg = RunConfig::default();
        cfg.set("seed", &seed.to_string())?;
        cfg.set("duration_s", "30")?;
        let session = cfg.session();
        let data = run_session(&session)?;
        let rate = data.trials.len() as f64 / session.duration_s();
        let d = detection_time(&data.trials, rate, cfg.detect.threshold, cfg.detect.k_sigma)?;
        match d.seconds() {
            Some(t) => println!("seed {seed}: certified after {t:.2} s"),
            None => println!("seed {seed}: not certified within 30 s"),
        }
    }
    Ok(())
}
