//! How S and the key error rate move as Eve intercepts a growing share of pairs.

use ekert::eavesdrop::AttackSpec;
use ekert::qstate::{predicted_observables, Plane, PoincarePoint};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let basis = PoincarePoint::new(Plane::A, 0.0);
    println!("fraction  S_dephase  BER_dephase  S_filter  BER_filter");
    for k in 0..=10 {
        let f = k as f64 / 10.0;
        let d = predicted_observables(&AttackSpec::dephase(basis).with_fraction(f), 1.0)?;
        let g = predicted_observables(&AttackSpec::filter(basis).with_fraction(f), 1.0)?;
        println!("{f:8.1}  {:+9.5}  {:11.5}  {:+8.5}  {:10.5}", d.s, d.ber_avg, g.s, g.ber_avg);
    }
    let edge = 2.0 - std::f64::consts::SQRT_2;
    let o = predicted_observables(&AttackSpec::dephase(basis).with_fraction(edge), 1.0)?;
    println!("|S| reaches 2 at fraction {edge:.6}, where BER is {:.6}", o.ber_avg);
    Ok(())
}
