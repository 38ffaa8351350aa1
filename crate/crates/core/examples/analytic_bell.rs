//! Closed-form correlations, S and S′ of the ideal and visibility-degraded source.

use ekert::qstate::{
    bell_s, bell_s_prime, coincidence_probs, correlation_e, phi_plus, visibility_mix, ALICE_ANGLES, BOB_ANGLES,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ideal = phi_plus();
    println!("correlations of the ideal pair state:");
    for (i, &a) in ALICE_ANGLES.iter().enumerate() {
        let row: Vec<String> = BOB_ANGLES
            .iter()
            .map(|&b| format!("{:+.4}", correlation_e(&coincidence_probs(&ideal, a, b)).unwrap_or(f64::NAN)))
            .collect();
        println!("  a{} {}", i + 1, row.join(" "));
    }
    for v in [1.0, 0.9388, 0.8, 1.0 / std::f64::consts::SQRT_2] {
        let rho = visibility_mix(&ideal, v)?;
        println!("V={v:.4}  S={:+.5}  S'={:+.5}", bell_s(&rho), bell_s_prime(&rho));
    }
    Ok(())
}
