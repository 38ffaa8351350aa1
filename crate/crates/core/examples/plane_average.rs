//! Mean |S| and key error rate over each plane of attack bases.

use ekert::eavesdrop::{plane_average, AttackMode};
use ekert::qstate::Plane;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for plane in [Plane::A, Plane::B, Plane::C] {
        for mode in [AttackMode::Filter, AttackMode::Dephase] {
            let avg = plane_average(plane, mode, 360)?;
            println!("plane {} {:8}  <|S|> {:.6}  <BER> {:.6}", plane.label(), mode.label(), avg.avg_abs_s, avg.avg_ber);
        }
    }
    Ok(())
}
