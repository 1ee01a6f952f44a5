//! Analytic Jacobians against central differences on seeded smooth images.
//!
//! Run with `cargo run --release --example jacobian_check`.

use gradfield::metrics::{check_jacobians, JacobianCheckConfig, CHECKED_KINDS};

fn main() -> gradfield::Result<()> {
    let cfg = JacobianCheckConfig::default();
    for check in check_jacobians(&CHECKED_KINDS, &cfg)? {
        let worst = check.worst().expect("samples drawn");
        println!(
            "{:>5}: {}/{} under {:e}, worst {:.2e} at ({}, {}){}",
            check.kind.name(),
            check.passed(),
            check.samples.len(),
            check.tolerance,
            worst.rel_error,
            worst.at.x,
            worst.at.y,
            if worst.straddles_branch {
                " across a branch switch"
            } else {
                ""
            }
        );
    }
    Ok(())
}
