//! Finite-difference gradient verification of the autodiff engine and of
//! each network module, in 64-bit precision.
//!
//! cargo run --example gradient_check -- [SEED]

use std::time::Instant;

use estinet::verify::{check, CheckTarget, GRADCHECK_TOLERANCE};

fn main() -> estinet::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let start = Instant::now();
    for target in CheckTarget::ALL {
        let report = check(target, seed)?;
        let worst = report.worst().map(|e| e.name.as_str()).unwrap_or("-");
        let checked: usize = report.entries.iter().map(|e| e.checked).sum();
        println!(
            "{:<7} {} max rel error {:.2e} over {checked} entries (worst: {worst})",
            target.to_string(),
            if report.passes(GRADCHECK_TOLERANCE) {
                "PASS"
            } else {
                "FAIL"
            },
            report.max_error(),
        );
    }
    println!("finished in {:.2} s", start.elapsed().as_secs_f64());
    Ok(())
}
