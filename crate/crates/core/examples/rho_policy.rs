//! The tabulated correlation |rho| > 1 makes the plant-noise matrix
//! indefinite. Shows the rejection diagnostic and the clamp fallback.
//!
//! cargo run --example rho_policy

use driftbench::statespace::{cct_determinant, load_params, tabulated_raw, RhoPolicy};

fn main() {
    let raw = tabulated_raw();
    match load_params(&raw, RhoPolicy::Reject) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("reject: {e} (exit code {})", e.exit_code()),
    }
    match load_params(&raw, RhoPolicy::Clamp) {
        Ok(loaded) => {
            for w in &loaded.warnings {
                println!("clamp: {w}");
            }
            println!(
                "clamped det(CC^T) = {:.3e}",
                cct_determinant(&loaded.params)
            );
        }
        Err(e) => println!("clamp failed: {e}"),
    }
}
