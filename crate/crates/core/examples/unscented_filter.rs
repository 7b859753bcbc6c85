//! Unscented filter in both noise modes: additive (matches the linear filter
//! on this model) and per-point noise injection.
//!
//! cargo run --example unscented_filter

use driftbench::cli::rmse;
use driftbench::kalman::kf_run;
use driftbench::statespace::{
    build_matrices, load_params, simulate, substitute_raw, RhoPolicy, State,
};
use driftbench::ukf::{ukf_run, UkfConfig};

fn main() -> driftbench::Result<()> {
    let m = build_matrices(&load_params(&substitute_raw(), RhoPolicy::Reject)?.params)?;
    let t = simulate(&m, &State::new(2.0451, 0.4), 65, 7)?;
    let obs = t.observations();
    let truth: Vec<f64> = t.states().iter().map(|s| s.real_return).collect();

    let kf: Vec<f64> = kf_run(&m, &obs, None)?
        .iter()
        .map(|r| r.posterior.mean[1])
        .collect();
    println!(
        "kf                       return rmse {:.4}",
        rmse(&kf, &truth)?
    );

    for (label, cfg) in [
        ("ukf additive", UkfConfig::default()),
        (
            "ukf injected, 200 pts",
            UkfConfig {
                w0: 0.0,
                sigma_count: 100,
                noise_injection: true,
                seed: 7,
                ..UkfConfig::default()
            },
        ),
    ] {
        let est: Vec<f64> = ukf_run(&m, &obs, &cfg)?
            .iter()
            .map(|r| r.posterior.mean[1])
            .collect();
        println!("{label:<24} return rmse {:.4}", rmse(&est, &truth)?);
    }
    Ok(())
}
