//! Particle flow filter over a simulated series, sweeping the likelihood
//! covariance scale.
//!
//! cargo run --example particle_flow

use driftbench::cli::rmse;
use driftbench::pflow::{pff_run, FlowConfig};
use driftbench::statespace::{
    build_matrices, load_params, simulate, substitute_raw, RhoPolicy, State,
};

fn main() -> driftbench::Result<()> {
    let m = build_matrices(&load_params(&substitute_raw(), RhoPolicy::Reject)?.params)?;
    let t = simulate(&m, &State::new(2.0451, 0.4), 65, 7)?;
    let obs = t.observations();
    let truth_x: Vec<f64> = t.states().iter().map(|s| s.dividend_yield).collect();
    let truth_r: Vec<f64> = t.states().iter().map(|s| s.real_return).collect();

    for scale in [1.0, 4.0, 16.0] {
        let cfg = FlowConfig {
            sigma2_scale: scale,
            seed: 7,
            ..FlowConfig::default()
        };
        let recs = pff_run(&m, &obs, &cfg)?;
        let x: Vec<f64> = recs.iter().map(|r| r.posterior.mean[0]).collect();
        let r: Vec<f64> = recs.iter().map(|r| r.posterior.mean[1]).collect();
        println!(
            "sigma2_scale {scale:>4}: yield rmse {:.4}, return rmse {:.4}",
            rmse(&x, &truth_x)?,
            rmse(&r, &truth_r)?
        );
    }
    Ok(())
}
