//! Linear Kalman filter on a simulated series, with the gain and Joseph-form
//! checks for every step.
//!
//! cargo run --example kalman_filter

use driftbench::kalman::{joseph_covariance, kf_run};
use driftbench::statespace::{
    build_matrices, load_params, simulate, substitute_raw, RhoPolicy, State,
};

fn main() -> driftbench::Result<()> {
    let m = build_matrices(&load_params(&substitute_raw(), RhoPolicy::Reject)?.params)?;
    let t = simulate(&m, &State::new(2.0451, 0.4), 65, 7)?;
    let recs = kf_run(&m, &t.observations(), None)?;

    let mut worst_joseph = 0.0f64;
    for (r, truth) in recs.iter().zip(t.states()) {
        let joseph = joseph_covariance(&r.prior.cov, &r.gain, &m.h, &m.v2)?;
        worst_joseph = worst_joseph.max((joseph - &r.posterior.cov).amax());
        println!(
            "est X {:>8.4} (true {:>8.4})   est dR {:>8.4} (true {:>8.4})   innovation {:>8.4} {:>8.4}",
            r.posterior.mean[0], truth.dividend_yield, r.posterior.mean[1], truth.real_return, r.innovation[0], r.innovation[1]
        );
    }
    println!("largest short-form vs Joseph gap: {worst_joseph:.2e}");
    Ok(())
}
