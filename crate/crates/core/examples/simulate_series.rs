//! Simulates 65 years of dividend yield and real return and prints them.
//!
//! cargo run --example simulate_series

use driftbench::statespace::{
    build_matrices, load_params, simulate, substitute_raw, RhoPolicy, State,
};

fn main() -> driftbench::Result<()> {
    let loaded = load_params(&substitute_raw(), RhoPolicy::Reject)?;
    println!("{}", loaded.params);
    let m = build_matrices(&loaded.params)?;

    let t = simulate(&m, &State::new(2.0451, 0.4), 65, 7)?;
    println!(
        "{:>4} {:>10} {:>10} {:>10} {:>10}",
        "n", "X", "dR", "obs X", "obs dR"
    );
    for r in &t.records {
        println!(
            "{:>4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            r.index,
            r.state.dividend_yield,
            r.state.real_return,
            r.observation.dividend_yield,
            r.observation.real_return
        );
    }
    Ok(())
}
