//! Runs all three filters on one series and writes the combined result CSV,
//! the metrics table and a gnuplot script into a temporary directory.
//!
//! cargo run --example compare_filters [out-dir]

use std::path::PathBuf;

use driftbench::cli::{cmd_compare, Overrides, RunConfig, Settings};
use driftbench::statespace::substitute_raw;

fn main() -> driftbench::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("driftbench-compare"));
    let cfg = RunConfig {
        params: Some(substitute_raw()),
        ..RunConfig::default()
    };
    let ov = Overrides {
        seed: Some(7),
        z0: Some([2.0451, 0.4]),
        n_steps: Some(65),
        out: Some(out),
        ..Overrides::default()
    };
    cmd_compare(&Settings::resolve(&cfg, &ov)?)?;
    Ok(())
}
