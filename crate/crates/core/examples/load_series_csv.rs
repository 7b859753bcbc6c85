//! Loads an observation CSV (`year,yield,return`) and filters it. Without an
//! argument a small series is written to a temporary file first.
//!
//! cargo run --example load_series_csv [path.csv]

use std::path::PathBuf;

use driftbench::data::{load_series, write_series, SeriesFrame};
use driftbench::kalman::kf_run;
use driftbench::statespace::{
    build_matrices, load_params, simulate, substitute_raw, RhoPolicy, State,
};

fn main() -> driftbench::Result<()> {
    let m = build_matrices(&load_params(&substitute_raw(), RhoPolicy::Reject)?.params)?;
    let path = match std::env::args().nth(1) {
        Some(p) => PathBuf::from(p),
        None => {
            let p = std::env::temp_dir().join("driftbench-series.csv");
            let t = simulate(&m, &State::new(2.0451, 0.4), 20, 3)?;
            let mut frame = SeriesFrame::from_observations(&t.observations());
            for r in &mut frame.rows {
                r.year += 1945;
            }
            write_series(&frame, &p)?;
            p
        }
    };

    let series = load_series(&path)?;
    println!("{}: {} rows", path.display(), series.len());
    let recs = kf_run(&m, &series.observations(), None)?;
    for (row, r) in series.rows.iter().zip(&recs) {
        println!(
            "{} obs {:>8.4} {:>8.4}  est {:>8.4} {:>8.4}",
            row.year, row.dividend_yield, row.real_return, r.posterior.mean[0], r.posterior.mean[1]
        );
    }
    Ok(())
}
