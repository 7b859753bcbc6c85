use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::data::{load_series, write_results, write_series, ResultFrame, ResultRow, SeriesFrame};
use crate::error::{Error, Result};
use crate::kalman::kf_run;
use crate::pflow::pff_run;
use crate::statespace::{simulate, Observation, State};
use crate::ukf::ukf_run;

use super::config::{DataSource, FilterKind, Settings};

/// Observations to filter, with the hidden states when they are known.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub truth: Option<Vec<State>>,
}

pub fn load_dataset(s: &Settings) -> Result<Dataset> {
    match &s.source {
        DataSource::File(path) => {
            let frame = load_series(path)?;
            Ok(Dataset {
                observations: frame.observations(),
                truth: None,
            })
        }
        DataSource::Simulation { z0, n_steps } => {
            let t = simulate(&s.model, z0, *n_steps, s.seed)?;
            Ok(Dataset {
                observations: t.observations(),
                truth: Some(t.states()),
            })
        }
    }
}

/// Posterior means of one filter over the whole series.
pub fn run_filter(s: &Settings, filter: FilterKind, obs: &[Observation]) -> Result<Vec<State>> {
    Ok(match filter {
        FilterKind::Kf => kf_run(&s.model, obs, s.kalman_init.clone())?
            .iter()
            .map(|r| State::from_vector(&r.posterior.mean))
            .collect(),
        FilterKind::Ukf => ukf_run(&s.model, obs, &s.ukf)?
            .iter()
            .map(|r| State::from_vector(&r.posterior.mean))
            .collect(),
        FilterKind::Pff => pff_run(&s.model, obs, &s.flow)?
            .iter()
            .map(|r| State::from_vector(&r.posterior.mean))
            .collect(),
    })
}

pub fn result_rows(filter: FilterKind, data: &Dataset, estimates: &[State]) -> Vec<ResultRow> {
    estimates
        .iter()
        .enumerate()
        .map(|(step, est)| ResultRow {
            step,
            filter: filter.tag().to_string(),
            observed: data.observations[step],
            estimate: *est,
            truth: data.truth.as_ref().map(|t| t[step]),
        })
        .collect()
}

/// Root-mean-square difference of two equal-length sequences.
pub fn rmse(estimates: &[f64], reference: &[f64]) -> Result<f64> {
    if estimates.len() != reference.len() {
        return Err(Error::Dimension(format!(
            "rmse over sequences of length {} and {}",
            estimates.len(),
            reference.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::Dimension("rmse of empty sequences".into()));
    }
    let sum: f64 = estimates
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - r).powi(2))
        .sum();
    Ok((sum / estimates.len() as f64).sqrt())
}

/// What an RMSE was measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reference {
    Truth,
    /// No truth available: estimate minus observation.
    ObservationResidual,
}

impl Reference {
    pub fn label(self) -> &'static str {
        match self {
            Reference::Truth => "truth",
            Reference::ObservationResidual => "observation_residual",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metric {
    pub filter: String,
    pub variable: &'static str,
    pub reference: Reference,
    pub rmse: f64,
}

/// Per-filter, per-variable RMSE for every filter present in `frame`.
pub fn metrics(frame: &ResultFrame, filters: &[FilterKind]) -> Result<Vec<Metric>> {
    let mut out = Vec::new();
    for f in filters {
        let rows: Vec<&ResultRow> = frame.filter_rows(f.tag()).collect();
        let (reference, refs): (Reference, Vec<(f64, f64)>) =
            if rows.iter().all(|r| r.truth.is_some()) {
                let t = rows
                    .iter()
                    .filter_map(|r| r.truth)
                    .map(|t| (t.dividend_yield, t.real_return));
                (Reference::Truth, t.collect())
            } else {
                let o = rows
                    .iter()
                    .map(|r| (r.observed.dividend_yield, r.observed.real_return));
                (Reference::ObservationResidual, o.collect())
            };
        let est_y: Vec<f64> = rows.iter().map(|r| r.estimate.dividend_yield).collect();
        let est_r: Vec<f64> = rows.iter().map(|r| r.estimate.real_return).collect();
        let ref_y: Vec<f64> = refs.iter().map(|p| p.0).collect();
        let ref_r: Vec<f64> = refs.iter().map(|p| p.1).collect();
        for (variable, est, r) in [("yield", &est_y, &ref_y), ("return", &est_r, &ref_r)] {
            out.push(Metric {
                filter: f.tag().to_string(),
                variable,
                reference,
                rmse: rmse(est, r)?,
            });
        }
    }
    Ok(out)
}

pub fn write_metrics(metrics: &[Metric], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(fs::File::create(path).map_err(Error::file(path))?);
    w.write_record(["filter", "variable", "reference", "rmse"])?;
    for m in metrics {
        w.write_record([
            m.filter.as_str(),
            m.variable,
            m.reference.label(),
            &m.rmse.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn metrics_table(metrics: &[Metric]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<6} {:<8} {:<22} {:>14}",
        "filter", "variable", "reference", "rmse"
    );
    for m in metrics {
        let _ = writeln!(
            s,
            "{:<6} {:<8} {:<22} {:>14.6e}",
            m.filter,
            m.variable,
            m.reference.label(),
            m.rmse
        );
    }
    s
}

/// Gnuplot script drawing observed, true and estimated paths from `csv`.
pub fn plot_script(csv: &str, filters: &[FilterKind], has_truth: bool) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set terminal pngcairo size 1100,700");
    let _ = writeln!(s, "set xlabel 'step'");
    let _ = writeln!(s, "set key outside right");
    let first = filters.first().map_or("kf", |f| f.tag());
    for (name, obs_col, est_col, true_col) in [("yield", 3, 5, 7), ("return", 4, 6, 8)] {
        let _ = writeln!(s);
        let _ = writeln!(s, "set output '{name}.png'");
        let _ = writeln!(s, "set ylabel '{name}'");
        let mut series = vec![format!(
            "'{csv}' every ::1 using 1:(strcol(2) eq '{first}' ? ${obs_col} : NaN) with points pt 7 ps 0.6 title 'observed'"
        )];
        if has_truth {
            series.push(format!(
                "'' every ::1 using 1:(strcol(2) eq '{first}' ? ${true_col} : NaN) with lines lw 2 title 'true'"
            ));
        }
        for f in filters {
            let tag = f.tag();
            series.push(format!("'' every ::1 using 1:(strcol(2) eq '{tag}' ? ${est_col} : NaN) with lines title '{tag}'"));
        }
        let _ = writeln!(s, "plot {}", series.join(", \\\n     "));
    }
    s
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::file(dir))?;
    Ok(())
}

fn report_warnings(s: &Settings) {
    for w in &s.warnings {
        eprintln!("warning: {w}");
    }
}

/// Writes `series.csv` and `truth.csv`; returns their paths.
pub fn cmd_simulate(s: &Settings) -> Result<Vec<PathBuf>> {
    let DataSource::Simulation { z0, n_steps } = &s.source else {
        return Err(Error::config(
            "simulation",
            "simulate needs a simulation source, not --input",
        ));
    };
    report_warnings(s);
    let t = simulate(&s.model, z0, *n_steps, s.seed)?;
    prepare_out(&s.out)?;
    let series = s.out.join("series.csv");
    let truth = s.out.join("truth.csv");
    write_series(&SeriesFrame::from_observations(&t.observations()), &series)?;
    write_series(&SeriesFrame::from_states(&t.states()), &truth)?;
    println!("seed {}", s.seed);
    println!("rows {}", t.len());
    println!("wrote {}", series.display());
    println!("wrote {}", truth.display());
    Ok(vec![series, truth])
}

/// Writes `results_<filter>.csv` and `metrics_<filter>.csv`.
pub fn cmd_filter(s: &Settings) -> Result<Vec<PathBuf>> {
    report_warnings(s);
    let data = load_dataset(s)?;
    let est = run_filter(s, s.filter, &data.observations)?;
    let frame = ResultFrame {
        rows: result_rows(s.filter, &data, &est),
    };
    let m = metrics(&frame, &[s.filter])?;
    prepare_out(&s.out)?;
    let results = s.out.join(format!("results_{}.csv", s.filter));
    let metrics_path = s.out.join(format!("metrics_{}.csv", s.filter));
    write_results(&frame, &results)?;
    write_metrics(&m, &metrics_path)?;
    println!("seed {}", s.seed);
    println!("filter {} over {} steps", s.filter, frame.len());
    print!("{}", metrics_table(&m));
    println!("wrote {}", results.display());
    println!("wrote {}", metrics_path.display());
    Ok(vec![results, metrics_path])
}

/// Runs all three filters on one series; writes `compare.csv`,
/// `metrics.csv` and `plot.gp`.
pub fn cmd_compare(s: &Settings) -> Result<Vec<PathBuf>> {
    report_warnings(s);
    let data = load_dataset(s)?;
    let mut frame = ResultFrame::default();
    for f in FilterKind::ALL {
        let est = run_filter(s, f, &data.observations)?;
        frame.rows.extend(result_rows(f, &data, &est));
    }
    let m = metrics(&frame, &FilterKind::ALL)?;
    prepare_out(&s.out)?;
    let results = s.out.join("compare.csv");
    let metrics_path = s.out.join("metrics.csv");
    let plot = s.out.join("plot.gp");
    write_results(&frame, &results)?;
    write_metrics(&m, &metrics_path)?;
    fs::write(
        &plot,
        plot_script("compare.csv", &FilterKind::ALL, data.truth.is_some()),
    )
    .map_err(Error::file(&plot))?;
    println!("seed {}", s.seed);
    println!("rows {}", frame.len());
    print!("{}", metrics_table(&m));
    println!("wrote {}", results.display());
    println!("wrote {}", metrics_path.display());
    println!("wrote {}", plot.display());
    Ok(vec![results, metrics_path, plot])
}
