//! CSV input series and filter result files.
//!
//! Input schema, one row per year:
//!
//! ```text
//! year,yield,return
//! 1945,4.12,0.31
//! ```
//!
//! Result schema, one row per step per filter, truth cells left empty when
//! no truth is known:
//!
//! ```text
//! step,filter,obs_yield,obs_return,est_yield,est_return,true_yield,true_return
//! ```
//!
//! Numbers are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every `f64` bit for bit. Units are whatever
//! the data uses; model parameters have to match.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::statespace::{Observation, State};

pub const SERIES_HEADER: [&str; 3] = ["year", "yield", "return"];

pub const RESULT_HEADER: [&str; 8] = [
    "step",
    "filter",
    "obs_yield",
    "obs_return",
    "est_yield",
    "est_return",
    "true_yield",
    "true_return",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesRow {
    pub year: i64,
    pub dividend_yield: f64,
    pub real_return: f64,
}

/// Observed series with strictly increasing years and finite values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesFrame {
    pub rows: Vec<SeriesRow>,
}

impl SeriesFrame {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.rows
            .iter()
            .map(|r| Observation::new(r.dividend_yield, r.real_return))
            .collect()
    }

    /// Rows numbered `0, 1, ...` from a sequence of observations.
    pub fn from_observations(obs: &[Observation]) -> Self {
        Self {
            rows: obs
                .iter()
                .enumerate()
                .map(|(i, o)| SeriesRow {
                    year: i as i64,
                    dividend_yield: o.dividend_yield,
                    real_return: o.real_return,
                })
                .collect(),
        }
    }

    /// Rows numbered `0, 1, ...` from a sequence of hidden states.
    pub fn from_states(states: &[State]) -> Self {
        Self {
            rows: states
                .iter()
                .enumerate()
                .map(|(i, s)| SeriesRow {
                    year: i as i64,
                    dividend_yield: s.dividend_yield,
                    real_return: s.real_return,
                })
                .collect(),
        }
    }
}

fn parse_field<T: std::str::FromStr>(raw: &str, name: &str, line: u64) -> Result<T> {
    raw.trim().parse().map_err(|_| Error::Data {
        line,
        message: format!("column `{name}`: cannot parse `{raw}` as a number"),
    })
}

fn finite(value: f64, name: &str, line: u64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Data {
            line,
            message: format!("column `{name}` is not finite"),
        })
    }
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let names: Vec<&str> = found.iter().map(str::trim).collect();
    if names == expected {
        Ok(())
    } else {
        Err(Error::Data {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                names.join(",")
            ),
        })
    }
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(input)
}

/// Parses a series from any reader. Line numbers in errors are 1-based and
/// count the header.
pub fn read_series<R: Read>(input: R) -> Result<SeriesFrame> {
    let mut rdr = reader(input);
    let header = rdr.headers()?.clone();
    if header.is_empty() {
        return Err(Error::NoData);
    }
    check_header(&header, &SERIES_HEADER)?;

    let mut rows: Vec<SeriesRow> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != SERIES_HEADER.len() {
            return Err(Error::Data {
                line,
                message: format!(
                    "expected {} columns, found {}",
                    SERIES_HEADER.len(),
                    record.len()
                ),
            });
        }
        let year: i64 = parse_field(&record[0], "year", line)?;
        let row = SeriesRow {
            year,
            dividend_yield: finite(parse_field(&record[1], "yield", line)?, "yield", line)?,
            real_return: finite(parse_field(&record[2], "return", line)?, "return", line)?,
        };
        if let Some(prev) = rows.last() {
            if row.year <= prev.year {
                let what = if row.year == prev.year {
                    "duplicate"
                } else {
                    "non-increasing"
                };
                return Err(Error::Data {
                    line,
                    message: format!("{what} year {} after {}", row.year, prev.year),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::NoData);
    }
    Ok(SeriesFrame { rows })
}

pub fn load_series(path: &Path) -> Result<SeriesFrame> {
    read_series(File::open(path).map_err(Error::file(path))?)
}

pub fn write_series_to<W: Write>(frame: &SeriesFrame, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SERIES_HEADER)?;
    for r in &frame.rows {
        w.write_record([
            r.year.to_string(),
            r.dividend_yield.to_string(),
            r.real_return.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_series(frame: &SeriesFrame, path: &Path) -> Result<()> {
    write_series_to(frame, File::create(path).map_err(Error::file(path))?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub step: usize,
    pub filter: String,
    pub observed: Observation,
    pub estimate: State,
    pub truth: Option<State>,
}

/// Filter output, one row per step per filter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultFrame {
    pub rows: Vec<ResultRow>,
}

impl ResultFrame {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows for one filter tag, in file order.
    pub fn filter_rows<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = &'a ResultRow> + 'a {
        self.rows.iter().filter(move |r| r.filter == tag)
    }

    fn validate(&self) -> Result<()> {
        for (i, r) in self.rows.iter().enumerate() {
            let mut values = vec![
                r.observed.dividend_yield,
                r.observed.real_return,
                r.estimate.dividend_yield,
                r.estimate.real_return,
            ];
            if let Some(t) = &r.truth {
                values.extend([t.dividend_yield, t.real_return]);
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical(format!(
                    "result row {i} ({} step {}) has non-finite values",
                    r.filter, r.step
                )));
            }
        }
        Ok(())
    }
}

pub fn write_results_to<W: Write>(frame: &ResultFrame, out: W) -> Result<()> {
    frame.validate()?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_HEADER)?;
    for r in &frame.rows {
        let (ty, tr) = match &r.truth {
            Some(t) => (t.dividend_yield.to_string(), t.real_return.to_string()),
            None => (String::new(), String::new()),
        };
        w.write_record([
            r.step.to_string(),
            r.filter.clone(),
            r.observed.dividend_yield.to_string(),
            r.observed.real_return.to_string(),
            r.estimate.dividend_yield.to_string(),
            r.estimate.real_return.to_string(),
            ty,
            tr,
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_results(frame: &ResultFrame, path: &Path) -> Result<()> {
    write_results_to(frame, File::create(path).map_err(Error::file(path))?)
}

pub fn read_results_from<R: Read>(input: R) -> Result<ResultFrame> {
    let mut rdr = reader(input);
    check_header(rdr.headers()?, &RESULT_HEADER)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != RESULT_HEADER.len() {
            return Err(Error::Data {
                line,
                message: format!(
                    "expected {} columns, found {}",
                    RESULT_HEADER.len(),
                    record.len()
                ),
            });
        }
        let num = |i: usize| parse_field::<f64>(&record[i], RESULT_HEADER[i], line);
        let truth = match (record[6].trim().is_empty(), record[7].trim().is_empty()) {
            (true, true) => None,
            (false, false) => Some(State::new(num(6)?, num(7)?)),
            _ => {
                return Err(Error::Data {
                    line,
                    message: "truth columns must both be filled or both be empty".into(),
                })
            }
        };
        rows.push(ResultRow {
            step: parse_field(&record[0], "step", line)?,
            filter: record[1].trim().to_string(),
            observed: Observation::new(num(2)?, num(3)?),
            estimate: State::new(num(4)?, num(5)?),
            truth,
        });
    }
    Ok(ResultFrame { rows })
}

pub fn read_results(path: &Path) -> Result<ResultFrame> {
    read_results_from(File::open(path).map_err(Error::file(path))?)
}
