//! CSV readers and writers for observations, trajectories, sweeps and
//! validator reports.
//!
//! Floats are written in the shortest form that parses back to the same
//! binary64 value, so every file round-trips exactly.
//!
//! Observation files hold one record per line, `t,n,indices,values`, where
//! `indices` are 1-based coordinates and both lists are `;`-separated:
//!
//! ```text
//! t,n,indices,values
//! 1,5,1;3;4,0.5;-1.25;2
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::SweepCell;
use crate::lab::{ConcentrationRow, ResidualRow};
use crate::partial::Observation;
use crate::trajectory::TrialResult;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub t: usize,
    pub epsilon: Option<f64>,
    pub gate_passed: Option<bool>,
    pub norm_r: Option<f64>,
    pub norm_p: Option<f64>,
    pub theta: Option<f64>,
}

/// Row `t` carries `ε_t` and the summary of the step that produced it; row 0
/// has only `ε_0`.
pub fn trajectory_rows(result: &TrialResult) -> Vec<TrajectoryRow> {
    let iters = result.steps.len();
    (0..=iters)
        .map(|t| {
            let step = t.checked_sub(1).map(|i| &result.steps[i]);
            TrajectoryRow {
                t,
                epsilon: result.epsilons.get(t).copied(),
                gate_passed: step.and_then(|s| s.gate_passed),
                norm_r: step.map(|s| s.norm_r),
                norm_p: step.map(|s| s.norm_p),
                theta: step.map(|s| s.theta),
            }
        })
        .collect()
}

fn write_rows<W: Write, T: Serialize>(writer: W, rows: &[T], header: &[&str]) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    out.write_record(header)?;
    for row in rows {
        out.serialize(row)?;
    }
    out.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: for<'de> Deserialize<'de>>(reader: R, header: &[&str]) -> Result<Vec<T>> {
    let mut input = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let found: Vec<String> = input.headers()?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(Error::Parse(format!(
            "expected header {}, found {}",
            header.join(","),
            found.join(",")
        )));
    }
    input
        .deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

const TRAJECTORY_HEADER: [&str; 6] = ["t", "epsilon", "gate_passed", "norm_r", "norm_p", "theta"];

pub fn write_trajectory<W: Write>(writer: W, result: &TrialResult) -> Result<()> {
    write_rows(writer, &trajectory_rows(result), &TRAJECTORY_HEADER)
}

pub fn read_trajectory<R: Read>(reader: R) -> Result<Vec<TrajectoryRow>> {
    read_rows(reader, &TRAJECTORY_HEADER)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub d: usize,
    pub q: usize,
    pub trials: usize,
    /// Empty for infeasible cells.
    #[serde(rename = "mean_X")]
    pub mean_x: Option<f64>,
    #[serde(rename = "std_X")]
    pub std_x: Option<f64>,
}

impl From<&SweepCell> for SweepRow {
    fn from(c: &SweepCell) -> Self {
        SweepRow {
            n: c.n,
            d: c.d,
            q: c.q,
            trials: c.trials,
            mean_x: c.mean_x,
            std_x: c.std_x,
        }
    }
}

const SWEEP_HEADER: [&str; 6] = ["n", "d", "q", "trials", "mean_X", "std_X"];

pub fn write_sweep<W: Write>(writer: W, cells: &[SweepCell]) -> Result<()> {
    let rows: Vec<SweepRow> = cells.iter().map(SweepRow::from).collect();
    write_rows(writer, &rows, &SWEEP_HEADER)
}

pub fn read_sweep<R: Read>(reader: R) -> Result<Vec<SweepRow>> {
    read_rows(reader, &SWEEP_HEADER)
}

const CONCENTRATION_HEADER: [&str; 4] = ["trial", "eig_min", "eig_max", "in_window"];

pub fn write_concentration<W: Write>(writer: W, rows: &[ConcentrationRow]) -> Result<()> {
    write_rows(writer, rows, &CONCENTRATION_HEADER)
}

pub fn read_concentration<R: Read>(reader: R) -> Result<Vec<ConcentrationRow>> {
    read_rows(reader, &CONCENTRATION_HEADER)
}

const RESIDUAL_HEADER: [&str; 4] = ["trial", "lhs", "rhs", "violated"];

pub fn write_residual<W: Write>(writer: W, rows: &[ResidualRow]) -> Result<()> {
    write_rows(writer, rows, &RESIDUAL_HEADER)
}

pub fn read_residual<R: Read>(reader: R) -> Result<Vec<ResidualRow>> {
    read_rows(reader, &RESIDUAL_HEADER)
}

const OBSERVATION_HEADER: [&str; 4] = ["t", "n", "indices", "values"];

#[derive(Serialize, Deserialize)]
struct ObservationRecord {
    t: usize,
    n: usize,
    indices: String,
    values: String,
}

fn join<T: ToString>(items: impl Iterator<Item = T>) -> String {
    items.map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

fn split<T: std::str::FromStr>(field: &str, what: &str, t: usize) -> Result<Vec<T>> {
    if field.trim().is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(';')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::InvalidObservation(format!("record t={t}: bad {what} entry {s:?}")))
        })
        .collect()
}

/// Writes observations with 1-based indices; `t` counts from 1.
pub fn write_observations<W: Write>(writer: W, observations: &[Observation]) -> Result<()> {
    let rows: Vec<ObservationRecord> = observations
        .iter()
        .enumerate()
        .map(|(i, obs)| ObservationRecord {
            t: i + 1,
            n: obs.n(),
            indices: join(obs.omega().iter().map(|&j| j + 1)),
            values: join(obs.values().iter()),
        })
        .collect();
    write_rows(writer, &rows, &OBSERVATION_HEADER)
}

/// Reads observations, returned in file order with 0-based indices.
pub fn read_observations<R: Read>(reader: R) -> Result<Vec<Observation>> {
    let records: Vec<ObservationRecord> = read_rows(reader, &OBSERVATION_HEADER)?;
    records
        .into_iter()
        .map(|rec| {
            let one_based: Vec<usize> = split(&rec.indices, "index", rec.t)?;
            let values: Vec<f64> = split(&rec.values, "value", rec.t)?;
            if one_based.contains(&0) {
                return Err(Error::InvalidObservation(format!(
                    "record t={}: indices are 1-based",
                    rec.t
                )));
            }
            let omega = one_based.into_iter().map(|i| i - 1).collect();
            Observation::new(rec.n, omega, values, None)
                .map_err(|e| Error::InvalidObservation(format!("record t={}: {e}", rec.t)))
        })
        .collect()
}
