//! File layout of a single run: iteration log, final control, state trajectory
//! and stationarity per accepted iterate.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use slip_core::slip::write_log_csv;
use slip_core::{ProblemInstance, SlipResult};

use crate::error::Result;

/// `x` rounded to three significant digits.
pub fn format_sig3(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let x: f64 = format!("{x:.2e}").parse().expect("formatted float parses");
    let digits = 2 - x.abs().log10().floor() as i32;
    if digits >= 0 {
        format!("{:.*}", digits as usize, x)
    } else {
        let scale = 10f64.powi(-digits);
        format!("{}", (x / scale).round() * scale)
    }
}

#[derive(Serialize)]
struct TrajectoryRow {
    t: f64,
    state: f64,
    target: f64,
}

#[derive(Serialize)]
struct StationarityRow {
    iterate: usize,
    n: usize,
    #[serde(rename = "J")]
    objective: f64,
    tv: u64,
    stationarity: f64,
}

/// `t, state, target` at every quadrature node for the final control.
pub fn write_trajectory<W: Write>(model: &ProblemInstance, result: &SlipResult, writer: W) -> Result<()> {
    let eval = model.evaluate(&result.control)?;
    let mut w = csv::Writer::from_writer(writer);
    for ((t, s), f) in model
        .quadrature()
        .all_nodes()
        .into_iter()
        .zip(&eval.state)
        .zip(model.target_at_nodes())
    {
        w.serialize(TrajectoryRow {
            t,
            state: *s,
            target: *f,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Stationarity measure of the initial iterate and of every accepted iterate.
pub fn write_stationarity<W: Write>(result: &SlipResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.serialize(StationarityRow {
        iterate: 0,
        n: 0,
        objective: result.initial.objective,
        tv: result.initial.tv,
        stationarity: result.initial.stationarity,
    })?;
    for (i, r) in result.log.iter().filter(|r| r.accepted).enumerate() {
        w.serialize(StationarityRow {
            iterate: i + 1,
            n: r.outer,
            objective: r.objective,
            tv: r.tv,
            stationarity: r.stationarity,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `log.csv`, `control.json`, `control.csv`, `stationarity.csv` and,
/// when requested, `trajectory.csv` into `dir`.
pub fn write_run(dir: &Path, model: &ProblemInstance, result: &SlipResult, trajectory: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_log_csv(&result.log, fs::File::create(dir.join("log.csv"))?)?;
    fs::write(dir.join("control.json"), serde_json::to_string_pretty(&result.control)?)?;
    result.control.write_csv(fs::File::create(dir.join("control.csv"))?)?;
    write_stationarity(result, fs::File::create(dir.join("stationarity.csv"))?)?;
    if trajectory {
        write_trajectory(model, result, fs::File::create(dir.join("trajectory.csv"))?)?;
    }
    Ok(())
}
