//! Sequential linear integer programming: the outer trust-region loop.
//!
//! Each outer iteration linearizes `F` at the current iterate and solves the
//! integer subproblem for a shrinking sequence of radii until the actual
//! reduction of `J` is a fraction `σ` of the predicted one.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::control::Control;
use crate::error::{Error, Result};
use crate::model::ProblemInstance;
use crate::stationarity::point_measure;
use crate::trip::{budget_units, solve_dp, TripInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusStrategy {
    /// Start every outer iteration from the initial radius.
    Reset,
    /// Start from twice the last accepted radius, capped where the ball covers everything.
    Doubling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    Zero,
    /// Solve on coarser grids first and refine each result as the next start.
    MeshSequencing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlipConfig {
    pub initial_radius: f64,
    pub sigma: f64,
    pub radius_strategy: RadiusStrategy,
    pub init_strategy: InitStrategy,
    pub max_outer_iterations: usize,
    pub n_cells: usize,
    /// Coarsest grid of a mesh-sequenced run.
    pub sequence_start: usize,
    /// Keep a copy of every accepted iterate in [`SlipResult::iterates`].
    pub keep_iterates: bool,
}

impl Default for SlipConfig {
    fn default() -> Self {
        Self {
            initial_radius: 0.125,
            sigma: 1e-3,
            radius_strategy: RadiusStrategy::Reset,
            init_strategy: InitStrategy::Zero,
            max_outer_iterations: 10_000,
            n_cells: 32,
            sequence_start: 32,
            keep_iterates: false,
        }
    }
}

impl SlipConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma < 1.0) {
            return Err(Error::InvalidConfig(format!("sigma must lie in (0, 1), got {}", self.sigma)));
        }
        if !(self.initial_radius > 0.0 && self.initial_radius.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "initial radius must be positive, got {}",
                self.initial_radius
            )));
        }
        if self.max_outer_iterations == 0 {
            return Err(Error::InvalidConfig("max_outer_iterations must be positive".into()));
        }
        if self.n_cells == 0 || self.sequence_start == 0 {
            return Err(Error::InvalidConfig("grid sizes must be positive".into()));
        }
        Ok(())
    }

    /// Grids of a mesh-sequenced run, doubling from `sequence_start` to `n_cells`.
    pub fn sequence(&self) -> Result<Vec<usize>> {
        let mut out = vec![self.sequence_start];
        while *out.last().unwrap() < self.n_cells {
            out.push(out.last().unwrap() * 2);
        }
        if *out.last().unwrap() != self.n_cells {
            return Err(Error::InvalidConfig(format!(
                "{} is not {} times a power of two",
                self.n_cells, self.sequence_start
            )));
        }
        Ok(out)
    }
}

/// One subproblem solve of the inner loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub outer: usize,
    pub inner: usize,
    pub radius: f64,
    pub pred: f64,
    /// Missing when the solve ended the run because `pred ≤ 0`.
    pub ared: Option<f64>,
    pub accepted: bool,
    /// `J`, `F` and `TV` of the iterate after this step.
    pub objective: f64,
    pub f_value: f64,
    pub tv: u64,
    pub time_s: f64,
    /// Stationarity measure of the iterate after this step.
    pub stationarity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    PredNonpositive,
    RadiusBelowGrid,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateSummary {
    pub objective: f64,
    pub f_value: f64,
    pub tv: u64,
    pub stationarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlipResult {
    pub control: Control,
    pub initial: IterateSummary,
    pub log: Vec<IterationRecord>,
    pub termination: TerminationReason,
    /// Radius of the last subproblem attempted, or that would have been attempted.
    pub final_radius: f64,
    pub accepted_steps: usize,
    pub elapsed_s: f64,
    /// Initial and accepted iterates, when requested by the configuration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub iterates: Vec<Control>,
}

impl SlipResult {
    /// `J` of the final iterate.
    pub fn objective(&self) -> f64 {
        self.log
            .iter()
            .rev()
            .find(|r| r.accepted)
            .map_or(self.initial.objective, |r| r.objective)
    }

    pub fn final_stationarity(&self) -> f64 {
        self.log
            .iter()
            .rev()
            .find(|r| r.accepted)
            .map_or(self.initial.stationarity, |r| r.stationarity)
    }

    /// Summaries of the initial iterate and every accepted iterate, in order.
    pub fn accepted_iterates(&self) -> Vec<IterateSummary> {
        std::iter::once(self.initial.clone())
            .chain(self.log.iter().filter(|r| r.accepted).map(|r| IterateSummary {
                objective: r.objective,
                f_value: r.f_value,
                tv: r.tv,
                stationarity: r.stationarity,
            }))
            .collect()
    }
}

/// Constant control at the level closest to zero.
pub fn zero_control(model: &ProblemInstance, n_cells: usize) -> Result<Control> {
    let level = *model
        .levels()
        .levels()
        .iter()
        .min_by_key(|l| l.unsigned_abs())
        .expect("level sets are never empty");
    Ok(Control::constant(model.working_grid(n_cells)?, level))
}

/// Runs the trust-region loop from `v0` on the grid of `v0`.
pub fn run(model: &ProblemInstance, config: &SlipConfig, v0: &Control) -> Result<SlipResult> {
    config.validate()?;
    model.check(v0)?;
    let start = Instant::now();
    let alpha = model.alpha();
    let n_cells = v0.n_cells();
    let h = v0.grid().h();
    let max_radius = v0.grid().length() * model.levels().span() as f64;

    let mut v = v0.clone();
    let mut eval = model.evaluate(&v)?;
    let mut tv = v.total_variation();
    let mut stationarity = point_measure(model, &v, &eval)?;
    check_finite(eval.objective, "objective", 0)?;
    let initial = IterateSummary {
        objective: eval.objective + alpha * tv as f64,
        f_value: eval.objective,
        tv,
        stationarity,
    };

    let mut log = Vec::new();
    let mut iterates = Vec::new();
    if config.keep_iterates {
        iterates.push(v.clone());
    }
    let mut accepted_radius: Option<f64> = None;
    let mut accepted_steps = 0;
    let mut radius = config.initial_radius;
    for outer in 1..=config.max_outer_iterations {
        let coefficients = model.gradient_cells(&eval, n_cells)?;
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient",
                iteration: outer,
            });
        }
        radius = match (config.radius_strategy, accepted_radius) {
            (RadiusStrategy::Doubling, Some(last)) => (2.0 * last).min(max_radius),
            _ => config.initial_radius,
        };
        let mut inner = 0;
        loop {
            if budget_units(radius, h) == 0 {
                return Ok(SlipResult {
                    control: v,
                    initial,
                    log,
                    termination: TerminationReason::RadiusBelowGrid,
                    final_radius: radius,
                    accepted_steps,
                    elapsed_s: start.elapsed().as_secs_f64(),
                    iterates,
                });
            }
            let inst =
                TripInstance::new(v.clone(), coefficients.clone(), radius, alpha, model.levels().clone())?;
            let sol = solve_dp(&inst)?;
            let pred = sol.predicted_reduction;
            if pred <= 0.0 {
                log.push(IterationRecord {
                    outer,
                    inner,
                    radius,
                    pred,
                    ared: None,
                    accepted: false,
                    objective: eval.objective + alpha * tv as f64,
                    f_value: eval.objective,
                    tv,
                    time_s: start.elapsed().as_secs_f64(),
                    stationarity,
                });
                return Ok(SlipResult {
                    control: v,
                    initial,
                    log,
                    termination: TerminationReason::PredNonpositive,
                    final_radius: radius,
                    accepted_steps,
                    elapsed_s: start.elapsed().as_secs_f64(),
                    iterates,
                });
            }
            let trial = sol.minimizer;
            let trial_eval = model.evaluate(&trial)?;
            check_finite(trial_eval.objective, "objective", outer)?;
            let trial_tv = trial.total_variation();
            let ared = (eval.objective - trial_eval.objective)
                + alpha * (tv as i64 - trial_tv as i64) as f64;
            let accepted = ared >= config.sigma * pred;
            if accepted {
                v = trial;
                eval = trial_eval;
                tv = trial_tv;
                stationarity = point_measure(model, &v, &eval)?;
                accepted_steps += 1;
                accepted_radius = Some(radius);
                if config.keep_iterates {
                    iterates.push(v.clone());
                }
            }
            log.push(IterationRecord {
                outer,
                inner,
                radius,
                pred,
                ared: Some(ared),
                accepted,
                objective: eval.objective + alpha * tv as f64,
                f_value: eval.objective,
                tv,
                time_s: start.elapsed().as_secs_f64(),
                stationarity,
            });
            if accepted {
                break;
            }
            radius /= 2.0;
            inner += 1;
        }
    }
    Ok(SlipResult {
        control: v,
        initial,
        log,
        termination: TerminationReason::MaxIterations,
        final_radius: radius,
        accepted_steps,
        elapsed_s: start.elapsed().as_secs_f64(),
        iterates,
    })
}

fn check_finite(value: f64, what: &'static str, iteration: usize) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { what, iteration })
    }
}

/// Runs the loop on each grid of `grids`, starting from the zero control and
/// initializing every later stage with the refined result of the previous one.
pub fn run_mesh_sequenced(
    model: &ProblemInstance,
    config: &SlipConfig,
    grids: &[usize],
) -> Result<Vec<SlipResult>> {
    if grids.is_empty() {
        return Err(Error::InvalidConfig("empty grid sequence".into()));
    }
    if grids.windows(2).any(|w| w[1] <= w[0] || w[1] % w[0] != 0) {
        return Err(Error::InvalidConfig(format!(
            "each grid must be a multiple of the previous one: {grids:?}"
        )));
    }
    let mut results: Vec<SlipResult> = Vec::with_capacity(grids.len());
    for &n in grids {
        let start = match results.last() {
            None => zero_control(model, n)?,
            Some(prev) => prev.control.refine_to(n)?,
        };
        results.push(run(model, config, &start)?);
    }
    Ok(results)
}

/// Runs with the initialization given by `config.init_strategy` and returns the stages.
pub fn solve(model: &ProblemInstance, config: &SlipConfig) -> Result<Vec<SlipResult>> {
    match config.init_strategy {
        InitStrategy::Zero => Ok(vec![run(model, config, &zero_control(model, config.n_cells)?)?]),
        InitStrategy::MeshSequencing => run_mesh_sequenced(model, config, &config.sequence()?),
    }
}

#[derive(Serialize)]
struct LogRow {
    n: usize,
    k: usize,
    delta: f64,
    pred: f64,
    ared: Option<f64>,
    accepted: bool,
    #[serde(rename = "J")]
    objective: f64,
    #[serde(rename = "F_val")]
    f_value: f64,
    tv: u64,
    time_s: f64,
    stationarity: f64,
}

/// Column names of the iteration log.
pub const LOG_COLUMNS: [&str; 11] = [
    "n", "k", "delta", "pred", "ared", "accepted", "J", "F_val", "tv", "time_s", "stationarity",
];

/// Writes the iteration log as CSV with the columns of [`LOG_COLUMNS`].
pub fn write_log_csv<W: Write>(records: &[IterationRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if records.is_empty() {
        w.write_record(LOG_COLUMNS)?;
    }
    for r in records {
        w.serialize(LogRow {
            n: r.outer,
            k: r.inner,
            delta: r.radius,
            pred: r.pred,
            ared: r.ared,
            accepted: r.accepted,
            objective: r.objective,
            f_value: r.f_value,
            tv: r.tv,
            time_s: r.time_s,
            stationarity: r.stationarity,
        })?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}
