//! Experiment grids: strategy comparison, runs checked against neighborhood
//! enumeration, and sensitivity to the regularization weight and random starts.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use slip_core::slip::zero_control;
use slip_core::trip::budget_units;
use slip_core::{
    run, verify_r_optimality, Control, InstanceConfig, ProblemInstance, RadiusStrategy, SlipConfig,
    SlipResult,
};

use crate::error::{CliError, Result};
use crate::output::{format_sig3, write_run};

/// Name of the generator used for random initial controls.
pub const RNG_NAME: &str = "ChaCha8Rng (rand_chacha 0.3), seed_from_u64(seed), stream = sample";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Strategies,
    SlipVsOracle,
    Sensitivity,
}

/// Radius strategy (`R` reset, `D` doubling) and start (`0` zero, `P` mesh sequencing).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Variant {
    pub radius: RadiusStrategy,
    pub sequenced: bool,
}

impl Variant {
    pub const R0: Variant = Variant {
        radius: RadiusStrategy::Reset,
        sequenced: false,
    };
    pub const RP: Variant = Variant {
        radius: RadiusStrategy::Reset,
        sequenced: true,
    };
    pub const D0: Variant = Variant {
        radius: RadiusStrategy::Doubling,
        sequenced: false,
    };
    pub const DP: Variant = Variant {
        radius: RadiusStrategy::Doubling,
        sequenced: true,
    };
    pub const ALL: [Variant; 4] = [Self::R0, Self::RP, Self::D0, Self::DP];
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let r = match self.radius {
            RadiusStrategy::Reset => 'R',
            RadiusStrategy::Doubling => 'D',
        };
        write!(f, "{r}{}", if self.sequenced { 'P' } else { '0' })
    }
}

impl FromStr for Variant {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| CliError::Spec(format!("unknown variant {s:?}, expected R0, RP, D0 or DP")))
    }
}

impl TryFrom<String> for Variant {
    type Error = CliError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> Self {
        v.to_string()
    }
}

/// Solver settings shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub initial_radius: f64,
    pub sigma: f64,
    pub max_outer_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let d = SlipConfig::default();
        Self {
            initial_radius: d.initial_radius,
            sigma: d.sigma,
            max_outer_iterations: d.max_outer_iterations,
        }
    }
}

impl SolverSettings {
    /// Driver configuration for grid `n_cells`. Grids too coarse for the initial
    /// radius to buy a single deviation unit start at two cells instead.
    pub fn config(&self, variant: Variant, n_cells: usize, length: f64) -> SlipConfig {
        let h = length / n_cells as f64;
        let initial_radius = if budget_units(self.initial_radius, h) == 0 {
            2.0 * h
        } else {
            self.initial_radius
        };
        SlipConfig {
            initial_radius,
            sigma: self.sigma,
            radius_strategy: variant.radius,
            max_outer_iterations: self.max_outer_iterations,
            n_cells,
            ..SlipConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default = "default_alpha_list")]
    pub alpha_list: Vec<f64>,
    /// Defaults to all four for `strategies` and to `R0` otherwise.
    #[serde(default)]
    pub variants: Option<Vec<Variant>>,
    #[serde(default)]
    pub seed: u64,
    /// Random initial controls per grid and weight (sensitivity only).
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_r_list")]
    pub r_list: Vec<u64>,
    /// Largest grid on which final iterates are checked by enumeration.
    #[serde(default = "default_oracle_max_cells")]
    pub oracle_max_cells: usize,
    #[serde(default = "default_gap_floor")]
    pub relative_gap_floor: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub instance: InstanceConfig,
    #[serde(default)]
    pub solver: SolverSettings,
}

fn default_n_list() -> Vec<usize> {
    vec![32, 64, 128]
}

fn default_alpha_list() -> Vec<f64> {
    vec![1e-4]
}

fn default_samples() -> usize {
    1
}

fn default_r_list() -> Vec<u64> {
    vec![1, 2, 3, 4]
}

fn default_oracle_max_cells() -> usize {
    16
}

fn default_gap_floor() -> f64 {
    1e-4
}

impl ExperimentSpec {
    pub fn new(experiment: ExperimentKind) -> Self {
        Self {
            experiment,
            n_list: default_n_list(),
            alpha_list: default_alpha_list(),
            variants: None,
            seed: 0,
            samples: default_samples(),
            r_list: default_r_list(),
            oracle_max_cells: default_oracle_max_cells(),
            relative_gap_floor: default_gap_floor(),
            out: None,
            instance: InstanceConfig::default(),
            solver: SolverSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn variants(&self) -> Vec<Variant> {
        self.variants.clone().unwrap_or_else(|| match self.experiment {
            ExperimentKind::Strategies => Variant::ALL.to_vec(),
            _ => vec![Variant::R0],
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() || self.alpha_list.is_empty() {
            return Err(CliError::Spec("n_list and alpha_list must be nonempty".into()));
        }
        if self.samples == 0 {
            return Err(CliError::Spec("samples must be at least 1".into()));
        }
        if let Some(a) = self.alpha_list.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(CliError::Spec(format!("alpha must be positive, got {a}")));
        }
        let mut sorted = self.n_list.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.n_list.len() {
            return Err(CliError::Spec("n_list has duplicates".into()));
        }
        for &n in &self.n_list {
            finest_for(n, self.instance.finest_cells)?;
        }
        let variants = self.variants();
        if variants.iter().any(|v| v.sequenced) {
            if self.experiment == ExperimentKind::Sensitivity {
                return Err(CliError::Spec("sensitivity runs start from random controls".into()));
            }
            finest_for_sequence(&sorted, self.instance.finest_cells)?;
        }
        Ok(())
    }
}

/// Finest decomposition for grid `n`: `n·2^k`, the largest such value not above `limit`.
pub fn finest_for(n: usize, limit: usize) -> Result<usize> {
    if n == 0 || n > limit {
        return Err(CliError::Spec(format!("grid {n} does not fit the {limit}-cell quadrature grid")));
    }
    let mut f = n;
    while f * 2 <= limit {
        f *= 2;
    }
    Ok(if limit.is_multiple_of(n) { limit } else { f })
}

fn finest_for_sequence(grids: &[usize], limit: usize) -> Result<usize> {
    if grids.windows(2).any(|w| w[1] % w[0] != 0) {
        return Err(CliError::Spec(format!("mesh sequencing needs nested grids, got {grids:?}")));
    }
    finest_for(*grids.last().expect("nonempty"), limit)
}

/// Draws i.i.d. uniform levels per cell, stream `sample` of the generator seeded by `seed`.
pub fn random_control(model: &ProblemInstance, n_cells: usize, seed: u64, sample: u64) -> Result<Control> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample);
    let levels = model.levels().levels();
    let values = (0..n_cells).map(|_| levels[rng.gen_range(0..levels.len())]).collect();
    Ok(Control::new(model.working_grid(n_cells)?, values)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub r_units: u64,
    pub objective: f64,
    pub best_objective: f64,
    pub gap: f64,
    /// `gap / best_objective`.
    pub relative_gap: f64,
    /// `relative_gap` clamped below at the reporting floor.
    pub reported_gap: f64,
    pub optimal_in_neighborhood: bool,
    pub neighborhood_size: u128,
}

/// Compares `control` with the best control in each neighborhood of `r_list`.
pub fn oracle_compare(
    control: &Control,
    model: &ProblemInstance,
    r_list: &[u64],
    floor: f64,
) -> Result<Vec<OracleRow>> {
    r_list
        .iter()
        .map(|&r| {
            let res = verify_r_optimality(control, model, r)?;
            let relative_gap = if res.gap == 0.0 { 0.0 } else { res.gap / res.best_objective.abs() };
            Ok(OracleRow {
                r_units: r,
                objective: res.objective,
                best_objective: res.best_objective,
                gap: res.gap,
                relative_gap,
                reported_gap: relative_gap.max(floor),
                optimal_in_neighborhood: res.optimal_in_neighborhood,
                neighborhood_size: res.neighborhood_size,
            })
        })
        .collect()
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run_id: String,
    pub variant: String,
    pub n: usize,
    pub alpha: f64,
    pub sample: Option<u64>,
    #[serde(rename = "J")]
    pub objective: f64,
    #[serde(rename = "F_val")]
    pub f_value: f64,
    pub tv: u64,
    pub stationarity: f64,
    pub termination: String,
    pub accepted_steps: usize,
    pub final_radius: f64,
    pub time_s: String,
    /// Includes the coarser stages of a mesh-sequenced run.
    pub cumulative_time_s: String,
}

/// A finished run and where its files went.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: SummaryRow,
    pub result: SlipResult,
    pub oracle: Vec<OracleRow>,
    pub cumulative_time_s: f64,
}

#[derive(Debug, Clone)]
struct Job {
    variant: Variant,
    alpha: f64,
    sample: Option<u64>,
    grids: Vec<usize>,
}

fn run_id(variant: Variant, n: usize, alpha: f64, sample: Option<u64>) -> String {
    let base = format!("{variant}_n{n}_alpha{alpha:e}");
    match sample {
        Some(s) => format!("{base}_s{s}"),
        None => base,
    }
}

fn jobs(spec: &ExperimentSpec) -> Vec<Job> {
    let mut grids = spec.n_list.clone();
    grids.sort_unstable();
    let mut out = Vec::new();
    for variant in spec.variants() {
        for &alpha in &spec.alpha_list {
            match spec.experiment {
                ExperimentKind::Sensitivity => {
                    for &n in &grids {
                        for s in 0..spec.samples as u64 {
                            out.push(Job {
                                variant,
                                alpha,
                                sample: Some(s),
                                grids: vec![n],
                            });
                        }
                    }
                }
                _ if variant.sequenced => out.push(Job {
                    variant,
                    alpha,
                    sample: None,
                    grids: grids.clone(),
                }),
                _ => out.extend(grids.iter().map(|&n| Job {
                    variant,
                    alpha,
                    sample: None,
                    grids: vec![n],
                })),
            }
        }
    }
    out
}

/// Everything an experiment produced, in job order.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub out_dir: PathBuf,
    pub runs: Vec<RunOutcome>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    spec: &'a ExperimentSpec,
    seed: u64,
    rng: &'static str,
    workers: usize,
    package: &'static str,
    version: &'static str,
    runs: Vec<String>,
}

#[derive(Serialize)]
struct OracleCsvRow<'a> {
    run_id: &'a str,
    n: usize,
    alpha: f64,
    sample: Option<u64>,
    r_units: u64,
    #[serde(rename = "J")]
    objective: f64,
    #[serde(rename = "best_J")]
    best_j: f64,
    gap: f64,
    relative_gap: f64,
    reported_gap: f64,
    optimal: bool,
    neighborhood_size: u128,
}

/// Runs every job of `spec` on `workers` threads and writes the result bundle to `out`.
pub fn run_experiment(spec: &ExperimentSpec, out: &Path, workers: usize) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let workers = workers.max(1);
    fs::create_dir_all(out.join("runs"))?;
    let all = jobs(spec);
    let first_n = *spec.n_list.iter().min().expect("validated");
    let last_n = *spec.n_list.iter().max().expect("validated");
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    let per_job: Vec<Vec<RunOutcome>> = pool.install(|| {
        all.par_iter()
            .map(|job| run_job(spec, job, out, first_n, last_n))
            .collect::<Result<Vec<_>>>()
    })?;
    let runs: Vec<RunOutcome> = per_job.into_iter().flatten().collect();

    let mut summary = csv::Writer::from_path(out.join("summary.csv"))?;
    for r in &runs {
        summary.serialize(&r.summary)?;
    }
    summary.flush()?;

    if runs.iter().any(|r| !r.oracle.is_empty()) {
        let mut oracle = csv::Writer::from_path(out.join("oracle.csv"))?;
        for r in &runs {
            for row in &r.oracle {
                oracle.serialize(OracleCsvRow {
                    run_id: &r.summary.run_id,
                    n: r.summary.n,
                    alpha: r.summary.alpha,
                    sample: r.summary.sample,
                    r_units: row.r_units,
                    objective: row.objective,
                    best_j: row.best_objective,
                    gap: row.gap,
                    relative_gap: row.relative_gap,
                    reported_gap: row.reported_gap,
                    optimal: row.optimal_in_neighborhood,
                    neighborhood_size: row.neighborhood_size,
                })?;
            }
        }
        oracle.flush()?;
    }

    let manifest = Manifest {
        spec,
        seed: spec.seed,
        rng: RNG_NAME,
        workers,
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        runs: runs.iter().map(|r| r.summary.run_id.clone()).collect(),
    };
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(ExperimentOutcome {
        out_dir: out.to_path_buf(),
        runs,
    })
}

fn run_job(spec: &ExperimentSpec, job: &Job, out: &Path, first_n: usize, last_n: usize) -> Result<Vec<RunOutcome>> {
    let finest = if job.grids.len() > 1 {
        finest_for_sequence(&job.grids, spec.instance.finest_cells)?
    } else {
        finest_for(job.grids[0], spec.instance.finest_cells)?
    };
    let model = spec
        .instance
        .clone()
        .with_alpha(job.alpha)
        .with_finest_cells(finest)
        .build()?;
    let length = model.finest_grid().length();
    let mut outcomes: Vec<RunOutcome> = Vec::new();
    let mut cumulative = 0.0;
    for &n in &job.grids {
        let start = match (outcomes.last(), job.sample) {
            (Some(prev), _) => prev.result.control.refine_to(n)?,
            (None, Some(s)) => random_control(&model, n, spec.seed, s)?,
            (None, None) => zero_control(&model, n)?,
        };
        let config = spec.solver.config(job.variant, n, length);
        let result = run(&model, &config, &start)?;
        cumulative += result.elapsed_s;
        let oracle = if spec.experiment != ExperimentKind::Strategies && n <= spec.oracle_max_cells {
            oracle_compare(&result.control, &model, &spec.r_list, spec.relative_gap_floor)?
        } else {
            Vec::new()
        };
        let id = run_id(job.variant, n, job.alpha, job.sample);
        let last = result.accepted_iterates().pop().expect("initial iterate is always present");
        let summary = SummaryRow {
            run_id: id.clone(),
            variant: job.variant.to_string(),
            n,
            alpha: job.alpha,
            sample: job.sample,
            objective: result.objective(),
            f_value: last.f_value,
            tv: last.tv,
            stationarity: last.stationarity,
            termination: format!("{:?}", result.termination),
            accepted_steps: result.accepted_steps,
            final_radius: result.final_radius,
            time_s: format_sig3(result.elapsed_s),
            cumulative_time_s: format_sig3(cumulative),
        };
        let trajectory = n == first_n || n == last_n;
        write_run(&out.join("runs").join(&id), &model, &result, trajectory)?;
        outcomes.push(RunOutcome {
            summary,
            result,
            oracle,
            cumulative_time_s: cumulative,
        });
    }
    Ok(outcomes)
}
