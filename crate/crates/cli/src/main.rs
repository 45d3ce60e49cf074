use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use slip_core::slip::zero_control;
use slip_core::{
    run, run_mesh_sequenced, sl_measure, slip::InitStrategy, trip::solve_dp, Control, TripInstance,
};
use slip_cli::experiments::{run_experiment, ExperimentSpec};
use slip_cli::output::write_run;
use slip_cli::RunConfig;

#[derive(Parser)]
#[command(name = "slip", version, about = "Trust-region solver for TV-regularized integer control problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trust-region loop on one instance.
    Run {
        /// Run configuration, TOML or `.json`.
        #[arg(long)]
        config: PathBuf,
        /// Initial control as JSON; the zero control or mesh sequencing otherwise.
        #[arg(long)]
        init: Option<PathBuf>,
        /// Directory for the log, final control and trajectory.
        #[arg(long, default_value = "slip-run")]
        out: PathBuf,
    },
    /// Subproblem utilities.
    Trip {
        #[command(subcommand)]
        command: TripCommand,
    },
    /// Gradient values and window estimates at the switches of a control.
    Stationarity {
        #[arg(long)]
        control: PathBuf,
        /// Instance configuration; the default instance otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run an experiment grid and write its result bundle.
    Experiment {
        #[arg(long)]
        spec: PathBuf,
        /// Output directory; overrides `out` in the experiment file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

#[derive(Subcommand)]
enum TripCommand {
    /// Solve a subproblem given as JSON and print the solution.
    Solve {
        #[arg(long)]
        instance: PathBuf,
    },
}

fn read(path: &PathBuf) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run { config, init, out } => {
            let cfg = RunConfig::from_path(&config).with_context(|| format!("loading {}", config.display()))?;
            let model = cfg.instance.build()?;
            let stages = match (init, cfg.solver.init_strategy) {
                (Some(path), _) => {
                    let v0: Control = serde_json::from_str(&read(&path)?)?;
                    vec![run(&model, &cfg.solver, &v0)?]
                }
                (None, InitStrategy::Zero) => {
                    vec![run(&model, &cfg.solver, &zero_control(&model, cfg.solver.n_cells)?)?]
                }
                (None, InitStrategy::MeshSequencing) => {
                    run_mesh_sequenced(&model, &cfg.solver, &cfg.solver.sequence()?)?
                }
            };
            for (i, stage) in stages.iter().enumerate() {
                let dir = if stages.len() == 1 { out.clone() } else { out.join(format!("stage{i}")) };
                write_run(&dir, &model, stage, true)?;
                println!(
                    "N={} J={:.6e} TV={} termination={:?} accepted={} time_s={:.3}",
                    stage.control.n_cells(),
                    stage.objective(),
                    stage.control.total_variation(),
                    stage.termination,
                    stage.accepted_steps,
                    stage.elapsed_s
                );
            }
        }
        Command::Trip {
            command: TripCommand::Solve { instance },
        } => {
            let inst: TripInstance = serde_json::from_str(&read(&instance)?)?;
            let sol = solve_dp(&inst)?;
            println!("{}", serde_json::to_string_pretty(&sol)?);
        }
        Command::Stationarity { control, config } => {
            let instance = match config {
                Some(path) => RunConfig::from_path(&path)?.instance,
                None => Default::default(),
            };
            let model = instance.build()?;
            let c: Control = serde_json::from_str(&read(&control)?)?;
            let report = sl_measure(&c, &model)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Experiment { spec, out, workers } => {
            let parsed = ExperimentSpec::from_toml(&read(&spec)?)?;
            let Some(dir) = out.or_else(|| parsed.out.clone()) else {
                bail!("no output directory: pass --out or set `out` in the experiment file");
            };
            let outcome = run_experiment(&parsed, &dir, workers)?;
            for r in &outcome.runs {
                println!(
                    "{} J={:.6e} time_s={} cumulative_s={}",
                    r.summary.run_id, r.summary.objective, r.summary.time_s, r.summary.cumulative_time_s
                );
            }
            println!("wrote {}", outcome.out_dir.display());
        }
    }
    Ok(())
}
