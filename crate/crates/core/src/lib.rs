//! Trust-region iteration with exact integer subproblems for total-variation
//! regularized integer optimal control on an interval.
//!
//! The crate is organized bottom-up: piecewise-constant integer controls,
//! quadrature, the convolution tracking model, the trust-region subproblem
//! solvers, the outer driver and the stationarity diagnostics.

pub mod control;
pub mod error;
pub mod model;
pub mod quadrature;
pub mod slip;
pub mod stationarity;
pub mod trip;

pub use control::{Control, LevelSet, StepRepresentation, UniformGrid};
pub use error::{Error, Result};
pub use model::{ConvolutionKernel, Evaluation, InstanceConfig, ProblemInstance, TargetSignal};
pub use quadrature::QuadratureRule;
pub use trip::{budget_units, solve_bruteforce, solve_dp, TripInstance, TripSolution};
pub use slip::{
    run, run_mesh_sequenced, IterationRecord, RadiusStrategy, InitStrategy, SlipConfig, SlipResult,
    TerminationReason,
};
pub use stationarity::{sl_measure, verify_r_optimality, NeighborhoodResult, StationarityReport};
