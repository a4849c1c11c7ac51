pub mod cost;
pub mod emulation;
mod kernel;
pub mod loops;
pub mod optimizer;

pub use cost::{cost_functional, CostSpec};
pub use emulation::subsample_and_interpolate_outputs;
pub use loops::{
    advance_retarded, advance_stacked, obpc_step, optimize_horizon, predict_model,
    predict_observer, run, run_many, run_obpc, run_standard_mpc, standard_mpc_step, HorizonProblem,
    LoopScenario, MpcLoopState, OptimizedHorizon, Scheme, SimulationResult, StandardLoopState,
    StepOutcome,
};
pub use optimizer::{multistart, nelder_mead_box, Minimum, OptimizerSettings};
