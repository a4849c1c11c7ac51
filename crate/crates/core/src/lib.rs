//! Observer-based predictive control: a receding-horizon controller whose
//! prediction integrates a time-retarded observer driven by stored outputs,
//! a standard MPC baseline, and numerical stability certificates.

pub mod control;
pub mod error;
pub mod exec;
pub mod models;
pub mod ode;
pub mod stability;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use models::{
    ExamplePlant, LinearObserverParts, LinearPlant, LuenbergerObserver, ObserverModel, PlantModel,
    DEFAULT_LAMBDA,
};
pub use ode::{ControlBox, ControlSequence, HistoryBuffer, TimeGrid, Trajectory};
