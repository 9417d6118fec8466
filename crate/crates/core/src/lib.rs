//! Model-free para-model control applied to two tracking problems: solving a
//! linear system with one controller per unknown, and tuning the weights of a
//! small tanh network online from a single training sample.
//!
//! The building blocks are pure value types ([`ControllerState`],
//! [`FirstOrderFilter`]); [`Trainer`] and [`solve_linear`] close the loops, and
//! [`config`] / [`runner`] provide the file formats and run orchestration
//! used by the `paramodel` binary.

pub mod config;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod linsolve;
pub mod network;
pub mod runner;
pub mod trainer;

pub use controller::{ControllerParams, ControllerState, DecayClock};
pub use dynamics::FirstOrderFilter;
pub use error::{Error, Result};
pub use linsolve::{solve_linear, stagger_params, LinearRecord, LinearTrace, LinearTrackingProblem};
pub use network::{Edge, FeedforwardNet, Node, NodeKind, TrainingSample};
pub use trainer::{
    builtin_scenario, builtin_scenarios, train_online, EventKind, Scenario, ScenarioEvent, TraceRecord, Trainer,
};
