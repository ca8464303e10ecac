//! Learning inverse modified Lagrangians from position-only trajectory data.
//!
//! The crate covers data generation for two benchmark systems, kernel learners
//! for Lagrangians and flow maps, variational integration with the midpoint and
//! trapezoidal rules, order-2 backward error analysis, and the evaluation tools
//! used to compare learned models.

pub mod analysis;
pub mod bea;
pub mod datagen;
pub mod discretize;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod field;
pub mod kernel;
pub mod learn;

pub use discretize::{NewtonOptions, Prediction, Scheme};
pub use domain::{BenchmarkSystem, Bounds, State, Trajectory, TrajectoryDataset};
pub use error::{Error, Result};
pub use field::{Jet, LagrangianField};
pub use kernel::{Kernel, KernelParams, Rbf};
pub use learn::{KernelModel, TrainConfig};
