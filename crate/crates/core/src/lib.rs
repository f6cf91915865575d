//! Simulation and control of objects carried on a soft surface stretched
//! over a grid of height actuators.
//!
//! The surface is split into square modules, each bounded by four
//! actuators. Objects are moved within a module by tilting it and between
//! modules by raising the source module and lowering its neighbour.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coordinator;
pub mod error;
pub mod experiments;
pub mod export;
pub mod geometry;
pub mod grid;
pub mod metrics;
pub mod object;
pub mod passing;
pub mod position;
pub mod rng;
pub mod runner;
pub mod scenario;
pub mod surface;

pub use coordinator::{TaskMode, TaskRequest, World, WorldConfig};
pub use error::{Error, Result};
pub use geometry::Vec2;
pub use grid::{ActuatorGrid, ActuatorId, ModuleId};
pub use metrics::{compute_trajectory_std, Metrics, ObjectMetrics};
pub use object::{DynamicsParams, MotionMode, ObjectSpec, ObjectState, Shape};
pub use passing::{EdgeBias, PassingParams, Phase, TransferTask};
pub use position::{ControllerParams, TiltController};
pub use runner::{run_scenario, run_with_seed, Record, RunLog, RunOutput};
pub use scenario::{parse_scenario, Scenario, SquareVariant};
pub use surface::SurfaceField;
