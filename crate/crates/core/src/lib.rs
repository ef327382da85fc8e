//! Adiabatic piston: exact event-driven simulation of a heavy piston between
//! two ideal point gases, the frozen-piston billiard identities that feed
//! the averaged equation, the averaged equation itself, and an ensemble
//! harness that compares the two on the slow time scale.

pub mod averaged;
pub mod billiard;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod microsim;
pub mod rng;
pub mod stats;
pub mod vector;

pub use error::{AveragedError, ConfigError, DynamicsError, GeometryError, HarnessError};
pub use averaged::{Averaged, AveragedPath, Oscillation};
pub use billiard::{CrossSectionPoint, FrozenBilliard, InducedPoint};
pub use geometry::{Container, ContainerSpec, Table};
pub use harness::{ConvergenceReport, ExperimentConfig, SampleResult};
pub use microsim::{MicroState, Region, SlowState, StopClock};
pub use stats::CheckRecord;
pub use vector::Vec3;
