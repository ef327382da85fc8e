use thiserror::Error;

/// Errors raised by geometry construction and ray queries.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("piston position {0} outside [0, 1]")]
    PositionOutOfRange(f64),
    #[error("side must be 1 or 2, got {0}")]
    InvalidSide(u8),
    #[error("invalid boundary piece {index}: {reason}")]
    InvalidPiece { index: usize, reason: String },
    #[error("container is not watertight: {0}")]
    NotWatertight(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("subdomain {side} has non-positive measure {measure} at Q = {q}")]
    DegenerateSubdomain { side: u8, q: f64, measure: f64 },
    #[error("ray from {origin:?} along {direction:?} left the domain without a boundary hit")]
    NoIntersection { origin: [f64; 3], direction: [f64; 3] },
    #[error("rejection sampling failed after {0} draws")]
    SamplingFailed(usize),
}

/// Errors raised while evolving a trajectory or a billiard orbit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    /// Corner hit, tangential hit or simultaneous events: a measure-zero
    /// configuration that is excluded rather than resolved.
    #[error("singular configuration at t = {time}: {reason}")]
    Singular { time: f64, reason: String },
    #[error("orbit did not return to the piston within {0} collisions")]
    NonReturn(usize),
    #[error("scheduler logic error: {0}")]
    Logic(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

/// Errors raised by the averaged-equation integrator and analysis.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AveragedError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("state is at equilibrium; the oscillation period is undefined")]
    AtEquilibrium,
    #[error("effective potential is not confining: {0}")]
    NotConfining(String),
    #[error("step control failed at tau = {0}")]
    StepControl(f64),
    #[error("path left the admissible region before a full period")]
    LeftRegion,
}

/// Configuration validation errors for experiments.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl ConfigError {
    pub fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid { field: field.into(), reason: reason.into() }
    }
}

/// Errors raised by the ensemble harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Averaged(#[from] AveragedError),
    #[error("{excluded} of {total} samples excluded at eps = {eps}; exceeds the 20% limit")]
    ExclusionThreshold { eps: f64, excluded: usize, total: usize },
}
