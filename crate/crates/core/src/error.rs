use thiserror::Error;

use crate::basis::WaveVector;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("dimension must be 2 or 3, got {0}")]
    Dimension(usize),
    #[error("side length must be positive and finite, got {0}")]
    SideLength(f64),
    #[error("modes per axis must be even and at least 4, got {0}")]
    Modes(usize),
    #[error("wavevector {0} outside the retained range")]
    OutOfRange(WaveVector),
    #[error("wavevector {0} lies on a Nyquist plane")]
    Nyquist(WaveVector),
    #[error("coefficient array has length {found}, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("vector field has {found} components, expected {expected}")]
    Components { expected: usize, found: usize },
    #[error("fields live on different domains")]
    DomainMismatch,
    #[error("velocity fields have no mean mode")]
    MeanVelocity,
    #[error("no polarization with index {0}")]
    Polarization(usize),
    #[error("negative power {0} applied to a field with nonzero mean")]
    Singular(f64),
    #[error("rank {rank} outside 1..={size}")]
    Rank { rank: usize, size: usize },
}

/// One violated inequality from a sampled validator.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub check: String,
    pub at: f64,
    pub margin: f64,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} violated at s = {} (margin {:e})",
            self.check, self.at, self.margin
        )
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PotentialError {
    #[error("sample set must be non-empty and cover [-10, 10]")]
    Samples,
    #[error("growth assumptions violated: {}", list(.0))]
    Violated(Vec<Violation>),
}

fn list(v: &[Violation]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("increment belongs to the {found} channel, expected {expected}")]
    ChannelMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("noise field lives on a different domain")]
    DomainMismatch,
    #[error("noise validation failed: {0}")]
    Validation(String),
    #[error("time step must be nonnegative and finite, got {0}")]
    TimeStep(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("parameter `{name}` must be {rule}, got {value}")]
    Invalid {
        name: &'static str,
        rule: &'static str,
        value: f64,
    },
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error("non-finite coefficient at t = {time}")]
    BlowUp { time: f64 },
    #[error("invalid stepper configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("trajectories use different time grids: {0}")]
    TimeGrid(String),
    #[error("trajectories have no snapshots to compare")]
    NoSnapshots,
    #[error(transparent)]
    Basis(#[from] BasisError),
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("bad snapshot: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical blow-up at t = {time}")]
    BlowUp { time: f64 },
    #[error("assertion failed: {0}")]
    Assertion(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Step(StepError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
}

impl HarnessError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::BlowUp { .. } => 3,
            HarnessError::Step(StepError::BlowUp { .. }) => 3,
            HarnessError::Step(_) => 2,
            HarnessError::Assertion(_) => 4,
            HarnessError::Io(_) | HarnessError::Diagnostics(_) | HarnessError::Snapshot(_) => 1,
        }
    }
}

impl From<StepError> for HarnessError {
    fn from(e: StepError) -> Self {
        match e {
            StepError::BlowUp { time } => HarnessError::BlowUp { time },
            other => HarnessError::Step(other),
        }
    }
}
