use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("trajectory too short: {len} snapshots, need at least {min}")]
    TrajectoryTooShort { len: usize, min: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset contains no interior triples")]
    NoTriples,

    #[error("state is missing velocity or acceleration data")]
    MissingDerivatives,

    #[error("Newton iteration did not converge after {iterations} iterations (residual norm {residual_norm:e})")]
    NonConvergence { iterations: usize, residual_norm: f64 },

    #[error("singular Jacobian in Newton solve")]
    SingularJacobian,

    #[error("velocity Hessian is singular at the evaluation point")]
    SingularHessian,

    #[error("unsupported derivative or correction order {0}")]
    UnsupportedOrder(usize),

    #[error("matrix decomposition failed: {0}")]
    Decomposition(String),

    #[error("ill-conditioned Gram matrix: {0}")]
    IllConditioned(String),

    #[error("missing velocities in trajectory")]
    MissingVelocities,

    #[error("too many free grid axes: {0} (at most 2 supported)")]
    TooManyFreeAxes(usize),

    /// An error raised inside a named pipeline stage.
    #[error("{stage}: {source}")]
    Stage { stage: String, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// The innermost error, looking through [`Error::Stage`].
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}

/// Attaches a stage name to errors.
pub trait StageContext<T> {
    fn stage(self, name: &str) -> Result<T>;
}

impl<T> StageContext<T> for Result<T> {
    fn stage(self, name: &str) -> Result<T> {
        self.map_err(|e| Error::Stage { stage: name.to_string(), source: Box::new(e) })
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
