use thiserror::Error;

/// Errors surfaced by the solvers and the optimization drivers.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter set or identifier failed validation.
    #[error("configuration: {0}")]
    Config(String),

    /// A tridiagonal solve met a pivot below the relative tolerance.
    #[error("singular tridiagonal system at row {row}")]
    SingularSystem { row: usize },

    /// The linear system of one time step was numerically singular.
    #[error("singular step system at time level {level}")]
    SingularStep { level: usize },

    /// A nodal value left the trusted range during time stepping.
    #[error("field diverged at time level {level}: |value| exceeded {guard:e}")]
    Diverged { level: usize, guard: f64 },

    /// Caller-supplied fields do not live on the same grid.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// The dense reference solver's inner fixed-point iteration stalled.
    #[error("reference solve: inner iteration did not converge at time level {level}")]
    InnerIterationStalled { level: usize },

    /// A solve failed inside an optimization driver.
    #[error("driver iteration {iteration}: {source}")]
    DriverFailed {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
