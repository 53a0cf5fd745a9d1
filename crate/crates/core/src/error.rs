use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Some eigenvalue lies outside the closed unit disc, or a unit-circle
    /// eigenvalue is defective.
    #[error("matrix is not Lyapunov stable: {0}")]
    NotLyapunovStable(String),

    #[error("orthogonal part is not reachable within {kappa_max} steps (rank {rank} < {d_o})")]
    NotReachable { kappa_max: usize, rank: usize, d_o: usize },

    #[error("structural zero violated at ({row}, {col}) in {matrix}: {value:e}")]
    StructureViolation {
        matrix: &'static str,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("{0} is not positive semidefinite")]
    NotPsd(&'static str),

    #[error("{0} is not positive definite")]
    NotPd(&'static str),

    #[error("moment matrix L is indefinite: min eigenvalue {min_eig:e} (norm {norm:e})")]
    IndefiniteL { min_eig: f64, norm: f64 },

    #[error("QP solver stopped after {iterations} iterations (primal {primal_residual:e}, dual {dual_residual:e})")]
    MaxIterations {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
    },

    #[error("QP is infeasible: {0}")]
    Infeasible(String),

    /// A solve inside the closed loop failed; carries its coordinates.
    #[error("solver failure on path {path} at t = {t}: {source}")]
    Solve {
        path: usize,
        t: usize,
        #[source]
        source: Box<Error>,
    },

    /// The loop detected a broken internal invariant.
    #[error("invariant violated on path {path} at t = {t}: {message}")]
    Invariant { path: usize, t: usize, message: String },

    #[error("actuator buffer underrun at instant {0}")]
    BufferUnderrun(usize),

    #[error("linear algebra failure: {0}")]
    Numerical(String),

    #[error("moment cache: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
