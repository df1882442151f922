use std::path::PathBuf;

/// Errors raised anywhere in the reduction pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid mesh size h = {h}: {reason}")]
    MeshSize { h: f64, reason: String },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("mesh parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("mesh invariant violated: {0}")]
    MeshInvariant(String),

    #[error("parameter {name} = {value} outside admissible range ({lo}, {hi})")]
    ParameterRange {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular factorization at pivot {pivot} (|pivot| = {magnitude:e})")]
    SingularFactorization { pivot: usize, magnitude: f64 },

    #[error("singular reduced system of size {size} (reciprocal condition estimate {rcond:e})")]
    SingularReduced { size: usize, rcond: f64 },

    #[error("linear solve residual {residual:e} exceeds tolerance {tol:e}")]
    InaccurateSolve { residual: f64, tol: f64 },

    #[error("high-fidelity solve failed for mu = ({mu1}, {mu2}, {muu}): {source}")]
    SolveFailed {
        mu1: f64,
        mu2: f64,
        muu: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("snapshot matrix is identically zero")]
    ZeroSnapshots,

    #[error("high-fidelity solution has zero norm; relative error undefined")]
    ZeroNorm,

    #[error("redundant DEIM basis column {column}: interpolation residual vanished")]
    RedundantBasis { column: usize },

    #[error("coercivity lost: smallest eigenvalue of the symmetric part is {0:e}")]
    CoercivityLost(f64),

    #[error("eigen solver did not converge: {0}")]
    Eigen(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps an error with the name of the pipeline stage that produced it.
    pub fn at_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
