use std::path::PathBuf;

/// Errors surfaced by mesh generation, assembly and the optimal-control solvers.
#[derive(Debug, thiserror::Error)]
pub enum CloakError {
    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("mesh invariant violated at element {element}: {message}")]
    MeshInvariant { element: usize, message: String },

    #[error("mesh invariant violated: {0}")]
    MeshStructure(String),

    #[error("meshes are not nested: {0}")]
    NotNested(String),

    #[error("degenerate triangle (signed area {area:e})")]
    DegenerateTriangle { area: f64 },

    #[error("region `{0}` has no elements")]
    EmptyRegion(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("factorization failed for {context}: {message}")]
    Factorization {
        context: &'static str,
        message: String,
    },

    #[error(
        "line search exhausted after {backtracks} backtracks \
         (last step {last_step:e}, trial cost {last_cost:e}, reference cost {reference_cost:e})"
    )]
    LineSearch {
        backtracks: usize,
        last_step: f64,
        last_cost: f64,
        reference_cost: f64,
    },

    #[error("all {0} snapshot solves failed")]
    AllSnapshotsFailed(usize),

    #[error("inconsistent snapshot set: {0}")]
    InconsistentSnapshots(String),

    #[error("{0}")]
    Undefined(String),

    #[error("config: {0}")]
    Config(String),

    #[error("archive: {0}")]
    Archive(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = CloakError> = std::result::Result<T, E>;

impl CloakError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CloakError::Io {
            path: path.into(),
            source,
        }
    }
}
