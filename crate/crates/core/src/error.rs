use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument `{field}`: {reason}")]
    InvalidArgument { field: String, reason: String },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    /// An operator or restriction needed a value outside the stored range.
    #[error("stencil out of range: {axis} index {index} is not available")]
    StencilOutOfRange { axis: &'static str, index: i64 },

    #[error("incomplete trajectory: {0}")]
    IncompleteTrajectory(String),

    #[error("weight overflow: exponent {exponent} exceeds the f64 range (reduce s or lambda)")]
    WeightOverflow { exponent: f64 },

    #[error("degenerate order estimate: coarsest residual {residual:e} is at rounding level")]
    DegenerateOrder { residual: f64 },

    #[error("singular update at node (j={j}, n={n}): 1 - c*dt vanishes")]
    SingularUpdate { j: usize, n: usize },

    #[error("non-finite value produced at node (j={j}, n={n})")]
    BlowUp { j: usize, n: usize },

    #[error("path {index}: {source}")]
    Path { index: usize, source: Box<Error> },

    #[error("coupling error: {0}")]
    Coupling(String),

    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Strips any path annotation.
    pub fn root(&self) -> &Error {
        match self {
            Error::Path { source, .. } => source.root(),
            e => e,
        }
    }
}
