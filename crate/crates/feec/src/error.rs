//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by mesh construction, form algebra, and the interpolation
/// pipeline.
#[derive(Debug, Error)]
pub enum FeecError {
    /// Two cells intersect in a set that is not a common subsimplex.
    #[error("nonconforming mesh: cells {cell_a} and {cell_b} share a non-face intersection")]
    NonconformingMesh { cell_a: usize, cell_b: usize },

    /// A simplex has affinely dependent vertices (zero volume).
    #[error("degenerate simplex: {0}")]
    DegenerateSimplex(String),

    /// A simplex handle does not belong to the complex.
    #[error("unknown simplex id {0}")]
    UnknownSimplex(usize),

    /// No facet chain joins two cells around a shared face.
    #[error("complex is not face-connected around simplex {0}")]
    NotFaceConnected(usize),

    /// A boundary simplex has no boundary facet containing it.
    #[error("no admissible anchor facet for boundary simplex {0}")]
    NoAdmissibleAnchor(usize),

    /// Binary operation on forms living on different simplices.
    #[error("host simplex mismatch")]
    HostMismatch,

    /// Wedge product would exceed the host dimension.
    #[error("form degree {degree} exceeds host dimension {dim}")]
    DegreeOverflow { degree: usize, dim: usize },

    /// Trace requested onto a simplex that is not a subsimplex of the host.
    #[error("not a subsimplex of the host")]
    NotASubsimplex,

    /// Exact integration requires the form degree to match the host dimension.
    #[error("integration degree mismatch: form degree {degree}, host dimension {dim}")]
    DegreeMismatch { degree: usize, dim: usize },

    /// A sampled form was flagged as having no well-defined trace.
    #[error("sampled form does not support traces")]
    TraceUnavailable,

    /// The weight/ring Gram matrix could not be inverted.
    #[error("singular dual pairing (dim {dim}, condition estimate {cond:.3e})")]
    SingularPairing { dim: usize, cond: f64 },

    /// Extension input has a nonvanishing proper trace.
    #[error("extension input is not a bubble: trace residual {residual:.3e}")]
    NotABubble { residual: f64 },

    /// The facet moment system stayed rank deficient up to the degree cap.
    #[error(
        "facet moment system rank deficient at degree cap: {rows} conditions, {cols} candidates, residual {residual:.3e}"
    )]
    MomentSystemRankDeficient {
        rows: usize,
        cols: usize,
        residual: f64,
    },

    /// An operation needed the exterior derivative of a sampled form.
    #[error("sampled form lacks an exterior derivative")]
    MissingExteriorDerivative,

    /// Operation requires a different ambient dimension.
    #[error("wrong ambient dimension {got}, expected {expected}")]
    WrongDimension { got: usize, expected: usize },

    /// Unknown manufactured target name.
    #[error("unknown manufactured target `{0}`")]
    UnknownTarget(String),

    /// Malformed study configuration.
    #[error("invalid study configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FeecError>;
