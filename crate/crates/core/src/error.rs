use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape: {0}")]
    Shape(String),
    #[error("non-finite entries")]
    NonFinite,
    #[error("rank deficient")]
    RankDeficient,
    #[error("singular normal equations")]
    SingularNormalEquations,
    #[error("singular alignment")]
    SingularAlignment,
    #[error("not symmetric")]
    NotSymmetric,
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
    #[error("basis columns are not orthonormal (defect {0:.3e})")]
    NotOrthonormal(f64),
    #[error("undefined coherence")]
    UndefinedCoherence,
    #[error("zero observation vector")]
    ZeroVector,
    #[error("subspaces share no aligned frame")]
    NoAlignedFrame,
    #[error("gate bypassed on singular sample")]
    GateBypassedOnSingularSample,
    #[error("degenerate projection")]
    DegenerateProjection,
    #[error("no revealed direction")]
    NoRevealedDirection,
    #[error("invalid observation: {0}")]
    InvalidObservation(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse: {0}")]
    Parse(String),
}

impl Error {
    /// Short stable identifier, used by the CLI when reporting failures.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::NonFinite => "non-finite",
            Error::RankDeficient => "rank-deficient",
            Error::SingularNormalEquations => "singular-normal-equations",
            Error::SingularAlignment => "singular-alignment",
            Error::NotSymmetric => "not-symmetric",
            Error::NoConvergence(_) => "no-convergence",
            Error::NotOrthonormal(_) => "not-orthonormal",
            Error::UndefinedCoherence => "undefined-coherence",
            Error::ZeroVector => "zero-vector",
            Error::NoAlignedFrame => "no-aligned-frame",
            Error::GateBypassedOnSingularSample => "gate-bypassed-on-singular-sample",
            Error::DegenerateProjection => "degenerate-projection",
            Error::NoRevealedDirection => "no-revealed-direction",
            Error::InvalidObservation(_) => "invalid-observation",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Parse(_) => "parse",
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Csv(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
