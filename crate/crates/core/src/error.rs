use thiserror::Error;

/// Errors surfaced by the library. The `Display` strings are stable identifiers
/// that also show up in episode diagnostics and CLI output.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty-cloud")]
    EmptyCloud,
    #[error("degenerate-input")]
    DegenerateInput,
    #[error("generation-failed")]
    GenerationFailed,
    #[error("invalid-action")]
    InvalidAction,
    #[error("empty-library")]
    EmptyLibrary,
    #[error("infeasible-constraints")]
    InfeasibleConstraints,
    #[error("solver-stalled")]
    SolverStalled,
    #[error("degenerate-orientation")]
    DegenerateOrientation,
    #[error("no-grasp")]
    NoGrasp,
    #[error("invalid-keypoints")]
    InvalidKeypoints,
    #[error("bad-params")]
    BadParams,
    #[error("proposal-collapse")]
    ProposalCollapse,
    #[error("no-positive-data")]
    NoPositiveData,
    #[error("no-negative-data")]
    NoNegativeData,
    #[error("bootstrap-failed")]
    BootstrapFailed,
    #[error("bad-parts")]
    BadParts,
    #[error("diverged")]
    Diverged,
    #[error("missing-artifact: {0}")]
    MissingArtifact(String),
    #[error("parse-error: {0}")]
    Parse(String),
    #[error("invalid-input: {0}")]
    InvalidInput(String),
    #[error("bad-format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by the filesystem rather than by the inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::MissingArtifact(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
