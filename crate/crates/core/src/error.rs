use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("permittivity pole at omega = {omega} (resonance {omega0})")]
    Pole { omega: f64, omega0: f64 },
    #[error("omega = {omega} lies in the bandgap (non-propagating)")]
    Evanescent { omega: f64 },
    #[error("omega = {omega} is too close to a branch edge")]
    BranchEdge { omega: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid medium profile: {0}")]
    InvalidProfile(String),
    #[error("region boundary {boundary} falls between grid points")]
    Misaligned { boundary: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("mass matrix is not positive definite at block {block}")]
    IndefiniteMass { block: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("eigensolver failure: {0}")]
    Solver(String),
    #[error("ambiguous spectral peak for mode {mode}")]
    AmbiguousPeak { mode: usize },
    #[error("operation requires a zero Bloch phase")]
    BlochPhase,
    #[error("wavepacket tail {tail:e} reaches a material region")]
    SupportViolation { tail: f64 },
    #[error("domain too small: {0}")]
    DomainTooSmall(String),
    #[error("zero detector intensity, correlation undefined")]
    ZeroIntensity,
    #[error("band clipped by the retained spectrum: {0}")]
    BandClipping(String),
    #[error("parameter search failed: {0}")]
    SearchFailed(String),
    #[error("operator word leaves the truncated Fock space")]
    Truncation,
    #[error("state and kernels come from different bases")]
    BasisMismatch,
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Category reported by the command line runner.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) | Error::Io(_) => "config",
            Error::InvalidProfile(_) | Error::Misaligned { .. } | Error::DimensionMismatch { .. } => {
                "assembly"
            }
            Error::IndefiniteMass { .. } | Error::Invariant(_) | Error::Solver(_) => "solver",
            _ => "experiment",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
