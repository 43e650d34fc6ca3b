//! Crate-wide error type and result alias.

/// Errors produced by the correspondence pipeline.
///
/// The CLI maps these onto process exit codes: configuration problems
/// (`Config`, `InvalidArgument`) exit with 2, everything else with 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller passed inconsistent or out-of-range arguments.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Input data is missing, malformed, or violates its schema.
    #[error("data error: {0}")]
    Data(String),

    /// A binary or structured file does not match its expected format.
    #[error("format error: {0}")]
    Format(String),

    /// The run configuration is unusable (missing file, unknown backend, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// A numeric computation received non-finite inputs or produced
    /// non-finite outputs.
    #[error("computation error: {0}")]
    Computation(String),

    /// An internal invariant did not hold; indicates a bug upstream.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// The training loop hit an unrecoverable state (non-finite loss, ...).
    #[error("training error: {0}")]
    Training(String),

    /// Rigid-motion fitting saw a rotation too small to define an axis.
    #[error("degenerate motion: {0}")]
    DegenerateMotion(String),

    /// Point sets are rank-deficient (collinear or coincident).
    #[error("rank deficient: {0}")]
    RankDeficient(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI contract: 0 success, 1 data error,
    /// 2 configuration error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) => 2,
            _ => 1,
        }
    }

    /// Short machine-readable kind tag used in structured error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Data(_) => "data",
            Error::Format(_) => "format",
            Error::Config(_) => "config",
            Error::Computation(_) => "computation",
            Error::InvariantViolation(_) => "invariant_violation",
            Error::Training(_) => "training",
            Error::DegenerateMotion(_) => "degenerate_motion",
            Error::RankDeficient(_) => "rank_deficient",
            Error::Io(_) => "io",
        }
    }
}
