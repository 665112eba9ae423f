use thiserror::Error;

/// Errors raised while loading data, building priors, or fitting models.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing mandatory column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: column `{column}` has unparsable value `{value}`")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: column `{column}` is not finite")]
    NonFinite { row: usize, column: String },
    #[error("row {row}: entry time {entry} exceeds exit time {time}")]
    EntryAfterExit { row: usize, entry: f64, time: f64 },
    #[error("row {row}: time {time} is negative")]
    NegativeTime { row: usize, time: f64 },
    #[error("row {row}: expected {expected} covariates, found {found}")]
    CovariateArity {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("dataset needs at least 2 records, got {0}")]
    TooFewRecords(usize),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("{segments} segments requested but only {admissible} admissible jump positions exist")]
    TooManySegments { segments: usize, admissible: usize },
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("posterior degenerate at position {position}")]
    DegeneratePosterior { position: usize },
    #[error("segment {segment} has no effective events")]
    NoEffectiveEvents { segment: usize },
    #[error("segment {segment}, interval {interval}: zero weighted exposure")]
    ZeroExposure { segment: usize, interval: usize },
    #[error("segment {segment}, interval {interval}: no weighted events")]
    NoIntervalEvents { segment: usize, interval: usize },
    #[error("{context}: Newton did not converge after {iterations} iterations (gradient sup-norm {grad_norm:.3e}, last iterate {last:?})")]
    NonConvergence {
        context: String,
        iterations: usize,
        grad_norm: f64,
        last: Vec<f64>,
    },
    #[error("{context}: Newton step diverged after step-halving")]
    Diverged { context: String },
    #[error("bandwidth must be positive, got {0}")]
    InvalidBandwidth(f64),
    #[error("model dimension is undefined for the nonparametric baseline")]
    DimensionUndefined,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("iteration {iteration}: {source}")]
    AtIteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{failed} of {total} bootstrap replicates failed (more than 20%)")]
    BootstrapFailures { failed: usize, total: usize },
}

impl Error {
    /// Stable machine-readable tag for the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::MissingColumn(_) => "missing_column",
            Error::Parse { .. } => "parse",
            Error::NonFinite { .. } => "non_finite",
            Error::EntryAfterExit { .. } => "entry_after_exit",
            Error::NegativeTime { .. } => "negative_time",
            Error::CovariateArity { .. } => "covariate_arity",
            Error::TooFewRecords(_) => "too_few_records",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
            Error::TooManySegments { .. } => "too_many_segments",
            Error::InvalidPrior(_) => "invalid_prior",
            Error::ShapeMismatch(_) => "shape_mismatch",
            Error::DegeneratePosterior { .. } => "degenerate_posterior",
            Error::NoEffectiveEvents { .. } => "no_effective_events",
            Error::ZeroExposure { .. } => "zero_exposure",
            Error::NoIntervalEvents { .. } => "no_interval_events",
            Error::NonConvergence { .. } => "non_convergence",
            Error::Diverged { .. } => "diverged",
            Error::InvalidBandwidth(_) => "invalid_bandwidth",
            Error::DimensionUndefined => "dimension_undefined",
            Error::InvalidConfig(_) => "invalid_config",
            Error::AtIteration { source, .. } => source.kind(),
            Error::BootstrapFailures { .. } => "bootstrap_failures",
        }
    }

    pub(crate) fn at_iteration(self, iteration: usize) -> Error {
        Error::AtIteration {
            iteration,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
