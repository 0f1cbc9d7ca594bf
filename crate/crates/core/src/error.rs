use thiserror::Error;

/// Failures raised by the numerical layers and the suite driver.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("pole: {0}")]
    Pole(String),
    #[error("sector mismatch: {0}")]
    SectorMismatch(String),
    #[error("sector error: {0}")]
    Sector(String),
    #[error("propagator evaluated at the origin")]
    Origin,
    #[error("divergent: {0}")]
    Divergent(String),
    #[error("non-finite integrand value at {0}")]
    NaN(String),
    #[error("evaluation budget exceeded: {needed} > {budget}")]
    Budget { needed: f64, budget: f64 },
    #[error("pinched contour: margin {margin:.3e} below {threshold:.1e}")]
    Pinched { margin: f64, threshold: f64 },
    #[error("truncation: {0}")]
    Truncation(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("non-integrable singularity: {0}")]
    NonIntegrable(String),
    #[error("cutoff: {0}")]
    Cutoff(String),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    /// Stable name of the variant, used in diagnostics and records.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Pole(_) => "PoleError",
            Error::SectorMismatch(_) => "SectorMismatchError",
            Error::Sector(_) => "SectorError",
            Error::Origin => "OriginError",
            Error::Divergent(_) => "DivergentError",
            Error::NaN(_) => "NaNError",
            Error::Budget { .. } => "BudgetError",
            Error::Pinched { .. } => "PinchedContourError",
            Error::Truncation(_) => "TruncationError",
            Error::Degenerate(_) => "DegenerateError",
            Error::Constraint(_) => "ConstraintError",
            Error::Fit(_) => "FitError",
            Error::NonIntegrable(_) => "NonIntegrableError",
            Error::Cutoff(_) => "CutoffError",
            Error::Config(_) => "ConfigError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
