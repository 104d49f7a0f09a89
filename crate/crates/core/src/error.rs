use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("argument {value} is outside the domain of {what} (floor {floor})")]
    Domain { what: &'static str, value: f64, floor: f64 },

    #[error("divergent integral: {0}")]
    Divergent(String),

    #[error("value {value} is outside the range of the inverse ({reason})")]
    OutOfRange { value: f64, reason: String },

    #[error("finite-difference instability: {0}")]
    FiniteDifference(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("monotonicity violated: {0}")]
    Monotonicity(String),

    #[error("point lies outside the patch of domain {domain}")]
    OutOfPatch { domain: String },

    #[error("point is not interior (r = {r})")]
    NotInterior { r: f64 },

    #[error("nearest boundary point is not unique: {0}")]
    NonUnique(String),

    #[error("grid point violates the strip -delta < r < 0 (r = {r}, delta = {delta})")]
    StripViolation { r: f64, delta: f64 },

    #[error("degenerate gradient (|d rho| = {0})")]
    DegenerateGradient(f64),

    #[error("function evaluation failed: {0}")]
    Evaluation(String),

    #[error("calibration failed on property {property}: {detail}")]
    Calibration { property: String, detail: String },

    #[error("rho(z, w) = {0} is not negative")]
    NonNegativeRho(f64),

    #[error("unsupported domain for this operation: {0}")]
    UnsupportedDomain(String),

    #[error("no feasible disc found: {0}")]
    NoFeasibleDisc(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    /// Stable machine-readable code used in CLI reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Domain { .. } => "domain",
            Error::Divergent(_) => "divergent_integral",
            Error::OutOfRange { .. } => "out_of_range",
            Error::FiniteDifference(_) => "finite_difference",
            Error::Consistency(_) => "internal_consistency",
            Error::Monotonicity(_) => "monotonicity",
            Error::OutOfPatch { .. } => "out_of_patch",
            Error::NotInterior { .. } => "non_interior_point",
            Error::NonUnique(_) => "non_unique_projection",
            Error::StripViolation { .. } => "strip_violation",
            Error::DegenerateGradient(_) => "degenerate_gradient",
            Error::Evaluation(_) => "evaluation_failure",
            Error::Calibration { .. } => "calibration_failure",
            Error::NonNegativeRho(_) => "nonnegative_rho",
            Error::UnsupportedDomain(_) => "unsupported_domain",
            Error::NoFeasibleDisc(_) => "no_feasible_disc",
            Error::Usage(_) => "usage",
            Error::Io(_) => "io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
