use thiserror::Error;

/// Errors raised by the analysis pipeline.
///
/// Hypothesis failures of the stability theorems are *not* errors; they are
/// reported inside a [`Certificate`](crate::certificates::Certificate).
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("singular dynamics: {0}")]
    SingularDynamics(String),

    #[error("matrix is not Metzler: entry ({row}, {col}) = {value}")]
    NonMetzler { row: usize, col: usize, value: f64 },

    #[error("matrix is not Hurwitz stable (spectral abscissa {abscissa:e})")]
    NotHurwitz { abscissa: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("set-point {r} is not admissible: {reason}")]
    InadmissibleSetPoint { r: f64, reason: String },

    #[error("transfer function has relative degree {0}, expected 1")]
    RelativeDegreeNotOne(i64),

    #[error("transfer function is improper (numerator degree {num} > denominator degree {den})")]
    Improper { num: usize, den: usize },

    #[error("evaluation at a pole on the imaginary axis (omega = {omega})")]
    PoleOnAxis { omega: f64 },

    #[error("no certificate found: {0}")]
    NoCertificateFound(String),

    #[error("no steady state found: {0}")]
    NoSteadyState(String),

    #[error("modelling assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("stiffness suspected at t = {time}: step size underflow")]
    StiffnessSuspected { time: f64 },

    #[error("invalid model at {pointer}: {message}")]
    InvalidModel {
        code: ModelErrorCode,
        pointer: String,
        message: String,
    },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// Stable name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NonFinite { .. } => "non_finite",
            Error::SingularDynamics(_) => "singular_dynamics",
            Error::NonMetzler { .. } => "non_metzler",
            Error::NotHurwitz { .. } => "not_hurwitz",
            Error::Precondition(_) => "precondition",
            Error::InadmissibleSetPoint { .. } => "inadmissible_set_point",
            Error::RelativeDegreeNotOne(_) => "relative_degree_not_one",
            Error::Improper { .. } => "improper",
            Error::PoleOnAxis { .. } => "pole_on_axis",
            Error::NoCertificateFound(_) => "no_certificate_found",
            Error::NoSteadyState(_) => "no_steady_state",
            Error::AssumptionViolated(_) => "assumption_violated",
            Error::StiffnessSuspected { .. } => "stiffness_suspected",
            Error::InvalidModel { .. } => "invalid_model",
            Error::Unsupported(_) => "unsupported",
            Error::Io(_) => "io",
        }
    }
}

/// Distinct codes for model validation failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ModelErrorCode {
    Parse,
    NonMetzler,
    NegativeBasal,
    NonPositiveParameter,
    Shape,
    InvalidTerm,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
