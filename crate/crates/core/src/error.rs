use thiserror::Error;

/// Errors raised by the estimation, testing and coverage routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("period index {index} out of range for a series with {len} periods")]
    InvalidPeriod { index: usize, len: usize },

    #[error("empty period selection")]
    EmptyPeriods,

    #[error("invalid price index at group {group}, period {period}: {value}")]
    InvalidPrice {
        group: String,
        period: String,
        value: f64,
    },

    #[error("invalid weight for group #{group}: {value}")]
    InvalidWeight { group: usize, value: f64 },

    #[error("weights sum to {0}, cannot normalize")]
    DegenerateWeights(f64),

    #[error("proxy weight is zero for group #{group}")]
    ZeroProxyWeight { group: usize },

    #[error("need at least {required} {what}, found {found}")]
    TooFew {
        what: &'static str,
        required: usize,
        found: usize,
    },

    #[error("household {household} has {found} expenditure entries, expected {expected}")]
    RecordLength {
        household: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid expenditure {value} for household {household}")]
    InvalidExpenditure { household: String, value: f64 },

    #[error("all expenditures are zero")]
    ZeroExpenditure,

    #[error("covariance matrix is not valid: {0}")]
    InvalidCovariance(String),

    #[error("negative quadratic form {value} (scale {scale}); covariance is broken")]
    NegativeVariance { value: f64, scale: f64 },

    #[error("degenerate test: variance {variance} is numerically zero")]
    DegenerateTest { variance: f64 },

    #[error("proxy index series is constant, slope undefined")]
    UndefinedSlope,

    #[error("parameter {name} = {value} out of range: {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("root finder failed: {0}")]
    RootNotFound(String),

    #[error("scenario mismatch: {operation} cannot run a {scenario} plan")]
    WrongScenario {
        operation: &'static str,
        scenario: &'static str,
    },

    #[error("invalid simulation design: {0}")]
    InvalidDesign(String),

    #[error("unknown label {0}")]
    UnknownLabel(String),
}

impl AuditError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            AuditError::DimensionMismatch { .. } => "dimension_mismatch",
            AuditError::InvalidPeriod { .. } => "invalid_period",
            AuditError::EmptyPeriods => "empty_periods",
            AuditError::InvalidPrice { .. } => "invalid_price",
            AuditError::InvalidWeight { .. } => "invalid_weight",
            AuditError::DegenerateWeights(_) => "degenerate_weights",
            AuditError::ZeroProxyWeight { .. } => "zero_proxy_weight",
            AuditError::TooFew { .. } => "too_few",
            AuditError::RecordLength { .. } => "record_length",
            AuditError::InvalidExpenditure { .. } => "invalid_expenditure",
            AuditError::ZeroExpenditure => "zero_expenditure",
            AuditError::InvalidCovariance(_) => "invalid_covariance",
            AuditError::NegativeVariance { .. } => "negative_variance",
            AuditError::DegenerateTest { .. } => "degenerate_test",
            AuditError::UndefinedSlope => "undefined_slope",
            AuditError::OutOfRange { .. } => "out_of_range",
            AuditError::RootNotFound(_) => "root_not_found",
            AuditError::WrongScenario { .. } => "wrong_scenario",
            AuditError::InvalidDesign(_) => "invalid_design",
            AuditError::UnknownLabel(_) => "unknown_label",
        }
    }
}

pub type Result<T, E = AuditError> = std::result::Result<T, E>;
