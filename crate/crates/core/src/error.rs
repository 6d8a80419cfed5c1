use thiserror::Error;

/// A numeric kernel was called outside its domain.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("non-finite {what}")]
    NonFinite { what: &'static str },
    #[error("invalid cutoff thresholds: need 0 < d1 < d2, got d1 = {d1}, d2 = {d2}")]
    InvalidThresholds { d1: f64, d2: f64 },
    #[error("pair distance {dist} is at or below the singularity guard {guard}")]
    Singular { dist: f64, guard: f64 },
    #[error("destination line normal must have unit length, got norm {norm}")]
    NonUnitNormal { norm: f64 },
    #[error("route must contain at least one destination line")]
    EmptyRoute,
}

/// A parameter set breaks one of the modelling assumptions.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("Assumption 1: avoidance radius r_a = {r_a} must exceed safety radius r_s = {r_s}")]
    AvoidanceRadius { r_s: f64, r_a: f64 },
    #[error(
        "Assumption 1: r_d too small, need > r_s + r_a + 2·max(v_m/l) = {need}, got r_d = {r_d}"
    )]
    DetectionRadius { r_d: f64, need: f64 },
    #[error("safety margin: r_s = {r_s} must exceed physical_radius + max(v_m/(2l)) = {need}")]
    SafetyMargin { r_s: f64, need: f64 },
    #[error("gain condition: k1 = {k1} must exceed v_m/eps_d = {need}")]
    GainCondition { k1: f64, need: f64 },
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("eps_s must lie in (0, 1), got {0}")]
    BlendEps(f64),
    #[error("{0}")]
    Scenario(String),
}

/// Failure to read or interpret a scenario file.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: key `{key}`: {message}")]
    Key {
        line: usize,
        key: String,
        message: String,
    },
    #[error("missing required key `{key}` in [{section}]")]
    Missing {
        section: &'static str,
        key: &'static str,
    },
    #[error("scenario file is empty")]
    Empty,
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Failure while persisting or reloading run output.
#[derive(Debug, Error)]
pub enum OutputError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unknown export kind `{0}` (expected routes, min_dist_series, line_dist_series or v1_series)")]
    UnknownKind(String),
    #[error("malformed trace row {row}: {message}")]
    Malformed { row: usize, message: String },
}
