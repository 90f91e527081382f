use thiserror::Error;

/// Errors produced by the analysis, design and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid topology `{label}`: {reason}")]
    InvalidTopology { label: String, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("eigen-analysis failed: {0}")]
    Analysis(String),

    #[error(
        "connectivity oracles disagree on topology `{label}` \
         (spectral: {spectral}, reachability: {reachability}); check the zero tolerance"
    )]
    ConnectivityMismatch {
        label: String,
        spectral: bool,
        reachability: bool,
    },

    #[error("Riccati solver: {0}")]
    Riccati(String),

    #[error("singular Sylvester equation: {0}")]
    SingularSylvester(String),

    #[error("matrix inequality not negative definite on topology `{label}` (max eigenvalue {max_eigenvalue:e}); increase ell")]
    Lemma1Indefinite { label: String, max_eigenvalue: f64 },

    #[error("no ell up to {max_ell} makes every topology satisfy the matrix inequality")]
    EllSearchFailed { max_ell: f64 },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("state diverged at t = {t}: {reason}")]
    Divergence { t: f64, reason: String },

    #[error("unknown dynamics `{0}` (expected zero_phi, bounded_sine or saturated_damping)")]
    UnknownDynamics(String),

    #[error("topology set has no {0} topology to use as separator")]
    MissingClass(&'static str),

    #[error("infeasible signal parameters: {0}")]
    InfeasibleSignal(String),

    #[error("parse error in {file}: {message}")]
    Parse { file: String, message: String },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
