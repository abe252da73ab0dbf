use thiserror::Error;

/// Failures raised anywhere in the laboratory.
///
/// Every variant maps onto one process exit code through [`LabError::exit_code`]:
/// invalid input is `1`, numerical failure is `2`, broken internal invariants are `3`.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },

    #[error("E_ON_SPECTRUM: energy {energy} hits a zero pivot after {retries} jitter retries")]
    OnSpectrum { energy: f64, retries: usize },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("budget exceeded for `{key}`: {reason}")]
    Budget { key: String, reason: String },

    #[error("censored: {0}")]
    Censored(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl LabError {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Invalid {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn budget(key: impl Into<String>, reason: impl Into<String>) -> Self {
        LabError::Budget {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            LabError::Invalid { .. } => 1,
            LabError::OnSpectrum { .. }
            | LabError::NoConvergence { .. }
            | LabError::Budget { .. }
            | LabError::Censored(_) => 2,
            LabError::Invariant(_) | LabError::Io(_) | LabError::Json(_) => 3,
        }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
