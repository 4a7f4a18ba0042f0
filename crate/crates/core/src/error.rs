use thiserror::Error;

/// Errors raised by the estimation toolkit.
///
/// Variants that can be traced to a particular grid node carry its time so the
/// caller can report where a computation broke down.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not Hurwitz or the Lyapunov solution is not positive definite: {0}")]
    NotHurwitz(String),

    #[error("matrix is not Schur stable or the Lyapunov solution is not positive definite: {0}")]
    NotSchurStable(String),

    #[error("matrix is not symmetric positive definite{}: min eigenvalue {min_eig:e}, max eigenvalue {max_eig:e}", fmt_time(.t))]
    NotSpd {
        t: Option<f64>,
        min_eig: f64,
        max_eig: f64,
    },

    #[error("matrix is indefinite beyond jitter: min eigenvalue {min_eig:e} < -{jitter:e}{}", fmt_time(.t))]
    Indefinite {
        t: Option<f64>,
        min_eig: f64,
        jitter: f64,
    },

    #[error("matrix is singular{}: {what}", fmt_time(.t))]
    Singular { t: Option<f64>, what: String },

    #[error("time {t} is not a node of the grid (t0 = {t0}, h = {h})")]
    OffGrid { t: f64, t0: f64, h: f64 },

    #[error("non-finite value encountered{}: {what}", fmt_time(.t))]
    NonFinite { t: Option<f64>, what: String },

    #[error("model is not balanced at t = {t}: residual {residual:e}")]
    NotBalanced { t: f64, residual: f64 },

    #[error("observation record does not match the pattern: {0}")]
    PatternMismatch(String),

    #[error("dimension mismatch in {field}: {detail}")]
    Dimension { field: String, detail: String },

    #[error("invalid argument: {0}")]
    Invalid(String),
}

fn fmt_time(t: &Option<f64>) -> String {
    match t {
        Some(t) => format!(" at t = {t}"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a node time to errors that carry one, keeping any time already set.
    pub fn at_time(self, time: f64) -> Self {
        match self {
            Error::NotSpd {
                t: None,
                min_eig,
                max_eig,
            } => Error::NotSpd {
                t: Some(time),
                min_eig,
                max_eig,
            },
            Error::Indefinite {
                t: None,
                min_eig,
                jitter,
            } => Error::Indefinite {
                t: Some(time),
                min_eig,
                jitter,
            },
            Error::Singular { t: None, what } => Error::Singular {
                t: Some(time),
                what,
            },
            Error::NonFinite { t: None, what } => Error::NonFinite {
                t: Some(time),
                what,
            },
            other => other,
        }
    }

    pub(crate) fn dim(field: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Dimension {
            field: field.into(),
            detail: detail.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
