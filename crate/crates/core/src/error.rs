use thiserror::Error;

/// Errors raised by the library.
///
/// Variants fall into three families that callers (notably the CLI) map onto
/// exit codes: input validation, numerical failure, and broken invariants.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Domain(String),

    #[error("covariance factorization failed at leading minor {index} (after {retries} jitter retries)")]
    Factorization { index: usize, retries: usize },

    #[error("ladder overflow: more than {max_stops} stops detected on path {path}")]
    LadderOverflow { path: usize, max_stops: usize },

    #[error("zero reference probability for mark {mark} (every mark must be possible)")]
    ZeroReferenceProbability { mark: i8 },

    #[error("no Esscher solution: 0 is not interior to the increment hull (delta = {delta:e})")]
    NoEsscherSolution { delta: f64 },

    #[error("Esscher Newton iteration did not converge after {iterations} iterations (|grad| = {grad_norm:e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },

    #[error("increment cloud has no mass at zero")]
    NoZeroMass,

    #[error("conditioning bucket (stop {stop}, key {key}) failed: {reason}")]
    Bucket {
        stop: usize,
        key: String,
        reason: String,
    },

    #[error("sandwich violated on path {path} at t = {t}: ratio {ratio} outside [{lo}, {hi}]")]
    Sandwich {
        path: usize,
        t: f64,
        ratio: f64,
        lo: f64,
        hi: f64,
    },

    #[error("moment bound violated: {0}")]
    MomentBound(String),

    #[error("superreplication certificate failed on path {path}: wealth {wealth} < payoff {payoff}")]
    Superreplication {
        path: usize,
        wealth: f64,
        payoff: f64,
    },

    #[error("chord ({u}, {v}) does not bracket s0 = {s0}")]
    ChordBracket { u: f64, v: f64, s0: f64 },

    #[error("eps = {eps} too large for the delta-neighbourhoods: {detail}; use a smaller eps")]
    EpsTooLarge { eps: f64, detail: String },

    #[error("density normalization failed: residual {residual:e} at horizon {horizon}")]
    DensityNormalization { residual: f64, horizon: usize },

    #[error("strategy knot at t = {0} is not on the path grid")]
    OffGridKnot(f64),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Broad class of an [`Error`], used for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    Numerical,
    Invariant,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Domain(_)
            | Error::OffGridKnot(_)
            | Error::ChordBracket { .. }
            | Error::EpsTooLarge { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => ErrorClass::Validation,
            Error::Factorization { .. }
            | Error::LadderOverflow { .. }
            | Error::NoEsscherSolution { .. }
            | Error::NonConvergence { .. }
            | Error::NoZeroMass
            | Error::ZeroReferenceProbability { .. }
            | Error::Bucket { .. }
            | Error::DensityNormalization { .. } => ErrorClass::Numerical,
            Error::Sandwich { .. } | Error::MomentBound(_) | Error::Superreplication { .. } => {
                ErrorClass::Invariant
            }
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
