use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("kink support [{lo}, {hi}] does not fit in the box [-L/4, L/4] with L = {l}")]
    BoxTooSmall { lo: f64, hi: f64, l: f64 },
    #[error("adaptive integrator step size underflow at s = {s}")]
    StepSizeUnderflow { s: f64 },
    #[error("|q| = {abs_q} is not strictly inside the unit disc")]
    QOnUnitCircle { abs_q: f64 },
    #[error("truncation tail {tail:.3e} at mode N = {n} exceeds tolerance {tol:.1e}")]
    TruncationTooCoarse { tail: f64, n: usize, tol: f64 },
    #[error("projected Fredholm system is numerically singular (condition estimate {cond:.3e})")]
    SingularSystem { cond: f64 },
    #[error("Fredholm system is nearly singular (condition estimate {cond:.3e})")]
    NearSingular { cond: f64 },
    #[error("support of g - id reaches within {dist:.3} of the window edge (need {need:.3})")]
    WindowTooSmall { dist: f64, need: f64 },
    #[error("spectral tail ratio {ratio:.3e} exceeds {tol:.1e}; derivatives unresolved")]
    DerivativeUnresolved { ratio: f64, tol: f64 },
    #[error("field support touches the window edge")]
    SupportClipped,
    #[error("series did not converge within {terms} terms")]
    NotConverged { terms: usize },
    #[error("q-series infeasible at Im tau = {im_tau:.3e}")]
    SeriesInfeasible { im_tau: f64 },
    #[error("beta_left equals beta_right; use the s-parameterised entry point (--by-s)")]
    DeltaBetaZero,
    #[error("lambda = {re} + {im}i hits a pole of the rate function")]
    PoleHit { re: f64, im: f64 },
    #[error("invalid configuration key `{key}`: {msg}")]
    ConfigInvalid { key: String, msg: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn config(key: &str, msg: impl Into<String>) -> Self {
        Error::ConfigInvalid { key: key.to_string(), msg: msg.into() }
    }

    pub fn is_config(&self) -> bool {
        matches!(self, Error::ConfigInvalid { .. } | Error::BoxTooSmall { .. } | Error::DeltaBetaZero)
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
