use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("degenerate cup: height {height:e} at delta = {delta} is below the floating-point floor")]
    DegenerateCup { delta: f64, height: f64 },

    #[error("ambiguous component assignment: {0}")]
    AmbiguousComponent(String),

    #[error("pole at z = {0}")]
    Pole(crate::C64),

    #[error("quadrature did not converge for {what} (error estimate {error:e})")]
    Quadrature { what: String, error: f64 },

    #[error("function is not in the Bergman space: {0}")]
    NotInSpace(String),

    #[error("inconsistent quadrature: squared residual {0:e} is negative beyond tolerance")]
    Inconsistent(f64),

    #[error("runge approximation failed: best sup error {best:e} exceeds {tol:e}")]
    Runge { best: f64, tol: f64 },

    #[error("stage {stage} failed: {reason}")]
    Stage { stage: usize, reason: String },

    #[error("projection residual floor {achieved:e} is above eps = {eps:e}")]
    ResidualFloor { achieved: f64, eps: f64 },

    #[error("not implemented: {0}")]
    NotImplemented(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
