use thiserror::Error;

/// Errors raised while building trees, solving chains, or sampling kernels.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "cannot certify horizontal edge {x} ~ {y} at level {level} (threshold {threshold:.3e}); \
         gamma sits on a decision boundary, try a different gamma"
    )]
    UndecidableEdge {
        x: String,
        y: String,
        level: usize,
        threshold: f64,
    },

    #[error("point cloud would hold {size} points (cap {cap}); use a smaller depth")]
    CloudTooLarge { size: usize, cap: usize },

    #[error(
        "weights are not admissible: horizontal weight ratio range [{min:.4e}, {max:.4e}] \
         leaves the band [{lo}, {hi}] (doubling condition fails)"
    )]
    NotAdmissible { min: f64, max: f64, lo: f64, hi: f64 },

    #[error("unknown vertex {0}")]
    UnknownVertex(String),

    #[error("{0} is undefined")]
    Undefined(String),

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("no stabilization: {0}")]
    NoStabilization(String),

    #[error("need at least {need} usable samples, got {got}")]
    InsufficientSamples { need: usize, got: usize },

    #[error("all {0} paths hit the step cap")]
    StepCapExhausted(usize),

    #[error("unknown export format {0:?}")]
    UnknownFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
