use thiserror::Error;

/// Crate-wide error type. Numeric payloads are widened to `f64` so the enum
/// stays independent of the scalar parameter.
#[derive(Debug, Error)]
pub enum Error {
    #[error("spectrum must contain at least one nonzero finite coefficient")]
    DegenerateSpectrum,
    #[error("times must be nonnegative (got s={s}, t={t})")]
    NegativeTime { s: f64, t: f64 },
    #[error("time grid needs a positive horizon and at least one step")]
    EmptyGrid,
    #[error("step index {k} out of range (grid has {max} steps)")]
    StepOutOfRange { k: usize, max: usize },
    #[error("no Brownian stream for component {j}, mode {n}")]
    UnknownStream { j: usize, n: usize },
    #[error("spectrum has {spec} modes but the forcing path stores {path}")]
    ModeCountMismatch { spec: usize, path: usize },
    #[error("time grids of the path and the trajectory differ")]
    GridMismatch,
    #[error("grid resolves only {m} points for {n_max} forcing modes; need m > 2*n_max")]
    GridTooCoarse { m: usize, n_max: usize },
    #[error(
        "stability violated at step {step}: dt={dt:.3e} exceeds {limit:.3e}; \
         reduce dt to at most {suggested:.3e}"
    )]
    Unstable {
        step: usize,
        dt: f64,
        limit: f64,
        suggested: f64,
    },
    #[error("non-finite field value at step {step}")]
    NonFinite { step: usize },
    #[error("field value dropped to {value:.3e} at step {step}: dt too large relative to epsilon")]
    NonPositive { step: usize, value: f64 },
    #[error("exponent magnitude {exponent:.3e} would overflow; increase epsilon or shorten the horizon")]
    ExponentOverflow { exponent: f64 },
    #[error(
        "no start converged within {max_iter} iterations; best action {best_action:.6e}, \
         gradient max-norm {grad_norm:.3e}"
    )]
    NoConvergence {
        max_iter: usize,
        best_action: f64,
        grad_norm: f64,
        /// Best trajectory found so far, widened to f64.
        best: Vec<f64>,
    },
    #[error("moment order {order} exceeds the supported maximum {max}")]
    OrderTooLarge { order: usize, max: usize },
    #[error("order p={p} must be at least 1")]
    OrderTooSmall { p: usize },
    #[error("need at least {needed} samples (got {got})")]
    TooFewSamples { got: usize, needed: usize },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("acceptance check failed: {0}")]
    AcceptanceFailed(String),
    #[error("too many unstable realizations: {excluded} of {total} excluded (limit 1%)")]
    TooManyExclusions { excluded: usize, total: usize },
    #[error("forcing dump is malformed: {0}")]
    BadDump(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
