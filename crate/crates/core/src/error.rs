use thiserror::Error;

/// Trace row logged by the iterative solvers: `(iteration, best loss so far,
/// elapsed wall time in ms)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iter: usize,
    pub loss: f64,
    pub elapsed_ms: f64,
}

#[derive(Debug, Error)]
pub enum PrError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// Loss or iterate became non-finite and no restarts were left.
    #[error("solver diverged at iteration {iter}")]
    Diverged { iter: usize, trace: Vec<TraceEntry> },
}
