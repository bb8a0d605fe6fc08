use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("matrix exponential overflowed (1-norm {norm:.3e})")]
    ExpOverflow { norm: f64 },

    #[error("matrix is singular to working precision (pivot ratio {condition:.3e})")]
    Singular { condition: f64 },

    #[error("eigenvalue iteration did not converge after {iterations} sweeps")]
    EigenNoConvergence { iterations: usize },

    #[error("Riccati recursion diverged after {iterations} iterations (last step {step:.3e})")]
    RiccatiDiverged { iterations: usize, step: f64 },

    #[error("closed loop is not stable (spectral radius {radius:.6})")]
    UnstableClosedLoop { radius: f64 },

    #[error("constraint matrix is rank deficient (rank {rank} < {rows})")]
    RankDeficient { rank: usize, rows: usize },

    #[error("no invertible input split for the constraint (best |det| {best_det:.3e} with inputs {split:?})")]
    SingularInputSplit { split: Vec<usize>, best_det: f64 },

    #[error("projection block system is near singular at t = {t:.6} s (conditioning {conditioning:.3e})")]
    NearSingularProjection { t: f64, conditioning: f64 },

    #[error("remaining phase time {remaining:.3e} s is below the projection clamp {min:.3e} s")]
    RemainingTimeTooShort { remaining: f64, min: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid robot parameters: {0}")]
    InvalidParams(String),

    #[error("disturbance signal is not defined on [{from:.6}, {to:.6}]")]
    DisturbanceGap { from: f64, to: f64 },

    #[error("logarithm argument {0:.6} is not positive")]
    LogDomain(f64),

    #[error("{criterion} criterion unattainable for mu in [{lo}, {hi}] (closest value {closest:.4} at mu = {mu:.4})")]
    MuUnattainable {
        criterion: &'static str,
        lo: f64,
        hi: f64,
        closest: f64,
        mu: f64,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
