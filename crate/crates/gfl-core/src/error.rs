use thiserror::Error;

/// Errors shared by every module in the crate.
#[derive(Debug, Error)]
pub enum GflError {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("matrix not symmetric: max |A - A^T| = {asym:.3e} exceeds {tol:.3e}")]
    NotSymmetric { asym: f64, tol: f64 },

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {offdiag:.3e})")]
    NoConvergence { sweeps: usize, offdiag: f64 },

    #[error("rank-deficient columns: column {col} collapsed during orthogonalization")]
    RankDeficient { col: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite values produced at layer {layer}")]
    NonFinite { layer: usize },

    #[error("degenerate demand draw after {attempts} attempts")]
    DegenerateDemand { attempts: usize },

    #[error("constraint violation: {0}")]
    Constraint(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, GflError>;
