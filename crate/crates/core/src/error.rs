use thiserror::Error;

use crate::space::Cell;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    /// No coupling supported on finite-cost cells reproduces the marginals.
    /// The certificate is the set of cells removed for having infinite cost.
    #[error("infeasible: no finite-cost coupling matches the marginals ({} cells excluded)", excluded.len())]
    Infeasible { excluded: Vec<Cell> },

    #[error("internal consistency violated: {0}")]
    Internal(String),

    #[error("invalid certificate: splitting inequality violated by {violation:e} at cell {cell:?}")]
    InvalidCertificate { cell: Cell, violation: f64 },

    #[error("invalid potentials: c - sum u = {defect:e} at cell {cell:?}")]
    InvalidPotentials { cell: Cell, defect: f64 },

    #[error("cost is not differentiable at the requested point: {0}")]
    NonDifferentiable(String),

    #[error("block {block} is singular (smallest singular value {sigma_min:e})")]
    Singular { block: &'static str, sigma_min: f64 },

    #[error("inconsistent coupling: {0}")]
    InconsistentCoupling(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("undefined order region: coordinates {0} and {1} coincide")]
    UndefinedRegion(usize, usize),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
