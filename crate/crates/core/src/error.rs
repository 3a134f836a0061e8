use alloc::boxed::Box;
use alloc::string::String;

use crate::gnep::GnePair;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("not convex: {0}")]
    NotConvex(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    /// The iteration stalled above tolerance. `best` carries the last iterate
    /// when one could be assembled.
    #[error("no convergence (residual {residual:e})")]
    NoConvergence { residual: f64, best: Option<Box<GnePair>> },

    #[error("QP iteration limit reached")]
    MaxIter,

    #[error("QP objective unbounded below")]
    Unbounded,

    #[error("perturbed initial condition infeasible (coordinate {coordinate}, sign {sign})")]
    PerturbationInfeasible { coordinate: usize, sign: i8 },

    /// Storage-gradient identity requested with active shared constraints at
    /// the steady state. `extended_residual` is the residual of the identity
    /// corrected by the pseudoinverse term.
    #[error(
        "hypothesis violated: shared multipliers nonzero at steady state (extended residual {extended_residual:e})"
    )]
    HypothesisViolated { extended_residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
