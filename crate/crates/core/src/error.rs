use thiserror::Error;

/// Errors raised by the discretization, modular and capacity routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("exponent bound violated: {0}")]
    BoundViolation(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("objects live on different grids")]
    GridMismatch,

    #[error("non-finite input at node {0}")]
    NonFiniteInput(usize),

    #[error("modular of the input is zero")]
    ZeroModular,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("pinned mask is infeasible: {0}")]
    InfeasibleMask(String),

    #[error("brute force oracle supports at most {max} free nodes, got {got}")]
    TooManyFreeNodes { got: usize, max: usize },

    #[error("target mask is not contained in the domain")]
    MaskNotInDomain,

    #[error("subset {0} is not contained in the target")]
    MaskNotInTarget(usize),

    #[error("set sequence is not monotone at position {0}")]
    InvalidSequence(usize),

    #[error("solver stopped after {iters} iterations with projected gradient norm {projected_grad_norm:e}")]
    NotConverged {
        iters: usize,
        projected_grad_norm: f64,
    },

    /// The admissible class is empty and the capacity is +inf.
    ///
    /// On a finite grid the indicator of any mask is admissible, so this is
    /// never produced; it stays in the API to mirror the continuum definition.
    #[error("no admissible function, capacity is infinite")]
    NoAdmissibleFunction,
}

pub type Result<T> = std::result::Result<T, Error>;
