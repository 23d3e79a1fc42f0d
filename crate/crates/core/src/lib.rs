//! Fractional Sobolev spaces with variable exponents on finite grids.
//!
//! The crate evaluates the modular
//! `rho(u) = int |u|^q(x) + int int |u(x)-u(y)|^p(x,y) / |x-y|^(d+s p(x,y))`
//! on piecewise-constant grid functions, the Luxemburg norm it induces, and
//! Sobolev and relative capacities as convex minimization problems. The
//! [`suite`] module re-checks the structural properties of these objects on
//! random instances.

pub mod capacity;
pub mod error;
pub mod exponent;
pub mod grid;
pub mod io;
pub mod lattice;
pub mod modular;
pub mod optimizer;
pub mod suite;

pub use capacity::{CapacityProblem, CapacityResult, Variant};
pub use error::{Error, Result};
pub use exponent::{ExponentP, ExponentQ, PSpec, QSpec};
pub use grid::{Grid, GridFunction, Mask, MaskSpec};
pub use modular::{Modular, ModularParams, ModularValue};
pub use optimizer::{OptimizerConfig, SolveResult};
