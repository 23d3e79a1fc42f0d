//! Pointwise lattice operations on grid functions.

use crate::error::Result;
use crate::grid::GridFunction;

/// `max(u, 0)`
pub fn pos_part(u: &GridFunction) -> GridFunction {
    u.map(|v| v.max(0.0))
}

/// `max(-u, 0)`
pub fn neg_part(u: &GridFunction) -> GridFunction {
    u.map(|v| (-v).max(0.0))
}

pub fn abs_val(u: &GridFunction) -> GridFunction {
    u.map(f64::abs)
}

pub fn pointwise_min(u: &GridFunction, v: &GridFunction) -> Result<GridFunction> {
    u.zip_with(v, f64::min)
}

pub fn pointwise_max(u: &GridFunction, v: &GridFunction) -> Result<GridFunction> {
    u.zip_with(v, f64::max)
}

/// `min(c, u)` for a constant `c`.
pub fn min_const(u: &GridFunction, c: f64) -> GridFunction {
    u.map(|v| v.min(c))
}

/// Pointwise median of `0`, `u` and `1`.
pub fn clamp01(u: &GridFunction) -> GridFunction {
    u.map(|v| v.clamp(0.0, 1.0))
}
