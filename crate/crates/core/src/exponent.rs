//! Variable exponents `q(x)` on nodes and `p(x, y)` on node pairs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;

/// Description of a node exponent field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum QSpec {
    Constant {
        value: f64,
    },
    /// `base + slope . x`, optionally clamped to `[clamp[0], clamp[1]]`.
    Affine {
        base: f64,
        slope: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        clamp: Option<[f64; 2]>,
    },
    /// One value per node, row-major.
    Table {
        values: Vec<f64>,
    },
}

/// Description of a pair exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PSpec {
    Constant {
        value: f64,
    },
    /// `(f(x) + f(y)) / 2` for a node field `f`.
    Separable {
        field: QSpec,
    },
    /// `base + amplitude * min(1, |x - y| / scale)`; depends on `x - y` only.
    Distance {
        base: f64,
        amplitude: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// Row-major `N x N` table, row index = first argument.
    Table {
        values: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

fn check_value(v: f64, what: &str) -> Result<()> {
    if !v.is_finite() || v <= 1.0 {
        Err(Error::BoundViolation(format!(
            "{what} = {v} must be finite and > 1"
        )))
    } else {
        Ok(())
    }
}

fn sample_q(grid: &Grid, spec: &QSpec) -> Result<Vec<f64>> {
    match spec {
        QSpec::Constant { value } => Ok(vec![*value; grid.len()]),
        QSpec::Affine { base, slope, clamp } => {
            if slope.len() != grid.dim() {
                return Err(Error::InvalidParameter(format!(
                    "affine slope needs {} components, got {}",
                    grid.dim(),
                    slope.len()
                )));
            }
            Ok((0..grid.len())
                .map(|i| {
                    let x = grid.coords(i);
                    let v = base + slope.iter().zip(x).map(|(s, x)| s * x).sum::<f64>();
                    match clamp {
                        Some([lo, hi]) => v.clamp(*lo, *hi),
                        None => v,
                    }
                })
                .collect())
        }
        QSpec::Table { values } => {
            if values.len() != grid.len() {
                return Err(Error::InvalidParameter(format!(
                    "exponent table has {} values for {} nodes",
                    values.len(),
                    grid.len()
                )));
            }
            Ok(values.clone())
        }
    }
}

/// Exponent `q` sampled on the nodes, with tight bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentQ {
    values: Vec<f64>,
    q_minus: f64,
    q_plus: f64,
}

impl ExponentQ {
    pub fn build(grid: &Grid, spec: &QSpec) -> Result<Self> {
        Self::from_values(sample_q(grid, spec)?)
    }

    pub fn constant(grid: &Grid, value: f64) -> Result<Self> {
        Self::build(grid, &QSpec::Constant { value })
    }

    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        for (i, &v) in values.iter().enumerate() {
            check_value(v, &format!("q at node {i}"))?;
        }
        let q_minus = values.iter().copied().fold(f64::INFINITY, f64::min);
        let q_plus = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            values,
            q_minus,
            q_plus,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn q_minus(&self) -> f64 {
        self.q_minus
    }

    pub fn q_plus(&self) -> f64 {
        self.q_plus
    }

    pub fn is_constant(&self) -> bool {
        self.q_minus == self.q_plus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PKind {
    Constant,
    Separable,
    DiagonalInvariant,
    Tabulated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum PField {
    Constant(f64),
    Separable(Vec<f64>),
    Distance {
        base: f64,
        amplitude: f64,
        scale: f64,
    },
    Table(Vec<f64>),
}

/// Pair exponent `p(x_i, x_j)` on a grid. Not assumed symmetric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentP {
    grid: Grid,
    field: PField,
    p_minus: f64,
    p_plus: f64,
    diagonal_invariant: bool,
}

impl ExponentP {
    pub fn build(grid: &Grid, spec: &PSpec) -> Result<Self> {
        let n = grid.len();
        let (field, diagonal_invariant) = match spec {
            PSpec::Constant { value } => (PField::Constant(*value), true),
            PSpec::Separable { field } => {
                let f = sample_q(grid, field)?;
                let constant = f.iter().all(|&v| v == f[0]);
                (PField::Separable(f), constant)
            }
            PSpec::Distance {
                base,
                amplitude,
                scale,
            } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "distance scale must be positive, got {scale}"
                    )));
                }
                (
                    PField::Distance {
                        base: *base,
                        amplitude: *amplitude,
                        scale: *scale,
                    },
                    true,
                )
            }
            PSpec::Table { values } => {
                if values.len() != n * n {
                    return Err(Error::InvalidParameter(format!(
                        "pair exponent table has {} values, expected {}",
                        values.len(),
                        n * n
                    )));
                }
                (PField::Table(values.clone()), false)
            }
        };
        let mut p = Self {
            grid: *grid,
            field,
            p_minus: f64::INFINITY,
            p_plus: f64::NEG_INFINITY,
            diagonal_invariant,
        };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            for j in 0..n {
                let v = p.value(i, j);
                check_value(v, &format!("p at pair ({i}, {j})"))?;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        p.p_minus = lo;
        p.p_plus = hi;
        Ok(p)
    }

    pub fn constant(grid: &Grid, value: f64) -> Result<Self> {
        Self::build(grid, &PSpec::Constant { value })
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        match &self.field {
            PField::Constant(c) => *c,
            PField::Separable(f) => 0.5 * (f[i] + f[j]),
            PField::Distance {
                base,
                amplitude,
                scale,
            } => base + amplitude * (self.grid.distance(i, j) / scale).min(1.0),
            PField::Table(t) => t[i * self.grid.len() + j],
        }
    }

    pub fn kind(&self) -> PKind {
        match self.field {
            PField::Constant(_) => PKind::Constant,
            PField::Separable(_) => PKind::Separable,
            PField::Distance { .. } => PKind::DiagonalInvariant,
            PField::Table(_) => PKind::Tabulated,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    /// True when `p` provably depends on `x - y` alone.
    pub fn diagonal_invariant(&self) -> bool {
        self.diagonal_invariant
    }

    pub fn is_constant(&self) -> bool {
        self.p_minus == self.p_plus
    }
}
