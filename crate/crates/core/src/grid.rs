//! Regular lattices over a box, node masks and grid functions.
//!
//! Node `i` stands for the cell of side `h` centred at `origin + h * multi_index(i)`.
//! Nodes are numbered row-major: in 2D the last axis runs fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A regular lattice in dimension 1 or 2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    shape: [usize; 2],
    origin: [f64; 2],
    h: f64,
}

impl Grid {
    pub fn new(shape: &[usize], origin: &[f64], h: f64) -> Result<Self> {
        let dim = shape.len();
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 1 or 2, got {dim}"
            )));
        }
        if origin.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "origin has {} coordinates for a {dim}-dimensional grid",
                origin.len()
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "spacing must be positive, got {h}"
            )));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(Error::InvalidGrid("origin must be finite".into()));
        }
        let mut s = [1usize; 2];
        let mut o = [0.0; 2];
        s[..dim].copy_from_slice(shape);
        o[..dim].copy_from_slice(origin);
        if s[0] * s[1] < 2 {
            return Err(Error::InvalidGrid("a grid needs at least 2 nodes".into()));
        }
        Ok(Self {
            dim,
            shape: s,
            origin: o,
            h,
        })
    }

    /// 1D grid of `n` nodes starting at `x0`.
    pub fn line(n: usize, x0: f64, h: f64) -> Result<Self> {
        Self::new(&[n], &[x0], h)
    }

    /// 2D grid of `nx * ny` nodes.
    pub fn rect(nx: usize, ny: usize, origin: [f64; 2], h: f64) -> Result<Self> {
        Self::new(&[nx, ny], &origin, h)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape[..self.dim]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.shape[0] * self.shape[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Volume `h^d` of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim as i32)
    }

    pub fn multi_index(&self, i: usize) -> [usize; 2] {
        if self.dim == 1 {
            [i, 0]
        } else {
            [i / self.shape[1], i % self.shape[1]]
        }
    }

    pub fn index(&self, mi: [usize; 2]) -> usize {
        if self.dim == 1 {
            mi[0]
        } else {
            mi[0] * self.shape[1] + mi[1]
        }
    }

    /// Node coordinates; the unused second slot is 0 in 1D.
    pub fn coords(&self, i: usize) -> [f64; 2] {
        let mi = self.multi_index(i);
        let mut x = [0.0; 2];
        for a in 0..self.dim {
            x[a] = self.origin[a] + self.h * mi[a] as f64;
        }
        x
    }

    /// Euclidean distance between two nodes.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.multi_index(i), self.multi_index(j));
        let dx = (a[0] as f64 - b[0] as f64) * self.h;
        let dy = (a[1] as f64 - b[1] as f64) * self.h;
        dx.hypot(dy)
    }

    /// Integer lattice offset from node `i` to node `j`.
    pub fn offset(&self, i: usize, j: usize) -> [i64; 2] {
        let (a, b) = (self.multi_index(i), self.multi_index(j));
        [b[0] as i64 - a[0] as i64, b[1] as i64 - a[1] as i64]
    }

    /// Node reached from `i` by a lattice shift, if it stays on the grid.
    pub fn shifted(&self, i: usize, z: [i64; 2]) -> Option<usize> {
        let mi = self.multi_index(i);
        let mut out = [0usize; 2];
        for a in 0..2 {
            let v = mi[a] as i64 + z[a];
            if v < 0 || v >= self.shape[a] as i64 {
                return None;
            }
            out[a] = v as usize;
        }
        Some(self.index(out))
    }

    /// Same lattice with the box enlarged symmetrically by `pad` nodes per side.
    pub fn padded(&self, pad: usize) -> Self {
        let mut g = *self;
        for a in 0..self.dim {
            g.shape[a] += 2 * pad;
            g.origin[a] -= self.h * pad as f64;
        }
        g
    }

    fn check(&self, other: &Grid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// A set of grid nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mask {
    grid: Grid,
    member: Vec<bool>,
}

impl Mask {
    pub fn empty(grid: &Grid) -> Self {
        Self {
            grid: *grid,
            member: vec![false; grid.len()],
        }
    }

    pub fn full(grid: &Grid) -> Self {
        Self {
            grid: *grid,
            member: vec![true; grid.len()],
        }
    }

    pub fn from_bools(grid: &Grid, member: Vec<bool>) -> Result<Self> {
        if member.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "mask has {} entries for a grid of {} nodes",
                member.len(),
                grid.len()
            )));
        }
        Ok(Self {
            grid: *grid,
            member,
        })
    }

    pub fn from_indices(grid: &Grid, nodes: &[usize]) -> Result<Self> {
        let mut m = Self::empty(grid);
        for &i in nodes {
            if i >= grid.len() {
                return Err(Error::InfeasibleMask(format!(
                    "node {i} outside a grid of {} nodes",
                    grid.len()
                )));
            }
            m.member[i] = true;
        }
        Ok(m)
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(usize) -> bool) -> Self {
        Self {
            grid: *grid,
            member: (0..grid.len()).map(f).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn contains(&self, i: usize) -> bool {
        self.member[i]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.member
    }

    pub fn len(&self) -> usize {
        self.member.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.member.iter().any(|&b| b)
    }

    pub fn is_full(&self) -> bool {
        self.member.iter().all(|&b| b)
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.member.len()).filter(|&i| self.member[i]).collect()
    }

    /// Nodes within Chebyshev distance `r` (in node steps) of some member.
    pub fn dilate(&self, r: usize) -> Mask {
        if r == 0 {
            return self.clone();
        }
        let g = &self.grid;
        let r = r as i64;
        let span = if g.dim() == 2 { r } else { 0 };
        let mut out = Mask::empty(g);
        for i in self.indices() {
            for dx in -r..=r {
                for dy in -span..=span {
                    if let Some(j) = g.shifted(i, [dx, dy]) {
                        out.member[j] = true;
                    }
                }
            }
        }
        out
    }

    pub fn union(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, |a, b| a || b)
    }

    pub fn intersection(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, |a, b| a && b)
    }

    pub fn difference(&self, other: &Mask) -> Result<Mask> {
        self.zip(other, |a, b| a && !b)
    }

    pub fn complement(&self) -> Mask {
        Mask {
            grid: self.grid,
            member: self.member.iter().map(|b| !b).collect(),
        }
    }

    pub fn is_subset(&self, other: &Mask) -> Result<bool> {
        self.grid.check(&other.grid)?;
        Ok(self
            .member
            .iter()
            .zip(&other.member)
            .all(|(&a, &b)| !a || b))
    }

    fn zip(&self, other: &Mask, op: impl Fn(bool, bool) -> bool) -> Result<Mask> {
        self.grid.check(&other.grid)?;
        let member = self
            .member
            .iter()
            .zip(&other.member)
            .map(|(&a, &b)| op(a, b))
            .collect();
        Ok(Mask {
            grid: self.grid,
            member,
        })
    }
}

/// A real value per grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "grid function has {} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(i));
        }
        Ok(Self {
            grid: *grid,
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: *grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn indicator(mask: &Mask) -> Self {
        let values = mask
            .as_slice()
            .iter()
            .map(|&b| if b { 1.0 } else { 0.0 })
            .collect();
        Self {
            grid: *mask.grid(),
            values,
        }
    }

    pub fn from_fn(grid: &Grid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        Self::new(grid, (0..grid.len()).map(|i| f(grid.coords(i))).collect())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(
        &self,
        other: &GridFunction,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<GridFunction> {
        self.grid.check(&other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(GridFunction {
            grid: self.grid,
            values,
        })
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        self.map(|v| c * v)
    }

    pub fn add(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.zip_with(other, |a, b| a - b)
    }

    /// `t * self + (1 - t) * other`
    pub fn lerp(&self, other: &GridFunction, t: f64) -> Result<GridFunction> {
        self.zip_with(other, |a, b| t * a + (1.0 - t) * b)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Primitive shapes rasterized onto a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MaskSpec {
    Empty,
    Full,
    /// Closed interval along the first axis (all rows in 2D).
    Interval {
        lo: f64,
        hi: f64,
    },
    /// Closed axis-aligned box.
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
    /// Closed Euclidean ball.
    Ball {
        center: Vec<f64>,
        radius: f64,
    },
    /// Explicit nodes given by multi-index.
    Points {
        nodes: Vec<Vec<usize>>,
    },
    /// Nodes inside the level-`level` middle-thirds Cantor set of `[lo, hi]`
    /// (the product set in 2D).
    Cantor {
        lo: f64,
        hi: f64,
        level: u32,
    },
}

impl MaskSpec {
    pub fn rasterize(&self, grid: &Grid) -> Result<Mask> {
        let eps = 1e-9 * grid.spacing();
        let dim = grid.dim();
        let inside = |x: f64, lo: f64, hi: f64| x >= lo - eps && x <= hi + eps;
        let check_len = |v: &[f64], what: &str| {
            if v.len() == dim {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{what} needs {dim} coordinates, got {}",
                    v.len()
                )))
            }
        };
        match self {
            MaskSpec::Empty => Ok(Mask::empty(grid)),
            MaskSpec::Full => Ok(Mask::full(grid)),
            MaskSpec::Interval { lo, hi } => {
                Ok(Mask::from_fn(grid, |i| inside(grid.coords(i)[0], *lo, *hi)))
            }
            MaskSpec::Box { lo, hi } => {
                check_len(lo, "box lower corner")?;
                check_len(hi, "box upper corner")?;
                Ok(Mask::from_fn(grid, |i| {
                    let x = grid.coords(i);
                    (0..dim).all(|a| inside(x[a], lo[a], hi[a]))
                }))
            }
            MaskSpec::Ball { center, radius } => {
                check_len(center, "ball centre")?;
                Ok(Mask::from_fn(grid, |i| {
                    let x = grid.coords(i);
                    let d2: f64 = (0..dim).map(|a| (x[a] - center[a]).powi(2)).sum();
                    d2.sqrt() <= radius + eps
                }))
            }
            MaskSpec::Points { nodes } => {
                let mut idx = Vec::with_capacity(nodes.len());
                for mi in nodes {
                    if mi.len() != dim || (0..dim).any(|a| mi[a] >= grid.shape()[a]) {
                        return Err(Error::InfeasibleMask(format!(
                            "point {mi:?} is not a grid node"
                        )));
                    }
                    let mut m = [0usize; 2];
                    m[..dim].copy_from_slice(mi);
                    idx.push(grid.index(m));
                }
                Mask::from_indices(grid, &idx)
            }
            MaskSpec::Cantor { lo, hi, level } => {
                let mut pieces = vec![(*lo, *hi)];
                for _ in 0..*level {
                    pieces = pieces
                        .into_iter()
                        .flat_map(|(a, b)| {
                            let t = (b - a) / 3.0;
                            [(a, a + t), (b - t, b)]
                        })
                        .collect();
                }
                let hit = |x: f64| pieces.iter().any(|&(a, b)| inside(x, a, b));
                Ok(Mask::from_fn(grid, |i| {
                    let x = grid.coords(i);
                    (0..dim).all(|a| hit(x[a]))
                }))
            }
        }
    }
}
