//! The discrete modular
//!
//! ```text
//! rho(u) = sum_i |u_i|^q_i h^d
//!        + sum_{i != j} |u_i - u_j|^p_ij / |x_i - x_j|^(d + s p_ij) h^(2d)
//! ```
//!
//! with its gradient, the Luxemburg norm it induces and a few diagnostics
//! (Delta_2 ratio, uniform convexity probe, modular vs norm convergence).
//!
//! Grid functions are piecewise constant on cells, so same-cell pairs carry no
//! energy and the diagonal is dropped from the pair sum. Pairs are ordered:
//! `(i, j)` and `(j, i)` both appear and `p` is never symmetrized.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::{ExponentP, ExponentQ};
use crate::grid::{Grid, GridFunction, Mask};

/// Everything the modular depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularParams {
    pub s: f64,
    pub grid: Grid,
    pub q: ExponentQ,
    pub p: ExponentP,
    /// Number of row partitions in the pair sums. Results are bit-stable for a
    /// fixed partition count.
    #[serde(default = "default_partitions")]
    pub partitions: usize,
}

fn default_partitions() -> usize {
    1
}

impl ModularParams {
    pub fn new(grid: Grid, s: f64, q: ExponentQ, p: ExponentP) -> Result<Self> {
        let params = Self {
            s,
            grid,
            q,
            p,
            partitions: 1,
        };
        params.validate()?;
        Ok(params)
    }

    /// Constant exponents `q = q0`, `p = p0`.
    pub fn constant(grid: Grid, s: f64, q0: f64, p0: f64) -> Result<Self> {
        let q = ExponentQ::constant(&grid, q0)?;
        let p = ExponentP::constant(&grid, p0)?;
        Self::new(grid, s, q, p)
    }

    pub fn with_partitions(mut self, partitions: usize) -> Self {
        self.partitions = partitions.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidParameter("s must lie in (0,1)".into()));
        }
        if self.q.len() != self.grid.len() || self.p.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `max(2^q+, 2^p+)`, the Delta_2 constant of the modular.
    pub fn delta2_constant(&self) -> f64 {
        2f64.powf(self.q.q_plus()).max(2f64.powf(self.p.p_plus()))
    }
}

/// The two summands of the modular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModularValue {
    pub total: f64,
    pub lebesgue_term: f64,
    pub gagliardo_term: f64,
}

impl ModularValue {
    fn new(lebesgue_term: f64, gagliardo_term: f64) -> Self {
        Self {
            total: lebesgue_term + gagliardo_term,
            lebesgue_term,
            gagliardo_term,
        }
    }
}

#[inline]
pub(crate) fn pow_abs(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else {
        x.abs().powf(p)
    }
}

/// Derivative of `t -> |t|^p`, taken as 0 at `t = 0` (valid since `p > 1`).
#[inline]
pub(crate) fn dpow_abs(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        2.0 * x
    } else if x == 0.0 {
        0.0
    } else {
        p * x.abs().powf(p - 1.0) * x.signum()
    }
}

pub(crate) fn partition_ranges(n: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.clamp(1, n.max(1));
    let base = n / parts;
    let extra = n % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for k in 0..parts {
        let len = base + usize::from(k < extra);
        out.push(start..start + len);
        start += len;
    }
    out
}

/// Evaluate `f` on each range and return the results in range order.
pub(crate) fn map_partitions<T: Send>(
    ranges: Vec<Range<usize>>,
    f: impl Fn(Range<usize>) -> T + Sync + Send,
) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        if ranges.len() > 1 {
            use rayon::prelude::*;
            return ranges.into_par_iter().map(f).collect();
        }
    }
    ranges.into_iter().map(f).collect()
}

/// Precomputed pair exponents and kernel weights over a set of active nodes.
///
/// Vectors passed to the `*_local` methods are indexed by position in
/// [`Modular::nodes`].
#[derive(Debug, Clone)]
pub struct Modular {
    grid: Grid,
    nodes: Vec<usize>,
    cell: f64,
    q: Vec<f64>,
    p: Vec<f64>,
    weight: Vec<f64>,
    partitions: usize,
    q_plus: f64,
    p_plus: f64,
}

impl Modular {
    /// Modular over the whole grid.
    pub fn new(params: &ModularParams) -> Result<Self> {
        params.validate()?;
        Ok(Self::build(params, (0..params.grid.len()).collect()))
    }

    /// Modular integrating over `domain x domain` only.
    pub fn on_domain(params: &ModularParams, domain: &Mask) -> Result<Self> {
        params.validate()?;
        if domain.grid() != &params.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Self::build(params, domain.indices()))
    }

    fn build(params: &ModularParams, nodes: Vec<usize>) -> Self {
        let grid = params.grid;
        let n = nodes.len();
        let d = grid.dim() as f64;
        let cell = grid.cell_volume();
        let mut p = vec![0.0; n * n];
        let mut weight = vec![0.0; n * n];
        for (a, &i) in nodes.iter().enumerate() {
            for (b, &j) in nodes.iter().enumerate() {
                if a == b {
                    continue;
                }
                let pij = params.p.value(i, j);
                p[a * n + b] = pij;
                weight[a * n + b] = cell * cell / grid.distance(i, j).powf(d + params.s * pij);
            }
        }
        let q = nodes.iter().map(|&i| params.q.at(i)).collect();
        Self {
            grid,
            nodes,
            cell,
            q,
            p,
            weight,
            partitions: params.partitions.max(1),
            q_plus: params.q.q_plus(),
            p_plus: params.p.p_plus(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Global indices of the active nodes.
    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_full_grid(&self) -> bool {
        self.nodes.len() == self.grid.len()
    }

    pub fn q_plus(&self) -> f64 {
        self.q_plus
    }

    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    /// Values of `u` on the active nodes.
    pub fn restrict(&self, u: &GridFunction) -> Result<Vec<f64>> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.nodes.iter().map(|&i| u.values()[i]).collect())
    }

    /// Grid function equal to `local` on the active nodes and `fill` elsewhere.
    pub fn extend(&self, local: &[f64], fill: f64) -> GridFunction {
        let mut v = vec![fill; self.grid.len()];
        for (&i, &x) in self.nodes.iter().zip(local) {
            v[i] = x;
        }
        GridFunction::new(&self.grid, v).expect("finite values on a matching grid")
    }

    /// Lebesgue and Gagliardo parts at `u`, indexed by active node.
    pub fn value_local(&self, u: &[f64]) -> ModularValue {
        let n = self.nodes.len();
        debug_assert_eq!(u.len(), n);
        let partials = map_partitions(partition_ranges(n, self.partitions), |rows| {
            let (mut leb, mut gag) = (0.0, 0.0);
            for a in rows {
                leb += pow_abs(u[a], self.q[a]) * self.cell;
                let ua = u[a];
                let (p_row, w_row) = (
                    &self.p[a * n..(a + 1) * n],
                    &self.weight[a * n..(a + 1) * n],
                );
                let mut row = 0.0;
                for b in 0..n {
                    if b != a {
                        row += pow_abs(ua - u[b], p_row[b]) * w_row[b];
                    }
                }
                gag += row;
            }
            (leb, gag)
        });
        let (mut leb, mut gag) = (0.0, 0.0);
        for (l, g) in partials {
            leb += l;
            gag += g;
        }
        ModularValue::new(leb, gag)
    }

    /// Gradient of the modular at `u`, written into `out`.
    pub fn gradient_local(&self, u: &[f64], out: &mut [f64]) {
        let n = self.nodes.len();
        debug_assert_eq!(u.len(), n);
        debug_assert_eq!(out.len(), n);
        let ranges = partition_ranges(n, self.partitions);
        let pieces = map_partitions(ranges.clone(), |rows| {
            rows.map(|a| {
                let mut g = dpow_abs(u[a], self.q[a]) * self.cell;
                for b in 0..n {
                    if b == a {
                        continue;
                    }
                    let d = u[a] - u[b];
                    if d == 0.0 {
                        continue;
                    }
                    let (ab, ba) = (a * n + b, b * n + a);
                    g += dpow_abs(d, self.p[ab]) * self.weight[ab]
                        + dpow_abs(d, self.p[ba]) * self.weight[ba];
                }
                g
            })
            .collect::<Vec<f64>>()
        });
        for (range, piece) in ranges.into_iter().zip(pieces) {
            out[range].copy_from_slice(&piece);
        }
    }

    pub fn eval(&self, u: &GridFunction) -> Result<ModularValue> {
        Ok(self.value_local(&self.restrict(u)?))
    }

    /// Gradient as a grid function, zero off the active nodes.
    pub fn gradient(&self, u: &GridFunction) -> Result<GridFunction> {
        let local = self.restrict(u)?;
        let mut g = vec![0.0; local.len()];
        self.gradient_local(&local, &mut g);
        Ok(self.extend(&g, 0.0))
    }

    /// Luxemburg norm `inf { lambda > 0 : rho(u / lambda) <= 1 }` of local values.
    ///
    /// Brackets the root of the decreasing map `lambda -> rho(u / lambda)` by
    /// doubling or halving from 1, then bisects until the bracket's relative
    /// width is at most `tol`. Returns the upper end, so `rho(u / norm) <= 1`.
    pub fn luxemburg_norm_local(&self, u: &[f64], tol: f64) -> f64 {
        if u.iter().all(|&v| v == 0.0) {
            return 0.0;
        }
        let tol = if tol > 0.0 { tol } else { DEFAULT_NORM_TOL };
        let mut scaled = vec![0.0; u.len()];
        let mut rho_at = |lambda: f64| {
            for (s, &v) in scaled.iter_mut().zip(u) {
                *s = v / lambda;
            }
            self.value_local(&scaled).total
        };
        let (mut lo, mut hi);
        if rho_at(1.0) <= 1.0 {
            hi = 1.0;
            lo = 0.5;
            while rho_at(lo) <= 1.0 {
                hi = lo;
                lo *= 0.5;
            }
        } else {
            lo = 1.0;
            hi = 2.0;
            while rho_at(hi) > 1.0 {
                lo = hi;
                hi *= 2.0;
            }
        }
        while (hi - lo) > tol * hi {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if rho_at(mid) <= 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    pub fn luxemburg_norm(&self, u: &GridFunction, tol: f64) -> Result<f64> {
        Ok(self.luxemburg_norm_local(&self.restrict(u)?, tol))
    }
}

/// Default relative bracket width for the Luxemburg norm.
pub const DEFAULT_NORM_TOL: f64 = 1e-10;

fn check_grid(u: &GridFunction, params: &ModularParams) -> Result<()> {
    if u.grid() != &params.grid {
        Err(Error::GridMismatch)
    } else {
        Ok(())
    }
}

/// Modular of `u` over the whole grid.
pub fn eval_modular(u: &GridFunction, params: &ModularParams) -> Result<ModularValue> {
    check_grid(u, params)?;
    Modular::new(params)?.eval(u)
}

/// Gradient of the modular with respect to the node values.
pub fn eval_modular_gradient(u: &GridFunction, params: &ModularParams) -> Result<GridFunction> {
    check_grid(u, params)?;
    Modular::new(params)?.gradient(u)
}

/// Luxemburg norm of `u` with relative tolerance `tol`.
pub fn luxemburg_norm(u: &GridFunction, params: &ModularParams, tol: f64) -> Result<f64> {
    check_grid(u, params)?;
    Modular::new(params)?.luxemburg_norm(u, tol)
}

/// `rho(2u) / rho(u)`.
pub fn delta2_ratio(u: &GridFunction, params: &ModularParams) -> Result<f64> {
    check_grid(u, params)?;
    let m = Modular::new(params)?;
    let base = m.eval(u)?.total;
    if base == 0.0 {
        return Err(Error::ZeroModular);
    }
    Ok(m.eval(&u.scale(2.0))?.total / base)
}

/// Largest midpoint ratio `rho((f+g)/2) / ((rho(f)+rho(g))/2)` over the pairs
/// with `rho((f-g)/2) > eps (rho(f)+rho(g))/2`; 0 when no pair qualifies.
///
/// `1 - ratio` is an empirical lower bound for the uniform convexity modulus
/// at `eps`.
pub fn uniform_convexity_probe(
    pairs: &[(GridFunction, GridFunction)],
    params: &ModularParams,
    eps: f64,
) -> Result<f64> {
    let m = Modular::new(params)?;
    let mut worst: f64 = 0.0;
    for (f, g) in pairs {
        check_grid(f, params)?;
        check_grid(g, params)?;
        let mean = 0.5 * (m.eval(f)?.total + m.eval(g)?.total);
        let half_diff = m.eval(&f.sub(g)?.scale(0.5))?.total;
        if !(half_diff > eps * mean) {
            continue;
        }
        let half_sum = m.eval(&f.add(g)?.scale(0.5))?.total;
        worst = worst.max(half_sum / mean);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub modular: f64,
    pub norm: f64,
}

/// Modular and norm of `u_n - u` along a finite sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    /// Last modular entry is at most the modular threshold.
    pub modular_converges: bool,
    /// Last norm entry is at most the norm threshold.
    pub norm_converges: bool,
    /// Exactly one of the two columns reached its threshold.
    pub violation: bool,
}

/// Tabulate `rho(u_n - u)` and `||u_n - u||` and flag disagreement between
/// modular and norm convergence, judged on the last term against the given
/// thresholds.
pub fn convergence_equivalence_report(
    u_seq: &[GridFunction],
    u: &GridFunction,
    params: &ModularParams,
    modular_threshold: f64,
    norm_threshold: f64,
) -> Result<ConvergenceReport> {
    check_grid(u, params)?;
    let m = Modular::new(params)?;
    let mut rows = Vec::with_capacity(u_seq.len());
    for (k, un) in u_seq.iter().enumerate() {
        let diff = un.sub(u)?;
        rows.push(ConvergenceRow {
            n: k + 1,
            modular: m.eval(&diff)?.total,
            norm: m.luxemburg_norm(&diff, DEFAULT_NORM_TOL)?,
        });
    }
    let (modular_converges, norm_converges) = match rows.last() {
        Some(r) => (r.modular <= modular_threshold, r.norm <= norm_threshold),
        None => (true, true),
    };
    Ok(ConvergenceReport {
        rows,
        modular_converges,
        norm_converges,
        violation: modular_converges != norm_converges,
    })
}
