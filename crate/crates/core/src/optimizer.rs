//! Projected gradient descent for the capacity problem
//!
//! ```text
//! minimize rho(u)  subject to  u = 1 on the pinned mask,  0 <= u <= 1 (optional)
//! ```
//!
//! plus a derivative-free brute force oracle for instances with few free nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridFunction, Mask};
use crate::modular::{Modular, ModularParams};

/// Solver knobs. `None` selects the data-dependent default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Projected gradient norm threshold; defaults to `1e-8 * sqrt(N)`.
    pub grad_tol: Option<f64>,
    /// First trial step; defaults to `1 / L` with `L` a power iteration
    /// estimate of the Hessian norm at the start point.
    pub step_init: Option<f64>,
    pub armijo_c: f64,
    pub armijo_shrink: f64,
    /// Relative decrease threshold; ten consecutive iterations below it stop
    /// the solver.
    pub f_tol: f64,
    /// Keep the objective value of every iterate.
    pub record_history: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            max_iters: 5000,
            grad_tol: None,
            step_init: None,
            armijo_c: 1e-4,
            armijo_shrink: 0.5,
            f_tol: 1e-12,
            record_history: false,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("optimizer: {what}")));
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if let Some(t) = self.grad_tol {
            if !(t > 0.0) {
                return bad("grad_tol must be positive");
            }
        }
        if let Some(t) = self.step_init {
            if !(t > 0.0 && t.is_finite()) {
                return bad("step_init must be positive");
            }
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad("armijo_c must lie in (0,1)");
        }
        if !(self.armijo_shrink > 0.0 && self.armijo_shrink < 1.0) {
            return bad("armijo_shrink must lie in (0,1)");
        }
        if !(self.f_tol > 0.0) {
            return bad("f_tol must be positive");
        }
        Ok(())
    }
}

/// A smooth objective on `R^n`.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
}

/// Euclidean projection onto a closed convex feasible set.
pub trait Projection {
    fn project(&self, x: &mut [f64]);

    /// Map a direction into the linear span of feasible moves (used only for
    /// the Hessian norm estimate).
    fn restrict_direction(&self, _v: &mut [f64]) {}
}

impl Objective for Modular {
    fn dim(&self) -> usize {
        self.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.value_local(x).total
    }

    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        self.gradient_local(x, out)
    }
}

/// `x_i = level` on pinned coordinates, `0 <= x_i <= level` elsewhere when boxed.
#[derive(Debug, Clone)]
pub struct PinnedBox {
    pub pinned: Vec<bool>,
    pub level: f64,
    pub boxed: bool,
}

impl Projection for PinnedBox {
    fn project(&self, x: &mut [f64]) {
        for (v, &pin) in x.iter_mut().zip(&self.pinned) {
            if pin {
                *v = self.level;
            } else if self.boxed {
                *v = v.clamp(0.0, self.level);
            }
        }
    }

    fn restrict_direction(&self, v: &mut [f64]) {
        for (x, &pin) in v.iter_mut().zip(&self.pinned) {
            if pin {
                *x = 0.0;
            }
        }
    }
}

/// Output of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iters: usize,
    pub converged: bool,
    pub projected_grad_norm: f64,
    pub step_init: f64,
    /// Objective at the start point and after every accepted step.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn projected_grad_norm(proj: &impl Projection, x: &[f64], g: &[f64], buf: &mut [f64]) -> f64 {
    for ((b, &xi), &gi) in buf.iter_mut().zip(x).zip(g) {
        *b = xi - gi;
    }
    proj.project(buf);
    x.iter()
        .zip(buf.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

/// Power iteration on finite-difference Hessian-vector products.
fn hessian_norm_estimate(
    obj: &impl Objective,
    proj: &impl Projection,
    x: &[f64],
    g: &[f64],
) -> Option<f64> {
    let n = x.len();
    let mut v: Vec<f64> = (0..n)
        .map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64)
        .collect();
    proj.restrict_direction(&mut v);
    let eps = 1e-6 * (1.0 + norm(x) / (n as f64).sqrt());
    let mut xe = vec![0.0; n];
    let mut ge = vec![0.0; n];
    let mut estimate = None;
    for _ in 0..20 {
        let nv = norm(&v);
        if !(nv > 0.0) || !nv.is_finite() {
            return estimate;
        }
        for vi in v.iter_mut() {
            *vi /= nv;
        }
        for i in 0..n {
            xe[i] = x[i] + eps * v[i];
        }
        obj.gradient(&xe, &mut ge);
        for i in 0..n {
            v[i] = (ge[i] - g[i]) / eps;
        }
        proj.restrict_direction(&mut v);
        let l = norm(&v);
        if !l.is_finite() {
            return estimate;
        }
        estimate = Some(l);
    }
    estimate.filter(|l| *l > 0.0)
}

/// Projected gradient descent with Armijo backtracking along the projection arc.
///
/// The first trial step comes from the config (or the Hessian estimate);
/// later trial steps use the Barzilai-Borwein quotient of the last accepted
/// step. Every accepted iterate satisfies the Armijo condition, so the
/// objective never increases.
pub fn minimize(
    obj: &impl Objective,
    proj: &impl Projection,
    x0: &[f64],
    cfg: &OptimizerConfig,
) -> Minimum {
    let n = obj.dim();
    let mut x = x0.to_vec();
    proj.project(&mut x);
    let mut f = obj.value(&x);
    let mut g = vec![0.0; n];
    obj.gradient(&x, &mut g);
    let tol = cfg.grad_tol.unwrap_or(1e-8 * (n as f64).sqrt());
    let step_init = cfg
        .step_init
        .or_else(|| hessian_norm_estimate(obj, proj, &x, &g).map(|l| 1.0 / l))
        .filter(|t| t.is_finite() && *t > 0.0)
        .unwrap_or(1.0);

    let mut history = Vec::new();
    if cfg.record_history {
        history.push(f);
    }
    let mut buf = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut step = step_init;
    let mut slow = 0usize;
    let mut converged = false;
    let mut iters = 0;
    let mut pg = projected_grad_norm(proj, &x, &g, &mut buf);

    while iters < cfg.max_iters {
        if pg <= tol {
            converged = true;
            break;
        }
        let mut t = step;
        let mut accepted = None;
        for _ in 0..200 {
            for i in 0..n {
                trial[i] = x[i] - t * g[i];
            }
            proj.project(&mut trial);
            let slope: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
            let f_trial = obj.value(&trial);
            if f_trial <= f + cfg.armijo_c * slope && f_trial <= f {
                accepted = Some(f_trial);
                break;
            }
            t *= cfg.armijo_shrink;
            if t < f64::MIN_POSITIVE {
                break;
            }
        }
        let Some(f_new) = accepted else {
            break;
        };
        iters += 1;
        obj.gradient(&trial, &mut g_new);
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..n {
            let si = trial[i] - x[i];
            ss += si * si;
            sy += si * (g_new[i] - g[i]);
        }
        step = if sy > 0.0 && ss > 0.0 {
            (ss / sy).clamp(1e-12 * step_init, 1e12 * step_init)
        } else {
            2.0 * t
        };

        let decrease = (f - f_new) / f.abs().max(f64::MIN_POSITIVE);
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        if cfg.record_history {
            history.push(f);
        }
        pg = projected_grad_norm(proj, &x, &g, &mut buf);
        if decrease <= cfg.f_tol {
            slow += 1;
            if slow >= 10 {
                converged = true;
                break;
            }
        } else {
            slow = 0;
        }
    }
    if !converged && pg <= tol {
        converged = true;
    }
    Minimum {
        x,
        value: f,
        iters,
        converged,
        projected_grad_norm: pg,
        step_init,
        history,
    }
}

/// Result of a pinned capacity solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub minimizer: GridFunction,
    /// Modular of `minimizer`, recomputed after the solve.
    pub value: f64,
    pub iters: usize,
    pub converged: bool,
    pub projected_grad_norm: f64,
    #[serde(skip)]
    pub history: Vec<f64>,
}

impl SolveResult {
    /// Turn a non-converged solve into [`Error::NotConverged`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iters: self.iters,
                projected_grad_norm: self.projected_grad_norm,
            })
        }
    }
}

/// Minimize the modular over the active nodes of `modular` with the pinned
/// nodes held at `level` and, if `boxed`, the rest kept in `[0, level]`.
///
/// `pinned` is indexed by global node. Pinned nodes outside the active set are
/// ignored. The returned minimizer is zero off the active set.
pub fn solve_on(
    modular: &Modular,
    pinned: &Mask,
    level: f64,
    boxed: bool,
    cfg: &OptimizerConfig,
) -> Result<SolveResult> {
    cfg.validate()?;
    if pinned.grid() != modular.grid() {
        return Err(Error::GridMismatch);
    }
    let pin: Vec<bool> = modular
        .nodes()
        .iter()
        .map(|&i| pinned.contains(i))
        .collect();
    if !pin.iter().any(|&b| b) {
        return Err(Error::InfeasibleMask(
            "pinned mask has no active node".into(),
        ));
    }
    let proj = PinnedBox {
        pinned: pin.clone(),
        level,
        boxed,
    };
    let x0: Vec<f64> = pin.iter().map(|&b| if b { level } else { 0.0 }).collect();
    let m = minimize(modular, &proj, &x0, cfg);
    let minimizer = modular.extend(&m.x, 0.0);
    let value = modular.value_local(&m.x).total;
    log::debug!(
        "pinned solve: n={} iters={} value={value:.12e} pg={:.3e} converged={}",
        modular.len(),
        m.iters,
        m.projected_grad_norm,
        m.converged
    );
    Ok(SolveResult {
        minimizer,
        value,
        iters: m.iters,
        converged: m.converged,
        projected_grad_norm: m.projected_grad_norm,
        history: m.history,
    })
}

/// Minimize the modular over the whole grid with `u = 1` on `pinned`.
pub fn solve_pinned_box(
    params: &ModularParams,
    pinned: &Mask,
    boxed: bool,
    cfg: &OptimizerConfig,
) -> Result<SolveResult> {
    if pinned.grid() != &params.grid {
        return Err(Error::InfeasibleMask(
            "pinned mask lives on a different grid".into(),
        ));
    }
    if pinned.is_empty() {
        return Err(Error::InfeasibleMask("pinned mask is empty".into()));
    }
    solve_on(&Modular::new(params)?, pinned, 1.0, boxed, cfg)
}

/// Largest number of free nodes [`brute_force_capacity`] accepts.
pub const BRUTE_FORCE_MAX_FREE: usize = 6;

/// Grid evaluations allowed in the exhaustive stage of the oracle.
const BRUTE_FORCE_BUDGET: f64 = 2.0e5;

fn golden_section(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    // endpoints matter when the constrained minimum sits on the box
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    for x in [a, b] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Exhaustive search over `{0, 1/r, ..., 1}^k` for the free nodes followed by
/// cyclic golden-section coordinate refinement on `[0, 1]`.
///
/// Uses objective values only, so it shares nothing with the gradient solver.
/// The per-axis resolution is capped so the lattice has at most
/// `2e5` points.
pub fn brute_force_capacity(
    params: &ModularParams,
    pinned: &Mask,
    resolution: usize,
) -> Result<f64> {
    if pinned.grid() != &params.grid {
        return Err(Error::GridMismatch);
    }
    let free: Vec<usize> = (0..params.grid.len())
        .filter(|&i| !pinned.contains(i))
        .collect();
    let k = free.len();
    if k > BRUTE_FORCE_MAX_FREE {
        return Err(Error::TooManyFreeNodes {
            got: k,
            max: BRUTE_FORCE_MAX_FREE,
        });
    }
    let modular = Modular::new(params)?;
    let mut u: Vec<f64> = (0..params.grid.len())
        .map(|i| if pinned.contains(i) { 1.0 } else { 0.0 })
        .collect();
    if k == 0 {
        return Ok(modular.value_local(&u).total);
    }

    let cap = BRUTE_FORCE_BUDGET.powf(1.0 / k as f64).floor() as usize;
    let res = resolution.max(1).min(cap.max(1));
    let mut best = f64::INFINITY;
    let mut best_u = u.clone();
    let mut digits = vec![0usize; k];
    loop {
        for (d, &i) in digits.iter().zip(&free) {
            u[i] = *d as f64 / res as f64;
        }
        let v = modular.value_local(&u).total;
        if v < best {
            best = v;
            best_u.copy_from_slice(&u);
        }
        let mut pos = 0;
        while pos < k {
            digits[pos] += 1;
            if digits[pos] <= res {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
        if pos == k {
            break;
        }
    }

    let mut u = best_u;
    for _ in 0..20_000 {
        let before = best;
        for &i in &free {
            let mut probe = u.clone();
            let (x, fx) = golden_section(
                |t| {
                    probe[i] = t;
                    modular.value_local(&probe).total
                },
                0.0,
                1.0,
                1e-11,
            );
            if fx < best {
                best = fx;
                u[i] = x;
            }
        }
        if before - best <= 1e-15 * best.max(1.0) {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn two_node() -> ModularParams {
        ModularParams::constant(Grid::line(2, 0.0, 1.0).unwrap(), 0.5, 2.0, 2.0).unwrap()
    }

    #[test]
    fn two_node_closed_form() {
        // f(t) = 1 + t^2 + 2 (1 - t)^2 is minimized at t = 2/3 with value 5/3
        let params = two_node();
        let pinned = Mask::from_indices(&params.grid, &[0]).unwrap();
        for boxed in [true, false] {
            let r = solve_pinned_box(&params, &pinned, boxed, &OptimizerConfig::default()).unwrap();
            assert!(r.converged);
            assert!((r.value - 5.0 / 3.0).abs() < 1e-9, "{}", r.value);
            assert!((r.minimizer.values()[1] - 2.0 / 3.0).abs() < 1e-7);
            assert_eq!(r.minimizer.values()[0], 1.0);
        }
        let bf = brute_force_capacity(&params, &pinned, 100).unwrap();
        assert!((bf - 5.0 / 3.0).abs() < 1e-6, "{bf}");
    }

    #[test]
    fn full_pin_is_the_only_feasible_point() {
        let params =
            ModularParams::constant(Grid::line(5, 0.0, 0.25).unwrap(), 0.3, 1.7, 2.6).unwrap();
        let full = Mask::full(&params.grid);
        let r = solve_pinned_box(&params, &full, true, &OptimizerConfig::default()).unwrap();
        assert!(r.minimizer.values().iter().all(|&v| v == 1.0));
        assert!((r.value - 5.0 * 0.25).abs() < 1e-15);
        assert_eq!(brute_force_capacity(&params, &full, 10).unwrap(), r.value);
    }

    #[test]
    fn history_is_nonincreasing_and_feasible() {
        let grid = Grid::line(12, 0.0, 1.0 / 11.0).unwrap();
        let params = ModularParams::constant(grid, 0.7, 1.6, 2.8).unwrap();
        let pinned = Mask::from_indices(&grid, &[3, 4]).unwrap();
        let cfg = OptimizerConfig {
            record_history: true,
            ..Default::default()
        };
        let r = solve_pinned_box(&params, &pinned, true, &cfg).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(r
            .minimizer
            .values()
            .iter()
            .all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(r.minimizer.values()[3], 1.0);
    }

    #[test]
    fn errors() {
        let params = two_node();
        assert!(matches!(
            solve_pinned_box(
                &params,
                &Mask::empty(&params.grid),
                true,
                &OptimizerConfig::default()
            ),
            Err(Error::InfeasibleMask(_))
        ));
        let big = ModularParams::constant(Grid::line(9, 0.0, 0.1).unwrap(), 0.5, 2.0, 2.0).unwrap();
        let one = Mask::from_indices(&big.grid, &[0]).unwrap();
        assert_eq!(
            brute_force_capacity(&big, &one, 10),
            Err(Error::TooManyFreeNodes { got: 8, max: 6 })
        );
        let bad = OptimizerConfig {
            armijo_c: 1.5,
            ..Default::default()
        };
        assert!(solve_pinned_box(&params, &Mask::full(&params.grid), true, &bad).is_err());
    }

    #[test]
    fn golden_section_hits_box_edges() {
        let (x, _) = golden_section(|t| (t - 2.0).powi(2), 0.0, 1.0, 1e-12);
        assert_eq!(x, 1.0);
        let (x, _) = golden_section(|t| (t - 0.3).powi(2), 0.0, 1.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-9);
    }
}
