//! Sobolev and relative capacities on a grid and their set-function properties.
//!
//! The Sobolev capacity of `E` is the minimum of the modular over grid
//! functions equal to 1 on `dilate(E, r)`; the computational box plays the
//! role of the whole space. The relative capacity with respect to a domain
//! mask restricts unknowns and both integrals to the domain and pins the
//! target itself. Every minimization runs on `[0, 1]`-valued functions unless
//! the problem turns truncation off.

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exponent::{ExponentP, ExponentQ, PSpec, QSpec};
use crate::grid::{Grid, GridFunction, Mask, MaskSpec};
use crate::modular::{Modular, ModularParams};
use crate::optimizer::{minimize, solve_on, Objective, OptimizerConfig, PinnedBox, SolveResult};

/// Slack for comparisons between independently solved capacities.
pub const SET_FUNCTION_SLACK: f64 = 1e-8;

/// Largest inflation `1 + eta` a smoothed admissible may need to count as feasible.
pub const SMOOTH_INFLATION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum Variant {
    Sobolev,
    Relative { domain: Mask },
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::Sobolev => "sobolev",
            Variant::Relative { .. } => "relative",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityProblem {
    pub params: ModularParams,
    pub target: Mask,
    /// Dilation radius realizing the neighbourhood of the target.
    pub radius: usize,
    pub variant: Variant,
    pub truncate: bool,
    pub optimizer: OptimizerConfig,
}

impl CapacityProblem {
    pub fn sobolev(params: ModularParams, target: Mask) -> Self {
        Self {
            params,
            target,
            radius: 0,
            variant: Variant::Sobolev,
            truncate: true,
            optimizer: OptimizerConfig::default(),
        }
    }

    pub fn relative(params: ModularParams, target: Mask, domain: Mask) -> Self {
        Self {
            variant: Variant::Relative { domain },
            ..Self::sobolev(params, target)
        }
    }

    pub fn with_radius(mut self, radius: usize) -> Self {
        self.radius = radius;
        self
    }

    pub fn with_truncate(mut self, truncate: bool) -> Self {
        self.truncate = truncate;
        self
    }

    pub fn with_optimizer(mut self, cfg: OptimizerConfig) -> Self {
        self.optimizer = cfg;
        self
    }

    /// Same problem for another target set.
    pub fn with_target(&self, target: Mask) -> Self {
        Self {
            target,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.target.grid() != &self.params.grid {
            return Err(Error::GridMismatch);
        }
        if let Variant::Relative { domain } = &self.variant {
            if domain.grid() != &self.params.grid {
                return Err(Error::GridMismatch);
            }
            if !self.target.is_subset(domain)? {
                return Err(Error::MaskNotInDomain);
            }
        }
        Ok(())
    }

    fn modular(&self) -> Result<Modular> {
        match &self.variant {
            Variant::Sobolev => Modular::new(&self.params),
            Variant::Relative { domain } => Modular::on_domain(&self.params, domain),
        }
    }

    /// Nodes where admissible functions are pinned to 1.
    pub fn pinned(&self) -> Result<Mask> {
        let grown = self.target.dilate(self.radius);
        match &self.variant {
            Variant::Sobolev => Ok(grown),
            Variant::Relative { domain } => grown.intersection(domain),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub value: f64,
    pub minimizer: GridFunction,
    pub solve: SolveResult,
    pub radius_used: usize,
}

fn solve_prepared(prob: &CapacityProblem, modular: &Modular) -> Result<CapacityResult> {
    let pinned = prob.pinned()?;
    let solve = if pinned.is_empty() {
        // u = 0 is admissible for the empty set
        let minimizer = GridFunction::zeros(&prob.params.grid);
        SolveResult {
            minimizer,
            value: 0.0,
            iters: 0,
            converged: true,
            projected_grad_norm: 0.0,
            history: Vec::new(),
        }
    } else {
        solve_on(modular, &pinned, 1.0, prob.truncate, &prob.optimizer)?
    };
    Ok(CapacityResult {
        value: solve.value,
        minimizer: solve.minimizer.clone(),
        solve,
        radius_used: prob.radius,
    })
}

/// Capacity for either variant.
pub fn capacity(prob: &CapacityProblem) -> Result<CapacityResult> {
    prob.validate()?;
    solve_prepared(prob, &prob.modular()?)
}

pub fn sobolev_capacity(prob: &CapacityProblem) -> Result<CapacityResult> {
    if !matches!(prob.variant, Variant::Sobolev) {
        return Err(Error::InvalidParameter(
            "expected the sobolev variant".into(),
        ));
    }
    capacity(prob)
}

pub fn relative_capacity(prob: &CapacityProblem) -> Result<CapacityResult> {
    if !matches!(prob.variant, Variant::Relative { .. }) {
        return Err(Error::InvalidParameter(
            "expected the relative variant".into(),
        ));
    }
    capacity(prob)
}

/// Capacities of several targets sharing one precomputed modular.
fn capacities_of(template: &CapacityProblem, targets: &[Mask]) -> Result<Vec<f64>> {
    template.validate()?;
    let modular = template.modular()?;
    targets
        .iter()
        .map(|t| {
            let prob = template.with_target(t.clone());
            prob.validate()?;
            Ok(solve_prepared(&prob, &modular)?.value)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusRow {
    pub radius: usize,
    pub value: f64,
    pub converged: bool,
}

/// Capacity of `dilate(target, r)` for each radius, largest radius first.
///
/// The radii are sorted descending and 0 is appended when missing, so the last
/// row is the capacity of the target itself.
pub fn exterior_capacity(prob: &CapacityProblem, radii: &[usize]) -> Result<Vec<RadiusRow>> {
    prob.validate()?;
    let mut radii = radii.to_vec();
    radii.sort_unstable_by(|a, b| b.cmp(a));
    radii.dedup();
    if radii.last() != Some(&0) {
        radii.push(0);
    }
    let modular = prob.modular()?;
    radii
        .into_iter()
        .map(|r| {
            let res = solve_prepared(&prob.clone().with_radius(r), &modular)?;
            Ok(RadiusRow {
                radius: r,
                value: res.value,
                converged: res.solve.converged,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorReport {
    pub values: Vec<f64>,
    pub sup: f64,
}

/// Capacities of the given subsets of the target and their supremum.
pub fn interior_capacity(prob: &CapacityProblem, subsets: &[Mask]) -> Result<InteriorReport> {
    for (k, s) in subsets.iter().enumerate() {
        if !s.is_subset(&prob.target)? {
            return Err(Error::MaskNotInTarget(k));
        }
    }
    let values = capacities_of(prob, subsets)?;
    let sup = values.iter().copied().fold(0.0, f64::max);
    Ok(InteriorReport { values, sup })
}

/// Outcome of a monotone-limit test along a set sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoquetReport {
    pub values: Vec<f64>,
    /// Capacity of the union (increasing case) or intersection (decreasing case).
    pub limit_value: f64,
    pub monotone: bool,
    pub terminal_gap: f64,
    pub passed: bool,
}

fn choquet_report(values: Vec<f64>, limit_value: f64, increasing: bool) -> ChoquetReport {
    let monotone = values.windows(2).all(|w| {
        if increasing {
            w[0] <= w[1] + SET_FUNCTION_SLACK
        } else {
            w[1] <= w[0] + SET_FUNCTION_SLACK
        }
    });
    let terminal_gap = values.last().map_or(0.0, |v| (v - limit_value).abs());
    ChoquetReport {
        values,
        limit_value,
        monotone,
        terminal_gap,
        passed: monotone && terminal_gap <= SET_FUNCTION_SLACK,
    }
}

/// Continuity along an increasing sequence: `C(A_n)` is nondecreasing and its
/// last term matches `C(union A_n)`.
pub fn choquet_c2_test(targets: &[Mask], template: &CapacityProblem) -> Result<ChoquetReport> {
    let first = targets.first().ok_or(Error::InvalidSequence(0))?;
    let mut union = first.clone();
    for (k, w) in targets.windows(2).enumerate() {
        if !w[0].is_subset(&w[1])? {
            return Err(Error::InvalidSequence(k + 1));
        }
        union = union.union(&w[1])?;
    }
    let values = capacities_of(template, targets)?;
    let limit = capacities_of(template, &[union])?[0];
    Ok(choquet_report(values, limit, true))
}

/// Continuity along a decreasing sequence of compacts: `C(K_n)` is
/// nonincreasing and its last term matches `C(intersection K_n)`.
pub fn choquet_c3_test(compacts: &[Mask], template: &CapacityProblem) -> Result<ChoquetReport> {
    let first = compacts.first().ok_or(Error::InvalidSequence(0))?;
    let mut inter = first.clone();
    for (k, w) in compacts.windows(2).enumerate() {
        if !w[1].is_subset(&w[0])? {
            return Err(Error::InvalidSequence(k + 1));
        }
        inter = inter.intersection(&w[1])?;
    }
    let values = capacities_of(template, compacts)?;
    let limit = capacities_of(template, &[inter])?[0];
    Ok(choquet_report(values, limit, false))
}

/// Row-normalized truncated Gaussian smoother on the active nodes.
#[derive(Debug, Clone)]
pub struct Smoother {
    rows: Vec<Vec<(usize, f64)>>,
}

impl Smoother {
    /// Kernel radius `ceil(3 sigma / h)` nodes in each axis; `sigma = 0` is the identity.
    pub fn new(grid: &Grid, nodes: &[usize], sigma: f64) -> Self {
        let n = nodes.len();
        if sigma <= 0.0 {
            return Self {
                rows: (0..n).map(|a| vec![(a, 1.0)]).collect(),
            };
        }
        let mut local = vec![usize::MAX; grid.len()];
        for (a, &i) in nodes.iter().enumerate() {
            local[i] = a;
        }
        let r = (3.0 * sigma / grid.spacing()).ceil() as i64;
        let ry = if grid.dim() == 2 { r } else { 0 };
        let rows = nodes
            .iter()
            .map(|&i| {
                let mut row = Vec::new();
                for dx in -r..=r {
                    for dy in -ry..=ry {
                        if let Some(j) = grid.shifted(i, [dx, dy]) {
                            if local[j] != usize::MAX {
                                let d = grid.distance(i, j);
                                row.push((local[j], (-d * d / (2.0 * sigma * sigma)).exp()));
                            }
                        }
                    }
                }
                let total: f64 = row.iter().map(|e| e.1).sum();
                row.iter_mut().for_each(|e| e.1 /= total);
                row
            })
            .collect();
        Self { rows }
    }

    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.rows) {
            *o = row.iter().map(|&(b, w)| w * v[b]).sum();
        }
    }

    pub fn apply_transpose(&self, g: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (a, row) in self.rows.iter().enumerate() {
            for &(b, w) in row {
                out[b] += w * g[a];
            }
        }
    }
}

struct Smoothed<'a> {
    modular: &'a Modular,
    smoother: &'a Smoother,
}

impl Objective for Smoothed<'_> {
    fn dim(&self) -> usize {
        self.modular.len()
    }

    fn value(&self, v: &[f64]) -> f64 {
        let mut u = vec![0.0; v.len()];
        self.smoother.apply(v, &mut u);
        self.modular.value_local(&u).total
    }

    fn gradient(&self, v: &[f64], out: &mut [f64]) {
        let mut u = vec![0.0; v.len()];
        self.smoother.apply(v, &mut u);
        let mut g = vec![0.0; v.len()];
        self.modular.gradient_local(&u, &mut g);
        self.smoother.apply_transpose(&g, out);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothRow {
    pub sigma: f64,
    /// `rho(c S v)`: modular of the inflated smoothed admissible.
    pub value: f64,
    /// `rho(S v)` before inflation.
    pub raw_value: f64,
    /// Smallest `c >= 1` with `c S v >= 1` on the pinned nodes.
    pub inflation: f64,
    /// `max(c^q+, c^p+)`, bounding `value / raw_value`.
    pub inflation_bound: f64,
    /// The required inflation stays within `1 + eta`.
    pub feasible: bool,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothReport {
    /// `p` depends on `x - y` only; without it the comparison is not backed by
    /// a density result and the table is informational.
    pub density_condition: bool,
    /// Capacity over all admissible grid functions.
    pub reference: f64,
    pub rows: Vec<SmoothRow>,
}

/// Capacity over smoothed admissibles, one row per sigma.
///
/// For each sigma, minimizes `rho(S_sigma v)` over `v` in `[0, 1]` with `v = 1`
/// on the pinned nodes, then scales `S_sigma v` by the least factor `c >= 1`
/// making it at least 1 there. The scaled function is admissible, so every
/// row is an upper bound for the capacity; a row is feasible when
/// `c <= 1 + eta`. `sigma = 0` reproduces the plain capacity.
pub fn smooth_admissible_capacity(prob: &CapacityProblem, sigmas: &[f64]) -> Result<SmoothReport> {
    prob.validate()?;
    let density_condition = prob.params.p.diagonal_invariant();
    if !density_condition {
        warn!("pair exponent is not shift invariant; smooth-admissible table is informational");
    }
    let modular = prob.modular()?;
    let reference = solve_prepared(prob, &modular)?;
    let pinned = prob.pinned()?;
    let pin: Vec<bool> = modular
        .nodes()
        .iter()
        .map(|&i| pinned.contains(i))
        .collect();
    let (q_plus, p_plus) = (modular.q_plus(), modular.p_plus());

    let mut rows = Vec::with_capacity(sigmas.len());
    for &sigma in sigmas {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be nonnegative, got {sigma}"
            )));
        }
        let (u, converged) = if sigma == 0.0 || !pin.iter().any(|&b| b) {
            (
                modular.restrict(&reference.minimizer)?,
                reference.solve.converged,
            )
        } else {
            let smoother = Smoother::new(modular.grid(), modular.nodes(), sigma);
            let objective = Smoothed {
                modular: &modular,
                smoother: &smoother,
            };
            let proj = PinnedBox {
                pinned: pin.clone(),
                level: 1.0,
                boxed: true,
            };
            let v0: Vec<f64> = pin.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
            let m = minimize(&objective, &proj, &v0, &prob.optimizer);
            let mut u = vec![0.0; modular.len()];
            smoother.apply(&m.x, &mut u);
            (u, m.converged)
        };
        let floor = u
            .iter()
            .zip(&pin)
            .filter(|(_, &b)| b)
            .map(|(x, _)| *x)
            .fold(f64::INFINITY, f64::min);
        let inflation = if floor.is_finite() && floor < 1.0 {
            1.0 / floor
        } else {
            1.0
        };
        let raw_value = if sigma == 0.0 {
            reference.value
        } else {
            modular.value_local(&u).total
        };
        let value = if inflation == 1.0 {
            raw_value
        } else {
            let scaled: Vec<f64> = u.iter().map(|x| inflation * x).collect();
            modular.value_local(&scaled).total
        };
        rows.push(SmoothRow {
            sigma,
            value,
            raw_value,
            inflation,
            inflation_bound: inflation.powf(q_plus).max(inflation.powf(p_plus)),
            feasible: inflation <= 1.0 + SMOOTH_INFLATION,
            converged,
        });
    }
    Ok(SmoothReport {
        density_condition,
        reference: reference.value,
        rows,
    })
}

/// Capacity drift when the computational box is doubled around a fixed target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub nodes: usize,
    pub doubled_nodes: usize,
    pub value: f64,
    pub doubled_value: f64,
    /// `100 * (doubled - value) / value`
    pub drift_percent: f64,
}

/// Solve the same physical problem on `grid` and on a box twice as wide with
/// the same spacing.
pub fn domain_truncation_sensitivity(
    grid: &Grid,
    s: f64,
    q: &QSpec,
    p: &PSpec,
    target: &MaskSpec,
    cfg: &OptimizerConfig,
) -> Result<TruncationReport> {
    let solve = |g: &Grid| -> Result<(usize, f64)> {
        let params = ModularParams::new(*g, s, ExponentQ::build(g, q)?, ExponentP::build(g, p)?)?;
        let prob =
            CapacityProblem::sobolev(params, target.rasterize(g)?).with_optimizer(cfg.clone());
        Ok((g.len(), sobolev_capacity(&prob)?.value))
    };
    let pad = grid
        .shape()
        .iter()
        .map(|&n| n.div_ceil(2))
        .max()
        .unwrap_or(1);
    let (nodes, value) = solve(grid)?;
    let (doubled_nodes, doubled_value) = solve(&grid.padded(pad))?;
    Ok(TruncationReport {
        nodes,
        doubled_nodes,
        value,
        doubled_value,
        drift_percent: 100.0 * (doubled_value - value) / value,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, s: f64) -> ModularParams {
        ModularParams::constant(
            Grid::line(n, 0.0, 1.0 / (n - 1) as f64).unwrap(),
            s,
            2.0,
            2.0,
        )
        .unwrap()
    }

    fn mask(params: &ModularParams, idx: &[usize]) -> Mask {
        Mask::from_indices(&params.grid, idx).unwrap()
    }

    #[test]
    fn two_node_capacity() {
        let params =
            ModularParams::constant(Grid::line(2, 0.0, 1.0).unwrap(), 0.5, 2.0, 2.0).unwrap();
        let prob = CapacityProblem::sobolev(params.clone(), mask(&params, &[0]));
        let res = sobolev_capacity(&prob).unwrap();
        assert!((res.value - 5.0 / 3.0).abs() < 1e-9);
        assert_eq!(res.radius_used, 0);
    }

    #[test]
    fn full_target_and_empty_target() {
        let params = line(9, 0.4);
        let full = sobolev_capacity(&CapacityProblem::sobolev(
            params.clone(),
            Mask::full(&params.grid),
        ))
        .unwrap();
        assert!((full.value - 9.0 / 8.0).abs() < 1e-14);
        let empty = sobolev_capacity(&CapacityProblem::sobolev(
            params.clone(),
            Mask::empty(&params.grid),
        ))
        .unwrap();
        assert_eq!(empty.value, 0.0);
    }

    #[test]
    fn nested_targets_are_monotone() {
        let params = line(17, 0.5);
        let a = sobolev_capacity(&CapacityProblem::sobolev(
            params.clone(),
            mask(&params, &[7, 8]),
        ))
        .unwrap();
        let b = sobolev_capacity(&CapacityProblem::sobolev(
            params.clone(),
            mask(&params, &[6, 7, 8, 9]),
        ))
        .unwrap();
        assert!(a.value <= b.value + SET_FUNCTION_SLACK);
        assert!(a.solve.converged && b.solve.converged);
    }

    #[test]
    fn relative_on_full_domain_matches_sobolev() {
        let params = line(9, 0.3);
        let t = mask(&params, &[2, 3]);
        let sob = sobolev_capacity(&CapacityProblem::sobolev(params.clone(), t.clone())).unwrap();
        let rel = relative_capacity(&CapacityProblem::relative(
            params.clone(),
            t,
            Mask::full(&params.grid),
        ))
        .unwrap();
        assert!((sob.value - rel.value).abs() <= SET_FUNCTION_SLACK);
    }

    #[test]
    fn relative_target_equal_to_domain() {
        let params = line(9, 0.3);
        let dom = mask(&params, &[1, 2, 3, 4]);
        let rel = relative_capacity(&CapacityProblem::relative(params.clone(), dom.clone(), dom))
            .unwrap();
        assert!((rel.value - 4.0 / 8.0).abs() < 1e-14);
    }

    #[test]
    fn relative_target_outside_domain() {
        let params = line(9, 0.3);
        let prob =
            CapacityProblem::relative(params.clone(), mask(&params, &[0]), mask(&params, &[3, 4]));
        assert_eq!(
            relative_capacity(&prob).unwrap_err(),
            Error::MaskNotInDomain
        );
        assert!(sobolev_capacity(&prob).is_err());
    }

    #[test]
    fn exterior_table_is_nonincreasing() {
        let params = line(17, 0.5);
        let prob = CapacityProblem::sobolev(params.clone(), mask(&params, &[8]));
        let rows = exterior_capacity(&prob, &[1, 2]).unwrap();
        assert_eq!(
            rows.iter().map(|r| r.radius).collect::<Vec<_>>(),
            vec![2, 1, 0]
        );
        assert!(rows.windows(2).all(|w| w[1].value < w[0].value));
        let direct = sobolev_capacity(&prob).unwrap().value;
        assert!((rows[2].value - direct).abs() <= SET_FUNCTION_SLACK);
        let full =
            exterior_capacity(&prob.with_target(Mask::full(&params.grid)), &[2, 1, 0]).unwrap();
        assert!(full
            .iter()
            .all(|r| (r.value - 1.0 - 1.0 / 16.0).abs() < 1e-14));
    }

    #[test]
    fn interior_capacity_cases() {
        let params = line(9, 0.5);
        let e = mask(&params, &[3, 4, 5]);
        let prob = CapacityProblem::sobolev(params.clone(), e.clone());
        let rep = interior_capacity(&prob, std::slice::from_ref(&e)).unwrap();
        assert!((rep.sup - sobolev_capacity(&prob).unwrap().value).abs() <= SET_FUNCTION_SLACK);
        let chain = [mask(&params, &[4]), mask(&params, &[4, 5]), e.clone()];
        let rep = interior_capacity(&prob, &chain).unwrap();
        assert!(rep
            .values
            .windows(2)
            .all(|w| w[0] <= w[1] + SET_FUNCTION_SLACK));
        assert_eq!(
            interior_capacity(&prob, &[Mask::empty(&params.grid)])
                .unwrap()
                .sup,
            0.0
        );
        assert_eq!(
            interior_capacity(&prob, &[mask(&params, &[0])]).unwrap_err(),
            Error::MaskNotInTarget(0)
        );
    }

    #[test]
    fn choquet_sequences() {
        let params = line(9, 0.5);
        let prob = CapacityProblem::sobolev(params.clone(), mask(&params, &[4]));
        let a = mask(&params, &[4]);
        let rep = choquet_c2_test(&[a.clone(), a.clone(), a.clone()], &prob).unwrap();
        assert!(rep.passed && rep.values.iter().all(|&v| v == rep.values[0]));
        let grow = [
            mask(&params, &[4]),
            mask(&params, &[3, 4, 5]),
            Mask::full(&params.grid),
        ];
        let rep = choquet_c2_test(&grow, &prob).unwrap();
        assert!(rep.passed);
        assert!((rep.limit_value - 9.0 / 8.0).abs() < 1e-14);
        let shrink = [
            mask(&params, &[2, 3, 4, 5, 6]),
            mask(&params, &[3, 4]),
            Mask::empty(&params.grid),
        ];
        let rep = choquet_c3_test(&shrink, &prob).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.limit_value, 0.0);
        assert_eq!(
            choquet_c2_test(&[grow[1].clone(), grow[0].clone()], &prob).unwrap_err(),
            Error::InvalidSequence(1)
        );
    }

    #[test]
    fn smoother_rows_sum_to_one() {
        let g = Grid::rect(6, 5, [0.0, 0.0], 0.2).unwrap();
        let nodes: Vec<usize> = (0..g.len()).collect();
        let s = Smoother::new(&g, &nodes, 0.3);
        let ones = vec![1.0; g.len()];
        let mut out = vec![0.0; g.len()];
        s.apply(&ones, &mut out);
        assert!(out.iter().all(|v| (v - 1.0).abs() < 1e-14));
        // transpose is the adjoint
        let x: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let (mut sx, mut sty) = (vec![0.0; g.len()], vec![0.0; g.len()]);
        s.apply(&x, &mut sx);
        s.apply_transpose(&y, &mut sty);
        let lhs: f64 = sx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&sty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-13);
    }

    #[test]
    fn smooth_table_at_sigma_zero_is_the_capacity() {
        let params = line(9, 0.5);
        let prob = CapacityProblem::sobolev(params.clone(), mask(&params, &[4]));
        let rep = smooth_admissible_capacity(&prob, &[0.0]).unwrap();
        assert!(rep.density_condition);
        assert_eq!(rep.rows[0].value, sobolev_capacity(&prob).unwrap().value);
    }

    #[test]
    fn smooth_table_full_target() {
        let params = line(9, 0.5);
        let prob = CapacityProblem::sobolev(params.clone(), Mask::full(&params.grid));
        let rep = smooth_admissible_capacity(&prob, &[0.2, 0.1]).unwrap();
        let rho1 = 9.0 / 8.0;
        for row in &rep.rows {
            assert!((row.value - rho1).abs() < 1e-12);
            assert!((row.inflation - 1.0).abs() < 1e-14);
            assert!(row.feasible);
        }
    }
}
