//! Randomized property campaigns over the modular, lattice, optimizer and
//! capacity modules, collected into a versioned JSON report.
//!
//! Every case is drawn from its own ChaCha8 stream keyed by
//! `(seed, property, trial, rep)`, so a report depends only on the config and
//! not on scheduling. A failing case carries its full instance and can be
//! re-checked with [`replay`].

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capacity::{
    choquet_c2_test, choquet_c3_test, domain_truncation_sensitivity, exterior_capacity,
    interior_capacity, smooth_admissible_capacity, sobolev_capacity, CapacityProblem,
    SMOOTH_INFLATION,
};
use crate::error::{Error, Result};
use crate::exponent::{ExponentP, ExponentQ, PSpec, QSpec};
use crate::grid::{Grid, GridFunction, Mask, MaskSpec};
use crate::lattice::{abs_val, clamp01, min_const, pos_part};
use crate::modular::{
    convergence_equivalence_report, delta2_ratio, uniform_convexity_probe, Modular, ModularParams,
    DEFAULT_NORM_TOL,
};
use crate::optimizer::{brute_force_capacity, solve_on, solve_pinned_box, OptimizerConfig};

pub const SCHEMA: u32 = 1;

/// Failures kept per property in the report.
const MAX_FAILURES: usize = 5;

/// A named pair of exponent descriptions.
///
/// Affine slopes are padded with zeros (or cut) to the grid dimension, so one
/// family serves both 1D and 2D grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Family {
    pub name: String,
    pub q: QSpec,
    pub p: PSpec,
}

impl Family {
    pub fn constant(value: f64) -> Self {
        Family {
            name: format!("constant-{value}"),
            q: QSpec::Constant { value },
            p: PSpec::Constant { value },
        }
    }

    /// `q` ramps from 1.5 to 2.5 across the unit box, `p = 2 + min(1, |x-y|)`.
    pub fn ramp() -> Self {
        Family {
            name: "ramp".into(),
            q: QSpec::Affine {
                base: 1.5,
                slope: vec![1.0],
                clamp: Some([1.5, 2.5]),
            },
            p: PSpec::Distance {
                base: 2.0,
                amplitude: 1.0,
                scale: 1.0,
            },
        }
    }

    fn q_for(&self, dim: usize) -> QSpec {
        fit_dim(&self.q, dim)
    }

    fn p_for(&self, dim: usize) -> PSpec {
        match &self.p {
            PSpec::Separable { field } => PSpec::Separable {
                field: fit_dim(field, dim),
            },
            other => other.clone(),
        }
    }
}

fn fit_dim(spec: &QSpec, dim: usize) -> QSpec {
    match spec {
        QSpec::Affine { base, slope, clamp } => {
            let mut slope = slope.clone();
            slope.resize(dim, 0.0);
            QSpec::Affine {
                base: *base,
                slope,
                clamp: *clamp,
            }
        }
        other => other.clone(),
    }
}

fn default_tolerances() -> BTreeMap<String, f64> {
    [
        ("convexity", 1e-12),
        ("scaling_monotone", 1e-12),
        ("homogeneity_constant", 1e-12),
        ("delta2", 1e-12),
        ("norm", 1e-8),
        ("gradient", 1e-5),
        ("lattice", 1e-12),
        ("oracle", 1e-5),
        ("descent", 1e-12),
        ("pinned_scaling", 1e-6),
        ("set_function", 1e-8),
        ("truncation", 1e-6),
        ("smooth_limit", 1e-4),
        ("smooth_floor", 1e-6),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Grid shapes; each spans the unit interval or square.
    pub sizes: Vec<Vec<usize>>,
    /// Dimensions to keep from `sizes`.
    pub dims: Vec<usize>,
    pub s_values: Vec<f64>,
    pub families: Vec<Family>,
    pub trials: usize,
    /// Overrides for the named tolerances; unknown names are rejected.
    pub tolerances: BTreeMap<String, f64>,
    /// Row partitions of the pair sums.
    pub partitions: usize,
    /// Restrict the run to these properties; empty runs all.
    pub properties: Vec<String>,
    pub optimizer: OptimizerConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            seed: 42,
            sizes: vec![vec![9], vec![17], vec![9, 9]],
            dims: vec![1, 2],
            s_values: vec![0.3, 0.7],
            families: vec![Family::constant(2.0), Family::ramp()],
            trials: 20,
            tolerances: BTreeMap::new(),
            partitions: 1,
            properties: Vec::new(),
            optimizer: OptimizerConfig::default(),
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.trials < 1 {
            return bad("trials must be at least 1".into());
        }
        if let Some(s) = self.s_values.iter().find(|s| !(**s > 0.0 && **s < 1.0)) {
            return bad(format!("s must lie in (0,1), got {s}"));
        }
        if self.s_values.is_empty() || self.families.is_empty() {
            return bad("s_values and families must be nonempty".into());
        }
        if let Some(d) = self.dims.iter().find(|d| !matches!(d, 1 | 2)) {
            return bad(format!("dims must be 1 or 2, got {d}"));
        }
        for shape in &self.sizes {
            if !matches!(shape.len(), 1 | 2) || shape.iter().any(|&n| n < 2) {
                return bad(format!(
                    "grid size {shape:?} needs 1 or 2 axes of at least 2 nodes"
                ));
            }
        }
        if self.shapes().is_empty() {
            return bad("no grid size matches the requested dims".into());
        }
        let known = default_tolerances();
        for (k, v) in &self.tolerances {
            if !known.contains_key(k) {
                return bad(format!("unknown tolerance `{k}`"));
            }
            if !(*v >= 0.0 && v.is_finite()) {
                return bad(format!("tolerance `{k}` must be finite and nonnegative"));
            }
        }
        for name in &self.properties {
            if !PROPERTIES.iter().any(|p| p.name == name) {
                return bad(format!("unknown property `{name}`"));
            }
        }
        for fam in &self.families {
            for &d in &self.dims {
                let g = unit_grid(&vec![3; d])?;
                ExponentQ::build(&g, &fam.q_for(d))?;
                ExponentP::build(&g, &fam.p_for(d))?;
            }
        }
        self.optimizer.validate()
    }

    fn shapes(&self) -> Vec<&Vec<usize>> {
        self.sizes
            .iter()
            .filter(|s| self.dims.contains(&s.len()))
            .collect()
    }

    fn tolerances(&self) -> Tolerances {
        let mut map = default_tolerances();
        map.extend(self.tolerances.iter().map(|(k, v)| (k.clone(), *v)));
        Tolerances(map)
    }
}

struct Tolerances(BTreeMap<String, f64>);

impl Tolerances {
    fn get(&self, key: &str) -> f64 {
        self.0[key]
    }
}

/// Grid, exponents and `s` shared by the cases of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub shape: Vec<usize>,
    pub s: f64,
    pub family: Family,
    pub partitions: usize,
    pub optimizer: OptimizerConfig,
}

impl Setup {
    fn grid(&self) -> Result<Grid> {
        unit_grid(&self.shape)
    }

    fn params(&self) -> Result<ModularParams> {
        let grid = self.grid()?;
        let q = ExponentQ::build(&grid, &self.family.q_for(grid.dim()))?;
        let p = ExponentP::build(&grid, &self.family.p_for(grid.dim()))?;
        Ok(ModularParams::new(grid, self.s, q, p)?.with_partitions(self.partitions))
    }

    fn constant_params(&self, q0: f64, p0: f64) -> Result<ModularParams> {
        Ok(ModularParams::constant(self.grid()?, self.s, q0, p0)?.with_partitions(self.partitions))
    }
}

/// Grid with spacing `1 / (max side - 1)` anchored at the origin.
fn unit_grid(shape: &[usize]) -> Result<Grid> {
    let longest = shape.iter().copied().max().unwrap_or(0);
    if longest < 2 {
        return Err(Error::InvalidGrid(
            "suite grids need at least 2 nodes along some axis".into(),
        ));
    }
    Grid::new(shape, &vec![0.0; shape.len()], 1.0 / (longest - 1) as f64)
}

/// Random data of one case: grid functions, masks as node lists, and scalars.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Draw {
    pub functions: Vec<Vec<f64>>,
    pub masks: Vec<Vec<usize>>,
    pub scalars: Vec<f64>,
}

/// Everything needed to re-check one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub property: String,
    pub trial: usize,
    pub rep: usize,
    pub setup: Setup,
    pub draw: Draw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub trial: usize,
    pub rep: usize,
    /// Absent when the check raised an error instead of producing a margin.
    pub margin: Option<f64>,
    pub error: Option<String>,
    pub instance: Instance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observed {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub name: String,
    pub module: String,
    /// Informational entries record a statistic and never fail.
    pub asserted: bool,
    pub trials: usize,
    pub cases: usize,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    /// Smallest `bound - observed` over the checked cases.
    pub worst_margin: Option<f64>,
    pub observed: Option<Observed>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema: u32,
    pub version: String,
    pub config: SuiteConfig,
    pub all_passed: bool,
    pub properties: Vec<PropertyReport>,
}

impl SuiteReport {
    pub fn property(&self, name: &str) -> Option<&PropertyReport> {
        self.properties.iter().find(|p| p.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Fixed-width text table, one row per property.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:<10} {:<6} {:>6} {:>6} {:>6} {:>6}  worst margin / observed",
            "property", "module", "kind", "cases", "pass", "fail", "skip",
        );
        for p in &self.properties {
            let tail = match (p.asserted, p.worst_margin, p.observed) {
                (true, Some(m), _) => format!("{:.3e}", m + 0.0),
                (false, _, Some(o)) => format!("[{:.6e}, {:.6e}]", o.min, o.max),
                _ => "-".into(),
            };
            let _ = writeln!(
                out,
                "{:<28} {:<10} {:<6} {:>6} {:>6} {:>6} {:>6}  {}",
                p.name,
                p.module,
                if p.asserted { "assert" } else { "info" },
                p.cases,
                p.passed,
                p.failed,
                p.skipped,
                tail
            );
        }
        let _ = writeln!(
            out,
            "overall: {}",
            if self.all_passed { "PASS" } else { "FAIL" }
        );
        out
    }
}

#[derive(Clone, Copy)]
enum SetupKind {
    /// One of the configured grids, cycling through sizes, `s` and families.
    Config,
    /// At most 16 nodes.
    Small,
    /// Few enough nodes for the exhaustive oracle.
    Oracle,
}

type DrawFn = fn(&Setup, &Grid, &mut ChaCha8Rng) -> Draw;
/// `Ok(None)` marks a skipped case.
type CheckFn = fn(&Setup, &Draw, &Tolerances) -> Result<Option<f64>>;

struct Property {
    name: &'static str,
    module: &'static str,
    asserted: bool,
    reps: usize,
    /// Informational entries that are expensive run on the first trials only.
    max_trials: Option<usize>,
    setup: SetupKind,
    draw: DrawFn,
    check: CheckFn,
}

const fn prop(
    name: &'static str,
    module: &'static str,
    reps: usize,
    setup: SetupKind,
    draw: DrawFn,
    check: CheckFn,
) -> Property {
    Property {
        name,
        module,
        asserted: true,
        reps,
        max_trials: None,
        setup,
        draw,
        check,
    }
}

const fn info(
    name: &'static str,
    module: &'static str,
    max_trials: usize,
    draw: DrawFn,
    check: CheckFn,
) -> Property {
    Property {
        name,
        module,
        asserted: false,
        reps: 1,
        max_trials: Some(max_trials),
        setup: SetupKind::Config,
        draw,
        check,
    }
}

use SetupKind::{Config, Oracle, Small};

static PROPERTIES: &[Property] = &[
    prop(
        "modular_zero",
        "modular",
        1,
        Config,
        draw_nothing,
        check_modular_zero,
    ),
    prop(
        "modular_even",
        "modular",
        2,
        Config,
        draw_u,
        check_modular_even,
    ),
    prop(
        "modular_convexity",
        "modular",
        5,
        Config,
        draw_convexity,
        check_convexity,
    ),
    prop(
        "modular_scaling_monotone",
        "modular",
        1,
        Config,
        draw_u,
        check_scaling_monotone,
    ),
    prop(
        "modular_homogeneity_constant",
        "modular",
        2,
        Config,
        draw_homogeneity,
        check_homogeneity_constant,
    ),
    prop("delta2_bound", "modular", 5, Config, draw_u, check_delta2),
    prop(
        "delta2_quadratic",
        "modular",
        2,
        Config,
        draw_u,
        check_delta2_quadratic,
    ),
    prop("norm_unit", "modular", 3, Config, draw_u, check_norm_unit),
    prop(
        "norm_homogeneity",
        "modular",
        3,
        Config,
        draw_homogeneity_norm,
        check_norm_homogeneity,
    ),
    prop(
        "norm_triangle",
        "modular",
        3,
        Config,
        draw_uv,
        check_norm_triangle,
    ),
    prop(
        "norm_unit_ball",
        "modular",
        3,
        Config,
        draw_unit_ball,
        check_unit_ball,
    ),
    prop("gradient_fd", "modular", 3, Small, draw_u, check_gradient),
    prop(
        "convergence_equivalence",
        "modular",
        1,
        Config,
        draw_uv,
        check_convergence,
    ),
    prop(
        "lattice_abs",
        "lattice",
        5,
        Config,
        draw_u,
        check_lattice_abs,
    ),
    prop(
        "lattice_pos",
        "lattice",
        5,
        Config,
        draw_u,
        check_lattice_pos,
    ),
    prop(
        "lattice_min_one",
        "lattice",
        5,
        Config,
        draw_u,
        check_lattice_min_one,
    ),
    prop(
        "lattice_clamp01",
        "lattice",
        5,
        Config,
        draw_uv,
        check_clamp01,
    ),
    prop(
        "optimizer_oracle",
        "optimizer",
        2,
        Oracle,
        draw_oracle,
        check_oracle,
    ),
    prop(
        "optimizer_descent",
        "optimizer",
        1,
        Config,
        draw_target,
        check_descent,
    ),
    prop(
        "optimizer_pinned_scaling",
        "optimizer",
        1,
        Config,
        draw_pinned_scaling,
        check_pinned_scaling,
    ),
    prop(
        "capacity_empty",
        "capacity",
        1,
        Config,
        draw_nothing,
        check_capacity_empty,
    ),
    prop(
        "capacity_monotone",
        "capacity",
        1,
        Config,
        draw_nested,
        check_capacity_monotone,
    ),
    prop(
        "capacity_truncation",
        "capacity",
        1,
        Config,
        draw_target,
        check_capacity_truncation,
    ),
    prop(
        "capacity_outer_regularity",
        "capacity",
        1,
        Config,
        draw_target,
        check_outer_regularity,
    ),
    prop(
        "capacity_feasible_bound",
        "capacity",
        1,
        Config,
        draw_target_radius,
        check_feasible_bound,
    ),
    prop(
        "capacity_choquet_c2",
        "capacity",
        1,
        Config,
        draw_increasing,
        check_choquet_c2,
    ),
    prop(
        "capacity_choquet_c3",
        "capacity",
        1,
        Config,
        draw_decreasing,
        check_choquet_c3,
    ),
    prop(
        "capacity_interior",
        "capacity",
        1,
        Config,
        draw_interior,
        check_interior,
    ),
    prop(
        "capacity_relative_full_domain",
        "capacity",
        1,
        Config,
        draw_target,
        check_relative_full,
    ),
    prop(
        "capacity_smooth_admissible",
        "capacity",
        1,
        Config,
        draw_small_target,
        check_smooth,
    ),
    info(
        "modular_uniform_convexity",
        "modular",
        usize::MAX,
        draw_uv,
        info_uniform_convexity,
    ),
    info(
        "capacity_subadditivity_ratio",
        "capacity",
        usize::MAX,
        draw_two_targets,
        info_subadditivity,
    ),
    info(
        "capacity_relative_domain_growth",
        "capacity",
        usize::MAX,
        draw_target,
        info_relative_domains,
    ),
    info(
        "capacity_domain_truncation",
        "capacity",
        3,
        draw_target,
        info_domain_truncation,
    ),
];

/// Names of all properties in report order.
pub fn property_names() -> Vec<&'static str> {
    PROPERTIES.iter().map(|p| p.name).collect()
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

fn case_rng(seed: u64, property: &str, trial: usize, rep: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a(property.as_bytes()).to_le_bytes());
    key[16..24].copy_from_slice(&(trial as u64).to_le_bytes());
    key[24..].copy_from_slice(&(rep as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn choose_setup(cfg: &SuiteConfig, kind: SetupKind, trial: usize, rng: &mut ChaCha8Rng) -> Setup {
    let shapes = cfg.shapes();
    // sizes vary fastest so the first trials already cover every grid
    let combos = shapes.len() * cfg.s_values.len() * cfg.families.len();
    let k = trial % combos;
    let shape = shapes[k % shapes.len()];
    let s = cfg.s_values[(k / shapes.len()) % cfg.s_values.len()];
    let family = cfg.families[k / (shapes.len() * cfg.s_values.len())].clone();
    let shape = match kind {
        Config => shape.clone(),
        Small if shape.len() == 1 => vec![rng.gen_range(2..=16)],
        Small => vec![rng.gen_range(2..=4), rng.gen_range(2..=4)],
        Oracle if shape.len() == 1 => vec![rng.gen_range(2..=7)],
        Oracle => [[2, 2], [2, 3], [3, 2], [3, 3]][rng.gen_range(0..4)].to_vec(),
    };
    Setup {
        shape,
        s,
        family,
        partitions: cfg.partitions,
        optimizer: cfg.optimizer.clone(),
    }
}

struct CaseOutcome {
    margin: Option<f64>,
    error: Option<String>,
    skipped: bool,
    instance: Instance,
}

fn run_case(
    cfg: &SuiteConfig,
    tol: &Tolerances,
    prop: &Property,
    trial: usize,
    rep: usize,
) -> CaseOutcome {
    let mut rng = case_rng(cfg.seed, prop.name, trial, rep);
    let setup = choose_setup(cfg, prop.setup, trial, &mut rng);
    let draw = match setup.grid() {
        Ok(grid) => (prop.draw)(&setup, &grid, &mut rng),
        Err(_) => Draw::default(),
    };
    let instance = Instance {
        property: prop.name.into(),
        trial,
        rep,
        setup,
        draw,
    };
    match (prop.check)(&instance.setup, &instance.draw, tol) {
        Ok(Some(m)) => CaseOutcome {
            margin: Some(m),
            error: None,
            skipped: false,
            instance,
        },
        Ok(None) => CaseOutcome {
            margin: None,
            error: None,
            skipped: true,
            instance,
        },
        Err(e) => CaseOutcome {
            margin: None,
            error: Some(e.to_string()),
            skipped: false,
            instance,
        },
    }
}

#[cfg(feature = "parallel")]
fn map_jobs<T: Send>(
    jobs: &[(usize, usize, usize)],
    f: impl Fn(&(usize, usize, usize)) -> T + Sync + Send,
) -> Vec<T> {
    use rayon::prelude::*;
    jobs.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_jobs<T>(jobs: &[(usize, usize, usize)], f: impl Fn(&(usize, usize, usize)) -> T) -> Vec<T> {
    jobs.iter().map(f).collect()
}

/// Run every selected property over `cfg.trials` trials.
///
/// Check failures and errors become report entries; only an invalid config
/// is an error.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    cfg.validate()?;
    let tol = cfg.tolerances();
    let selected: Vec<(usize, &Property)> = PROPERTIES
        .iter()
        .enumerate()
        .filter(|(_, p)| cfg.properties.is_empty() || cfg.properties.iter().any(|n| n == p.name))
        .collect();
    let trials_of = |p: &Property| p.max_trials.map_or(cfg.trials, |m| m.min(cfg.trials));
    let jobs: Vec<(usize, usize, usize)> = selected
        .iter()
        .flat_map(|&(k, p)| {
            (0..trials_of(p)).flat_map(move |t| (0..p.reps).map(move |r| (k, t, r)))
        })
        .collect();
    // outcomes come back in job order whatever the scheduling
    let outcomes = map_jobs(&jobs, |&(k, t, r)| {
        run_case(cfg, &tol, &PROPERTIES[k], t, r)
    });

    let mut properties = Vec::with_capacity(selected.len());
    let mut iter = outcomes.into_iter();
    for &(_, p) in &selected {
        let trials = trials_of(p);
        let mut rep = PropertyReport {
            name: p.name.into(),
            module: p.module.into(),
            asserted: p.asserted,
            trials,
            cases: trials * p.reps,
            passed: 0,
            failed: 0,
            skipped: 0,
            worst_margin: None,
            observed: None,
            failures: Vec::new(),
        };
        for out in iter.by_ref().take(trials * p.reps) {
            if out.skipped {
                rep.skipped += 1;
                continue;
            }
            let ok = match out.margin {
                Some(m) if p.asserted => {
                    rep.worst_margin = Some(rep.worst_margin.map_or(m, |w: f64| w.min(m)));
                    m >= 0.0
                }
                Some(m) => {
                    rep.observed = Some(match rep.observed {
                        None => Observed { min: m, max: m },
                        Some(o) => Observed {
                            min: o.min.min(m),
                            max: o.max.max(m),
                        },
                    });
                    true
                }
                None => false,
            };
            if ok {
                rep.passed += 1;
            } else {
                rep.failed += 1;
                if rep.failures.len() < MAX_FAILURES {
                    rep.failures.push(Failure {
                        trial: out.instance.trial,
                        rep: out.instance.rep,
                        margin: out.margin,
                        error: out.error,
                        instance: out.instance,
                    });
                }
            }
        }
        properties.push(rep);
    }
    let all_passed = properties
        .iter()
        .all(|p| p.failed == 0 && (!p.asserted || p.passed > 0));
    Ok(SuiteReport {
        schema: SCHEMA,
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        all_passed,
        properties,
    })
}

/// Result of re-checking a single instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub property: String,
    pub margin: Option<f64>,
    pub passed: bool,
    pub skipped: bool,
}

/// Re-run the check of a serialized instance, with tolerances from `cfg`.
pub fn replay(instance: &Instance, cfg: &SuiteConfig) -> Result<ReplayOutcome> {
    let prop = PROPERTIES
        .iter()
        .find(|p| p.name == instance.property)
        .ok_or_else(|| {
            Error::InvalidParameter(format!("unknown property `{}`", instance.property))
        })?;
    let margin = (prop.check)(&instance.setup, &instance.draw, &cfg.tolerances())?;
    Ok(ReplayOutcome {
        property: prop.name.into(),
        margin,
        passed: margin.is_none_or(|m| !prop.asserted || m >= 0.0),
        skipped: margin.is_none(),
    })
}

// ---- drawing ----

fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-2.0..=2.0)).collect()
}

/// Half-open index box `[lo, hi)` per axis; the second axis is `[0, 1)` in 1D.
#[derive(Clone, Copy)]
struct IndexBox {
    lo: [usize; 2],
    hi: [usize; 2],
}

impl IndexBox {
    fn nodes(&self, grid: &Grid) -> Vec<usize> {
        let mut out = Vec::new();
        for a in self.lo[0]..self.hi[0] {
            for b in self.lo[1]..self.hi[1] {
                out.push(grid.index([a, b]));
            }
        }
        out
    }

    /// Move each face inward by 0 or 1, possibly leaving the box empty.
    fn shrink(&self, rng: &mut ChaCha8Rng, axes: usize) -> IndexBox {
        let mut b = *self;
        for a in 0..axes {
            b.lo[a] += rng.gen_range(0..=1);
            b.hi[a] = b.hi[a].saturating_sub(rng.gen_range(0..=1)).max(b.lo[a]);
        }
        b
    }
}

fn sides(grid: &Grid) -> [usize; 2] {
    let s = grid.shape();
    [s[0], if s.len() > 1 { s[1] } else { 1 }]
}

/// Random box covering between `lo_frac` and `hi_frac` of the grid (at least one node).
fn random_box(rng: &mut ChaCha8Rng, grid: &Grid, lo_frac: f64, hi_frac: f64) -> IndexBox {
    let [nx, ny] = sides(grid);
    let total = (nx * ny) as f64;
    let want = (rng.gen_range(lo_frac..=hi_frac) * total).round().max(1.0) as usize;
    let (a, b) = if ny == 1 {
        (want.min(nx), 1)
    } else {
        let a = rng.gen_range(1..=want.min(nx));
        (a, ((want as f64 / a as f64).round() as usize).clamp(1, ny))
    };
    let x0 = rng.gen_range(0..=nx - a);
    let y0 = rng.gen_range(0..=ny - b);
    IndexBox {
        lo: [x0, y0],
        hi: [x0 + a, y0 + b],
    }
}

fn target_nodes(rng: &mut ChaCha8Rng, grid: &Grid) -> Vec<usize> {
    random_box(rng, grid, 0.01, 0.5).nodes(grid)
}

fn draw_nothing(_: &Setup, _: &Grid, _: &mut ChaCha8Rng) -> Draw {
    Draw::default()
}

fn draw_u(_: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    Draw {
        functions: vec![random_values(rng, grid.len())],
        ..Draw::default()
    }
}

fn draw_uv(_: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    Draw {
        functions: vec![
            random_values(rng, grid.len()),
            random_values(rng, grid.len()),
        ],
        ..Draw::default()
    }
}

fn draw_convexity(setup: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    let mut d = draw_uv(setup, grid, rng);
    d.scalars = vec![rng.gen_range(0.0..=1.0)];
    d
}

fn draw_homogeneity(setup: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    let mut d = draw_u(setup, grid, rng);
    d.scalars = vec![rng.gen_range(1.2..=3.0), rng.gen_range(0.1..=3.0)];
    d
}

fn draw_homogeneity_norm(setup: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    let mut d = draw_u(setup, grid, rng);
    d.scalars = vec![rng.gen_range(-3.0..=3.0)];
    d
}

fn draw_unit_ball(setup: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    // rescaled in the check to norm c, so both sides of the unit sphere occur
    let mut d = draw_u(setup, grid, rng);
    d.scalars = vec![rng.gen_range(0.5..=1.5)];
    d
}

fn draw_target(_: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    Draw {
        masks: vec![target_nodes(rng, grid)],
        ..Draw::default()
    }
}

fn draw_small_target(_: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    Draw {
        masks: vec![random_box(rng, grid, 0.01, 0.1).nodes(grid)],
        ..Draw::default()
    }
}

fn draw_target_radius(setup: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    let mut d = draw_target(setup, grid, rng);
    d.scalars = vec![rng.gen_range(0..=2) as f64];
    d
}

fn draw_two_targets(_: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    Draw {
        masks: vec![target_nodes(rng, grid), target_nodes(rng, grid)],
        ..Draw::default()
    }
}

fn draw_nested(_: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    let a = target_nodes(rng, grid);
    let mut b = a.clone();
    b.extend(target_nodes(rng, grid));
    b.sort_unstable();
    b.dedup();
    Draw {
        masks: vec![a, b],
        ..Draw::default()
    }
}

fn draw_increasing(_: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    let mut current = random_box(rng, grid, 0.01, 0.2).nodes(grid);
    let mut masks = vec![current.clone()];
    for _ in 0..2 {
        current.extend(random_box(rng, grid, 0.01, 0.2).nodes(grid));
        current.sort_unstable();
        current.dedup();
        masks.push(current.clone());
    }
    Draw {
        masks,
        ..Draw::default()
    }
}

fn draw_decreasing(_: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    let axes = grid.dim();
    let mut b = random_box(rng, grid, 0.1, 0.5);
    let mut masks = vec![b.nodes(grid)];
    for _ in 0..3 {
        b = b.shrink(rng, axes);
        masks.push(b.nodes(grid));
    }
    Draw {
        masks,
        ..Draw::default()
    }
}

fn draw_interior(_: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    let axes = grid.dim();
    let e = random_box(rng, grid, 0.05, 0.5);
    let mut masks = vec![e.nodes(grid)];
    let mut inner = e;
    for _ in 0..2 {
        inner = inner.shrink(rng, axes);
        masks.push(inner.nodes(grid));
    }
    Draw {
        masks,
        ..Draw::default()
    }
}

fn draw_oracle(_: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    let n = grid.len();
    let free = rng.gen_range(1..=(n - 1).min(6));
    let mut nodes: Vec<usize> = (0..n).collect();
    // partial Fisher-Yates: the first n - free entries are pinned
    for k in 0..n - free {
        let j = rng.gen_range(k..n);
        nodes.swap(k, j);
    }
    let mut pinned = nodes[..n - free].to_vec();
    pinned.sort_unstable();
    Draw {
        masks: vec![pinned],
        ..Draw::default()
    }
}

fn draw_pinned_scaling(setup: &Setup, grid: &Grid, rng: &mut ChaCha8Rng) -> Draw {
    let mut d = draw_target(setup, grid, rng);
    d.scalars = vec![rng.gen_range(1.3..=3.0), rng.gen_range(0.5..=2.5)];
    d
}

// ---- checking ----

fn function(grid: &Grid, draw: &Draw, k: usize) -> Result<GridFunction> {
    GridFunction::new(grid, draw.functions.get(k).cloned().unwrap_or_default())
}

fn mask(grid: &Grid, draw: &Draw, k: usize) -> Result<Mask> {
    Mask::from_indices(grid, draw.masks.get(k).map_or(&[][..], |m| m.as_slice()))
}

fn scalar(draw: &Draw, k: usize) -> Result<f64> {
    draw.scalars
        .get(k)
        .copied()
        .ok_or_else(|| Error::InvalidParameter(format!("instance lacks scalar {k}")))
}

fn check_modular_zero(setup: &Setup, _: &Draw, _: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let v = Modular::new(&params)?
        .eval(&GridFunction::zeros(&params.grid))?
        .total;
    Ok(Some(-v.abs()))
}

fn check_modular_even(setup: &Setup, draw: &Draw, _: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let m = Modular::new(&params)?;
    let u = function(&params.grid, draw, 0)?;
    Ok(Some(
        -(m.eval(&u)?.total - m.eval(&u.scale(-1.0))?.total).abs(),
    ))
}

fn check_convexity(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let m = Modular::new(&params)?;
    let (u, v) = (
        function(&params.grid, draw, 0)?,
        function(&params.grid, draw, 1)?,
    );
    let t = scalar(draw, 0)?;
    let w = u.zip_with(&v, |a, b| t * a + (1.0 - t) * b)?;
    let chord = t * m.eval(&u)?.total + (1.0 - t) * m.eval(&v)?.total;
    Ok(Some(chord + tol.get("convexity") - m.eval(&w)?.total))
}

fn check_scaling_monotone(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let m = Modular::new(&params)?;
    let u = function(&params.grid, draw, 0)?;
    let ladder: Vec<f64> = (0..20)
        .map(|k| m.eval(&u.scale(3.0 * k as f64 / 19.0)).map(|v| v.total))
        .collect::<Result<_>>()?;
    let worst = ladder
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Ok(Some(worst + tol.get("scaling_monotone")))
}

fn check_homogeneity_constant(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let (p0, lambda) = (scalar(draw, 0)?, scalar(draw, 1)?);
    let params = setup.constant_params(p0, p0)?;
    let m = Modular::new(&params)?;
    let u = function(&params.grid, draw, 0)?;
    let expected = lambda.powf(p0) * m.eval(&u)?.total;
    let got = m.eval(&u.scale(lambda))?.total;
    Ok(Some(
        tol.get("homogeneity_constant") - (got - expected).abs() / expected,
    ))
}

fn check_delta2(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let u = function(&params.grid, draw, 0)?;
    let bound = params.delta2_constant();
    Ok(Some(
        bound * (1.0 + tol.get("delta2")) - delta2_ratio(&u, &params)?,
    ))
}

fn check_delta2_quadratic(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.constant_params(2.0, 2.0)?;
    let u = function(&params.grid, draw, 0)?;
    Ok(Some(
        tol.get("delta2") - (delta2_ratio(&u, &params)? - 4.0).abs(),
    ))
}

fn norm(m: &Modular, u: &GridFunction) -> Result<f64> {
    m.luxemburg_norm(u, DEFAULT_NORM_TOL)
}

fn check_norm_unit(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let m = Modular::new(&params)?;
    let u = function(&params.grid, draw, 0)?;
    let n = norm(&m, &u)?;
    let r = m.eval(&u.map(|v| v / n))?.total;
    Ok(Some((1.0 - r).min(r - (1.0 - tol.get("norm")))))
}

fn check_norm_homogeneity(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let m = Modular::new(&params)?;
    let u = function(&params.grid, draw, 0)?;
    let alpha = scalar(draw, 0)?;
    let expected = alpha.abs() * norm(&m, &u)?;
    let got = norm(&m, &u.scale(alpha))?;
    Ok(Some(
        tol.get("norm") - (got - expected).abs() / expected.max(f64::MIN_POSITIVE),
    ))
}

fn check_norm_triangle(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let m = Modular::new(&params)?;
    let (u, v) = (
        function(&params.grid, draw, 0)?,
        function(&params.grid, draw, 1)?,
    );
    let sum = norm(&m, &u)? + norm(&m, &v)?;
    Ok(Some((sum - norm(&m, &u.add(&v)?)?) / sum + tol.get("norm")))
}

fn check_unit_ball(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let m = Modular::new(&params)?;
    let u = function(&params.grid, draw, 0)?;
    let c = scalar(draw, 0)?;
    let n0 = norm(&m, &u)?;
    let w = u.map(|v| c * v / n0);
    let (n, r) = (norm(&m, &w)?, m.eval(&w)?.total);
    let band = tol.get("norm");
    // agreement, or either quantity inside the band around 1
    Ok(Some(if (n <= 1.0) == (r <= 1.0) {
        band.max((n - 1.0).abs()).max((r - 1.0).abs())
    } else {
        (band - (n - 1.0).abs()).max(band - (r - 1.0).abs())
    }))
}

fn check_gradient(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let m = Modular::new(&params)?;
    let u = function(&params.grid, draw, 0)?;
    let g = m.gradient(&u)?;
    let mut x = u.values().to_vec();
    let mut err: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for i in 0..x.len() {
        let h = 1e-6 * (1.0 + x[i].abs());
        let xi = x[i];
        x[i] = xi + h;
        let fp = m.value_local(&x).total;
        x[i] = xi - h;
        let fm = m.value_local(&x).total;
        x[i] = xi;
        let fd = (fp - fm) / (2.0 * h);
        err = err.max((g.values()[i] - fd).abs());
        scale = scale.max(fd.abs());
    }
    Ok(Some(
        tol.get("gradient") - err / scale.max(f64::MIN_POSITIVE),
    ))
}

/// Sandwich `||v||^e+ <= rho(v) <= ||v||^e-` along `u_n = u + w / n^2`, which
/// is what makes modular and norm convergence equivalent.
fn check_convergence(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let (u, w) = (
        function(&params.grid, draw, 0)?,
        function(&params.grid, draw, 1)?,
    );
    let seq: Vec<GridFunction> = (1..=30)
        .map(|n| u.add(&w.scale(1.0 / (n * n) as f64)))
        .collect::<Result<_>>()?;
    let report = convergence_equivalence_report(&seq, &u, &params, 1e-6, 1e-3)?;
    let e_minus = params.q.q_minus().min(params.p.p_minus());
    let e_plus = params.q.q_plus().max(params.p.p_plus());
    let t = tol.get("norm");
    let mut margin = f64::INFINITY;
    for row in report.rows.iter().filter(|r| r.norm <= 1.0 && r.norm > 0.0) {
        let upper = row.norm.powf(e_minus);
        let lower = row.norm.powf(e_plus);
        margin = margin.min((upper * (1.0 + t) - row.modular) / upper);
        margin = margin.min((row.modular - lower * (1.0 - t)) / lower);
    }
    let first = &report.rows[0];
    let last = report.rows.last().expect("nonempty sequence");
    if !(last.modular < first.modular && last.norm < first.norm) {
        margin = margin.min(-1.0);
    }
    Ok(Some(margin))
}

fn gagliardo(m: &Modular, u: &GridFunction) -> Result<f64> {
    Ok(m.eval(u)?.gagliardo_term)
}

fn check_lattice_abs(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let m = Modular::new(&params)?;
    let u = function(&params.grid, draw, 0)?;
    Ok(Some(
        gagliardo(&m, &u)? + tol.get("lattice") - gagliardo(&m, &abs_val(&u))?,
    ))
}

fn check_lattice_pos(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let m = Modular::new(&params)?;
    let u = function(&params.grid, draw, 0)?;
    Ok(Some(
        gagliardo(&m, &u)? + tol.get("lattice") - gagliardo(&m, &pos_part(&u))?,
    ))
}

fn check_lattice_min_one(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let m = Modular::new(&params)?;
    let u = function(&params.grid, draw, 0)?;
    Ok(Some(
        m.eval(&u)?.total + tol.get("lattice") - m.eval(&min_const(&u, 1.0))?.total,
    ))
}

fn check_clamp01(setup: &Setup, draw: &Draw, _: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    let (u, v) = (function(&grid, draw, 0)?, function(&grid, draw, 1)?);
    let (cu, cv) = (clamp01(&u), clamp01(&v));
    if clamp01(&cu) != cu {
        return Ok(Some(-1.0));
    }
    let margin = (0..grid.len())
        .map(|i| (u.values()[i] - v.values()[i]).abs() - (cu.values()[i] - cv.values()[i]).abs())
        .fold(f64::INFINITY, f64::min);
    Ok(Some(margin))
}

fn check_oracle(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let pinned = mask(&params.grid, draw, 0)?;
    let solved = solve_pinned_box(&params, &pinned, true, &setup.optimizer)?.require_converged()?;
    let brute = brute_force_capacity(&params, &pinned, 16)?;
    Ok(Some(tol.get("oracle") - (solved.value - brute).abs()))
}

fn check_descent(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let pinned = mask(&params.grid, draw, 0)?;
    let cfg = OptimizerConfig {
        record_history: true,
        ..setup.optimizer.clone()
    };
    let res = solve_pinned_box(&params, &pinned, true, &cfg)?.require_converged()?;
    let feasible = res.minimizer.values().iter().enumerate().all(|(i, &x)| {
        if pinned.contains(i) {
            x == 1.0
        } else {
            (0.0..=1.0).contains(&x)
        }
    });
    if !feasible {
        return Ok(Some(-1.0));
    }
    let rise = res
        .history
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Some(tol.get("descent") - rise.max(0.0)))
}

fn check_pinned_scaling(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let (p0, c) = (scalar(draw, 0)?, scalar(draw, 1)?);
    let params = setup.constant_params(p0, p0)?;
    let pinned = mask(&params.grid, draw, 0)?;
    let m = Modular::new(&params)?;
    let one = solve_on(&m, &pinned, 1.0, false, &setup.optimizer)?.require_converged()?;
    let scaled = solve_on(&m, &pinned, c, false, &setup.optimizer)?.require_converged()?;
    let expected = c.powf(p0) * one.value;
    Ok(Some(
        tol.get("pinned_scaling") - (scaled.value - expected).abs() / expected,
    ))
}

fn problem(setup: &Setup, target: Mask) -> Result<CapacityProblem> {
    Ok(CapacityProblem::sobolev(setup.params()?, target).with_optimizer(setup.optimizer.clone()))
}

fn converged_value(prob: &CapacityProblem) -> Result<f64> {
    Ok(sobolev_capacity(prob)?.solve.require_converged()?.value)
}

fn check_capacity_empty(setup: &Setup, _: &Draw, _: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    Ok(Some(
        -converged_value(&problem(setup, Mask::empty(&grid))?)?.abs(),
    ))
}

fn check_capacity_monotone(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    let small = converged_value(&problem(setup, mask(&grid, draw, 0)?)?)?;
    let large = converged_value(&problem(setup, mask(&grid, draw, 1)?)?)?;
    Ok(Some(large + tol.get("set_function") - small))
}

fn check_capacity_truncation(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    let prob = problem(setup, mask(&grid, draw, 0)?)?;
    let boxed = converged_value(&prob)?;
    let free = converged_value(&prob.with_truncate(false))?;
    Ok(Some(tol.get("truncation") - (boxed - free).abs()))
}

fn check_outer_regularity(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    let prob = problem(setup, mask(&grid, draw, 0)?)?;
    let rows = exterior_capacity(&prob, &[3, 2, 1, 0])?;
    if rows.iter().any(|r| !r.converged) {
        return Err(Error::InvalidParameter(
            "exterior table has an unconverged row".into(),
        ));
    }
    let t = tol.get("set_function");
    let step = rows
        .windows(2)
        .map(|w| w[0].value - w[1].value)
        .fold(f64::INFINITY, f64::min);
    let at_zero = rows.last().expect("r = 0 row").value;
    Ok(Some(
        (step + t).min(t - (at_zero - converged_value(&prob)?).abs()),
    ))
}

fn check_feasible_bound(setup: &Setup, draw: &Draw, _: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    let r = scalar(draw, 0)? as usize;
    let prob = problem(setup, mask(&grid, draw, 0)?)?.with_radius(r);
    let start = Modular::new(&prob.params)?
        .eval(&GridFunction::indicator(&prob.pinned()?))?
        .total;
    Ok(Some(start - converged_value(&prob)?))
}

fn masks(grid: &Grid, draw: &Draw) -> Result<Vec<Mask>> {
    (0..draw.masks.len()).map(|k| mask(grid, draw, k)).collect()
}

fn choquet_margin(values: &[f64], limit: f64, increasing: bool, t: f64) -> f64 {
    let step = values
        .windows(2)
        .map(|w| if increasing { w[1] - w[0] } else { w[0] - w[1] })
        .fold(f64::INFINITY, f64::min);
    (step + t).min(t - (values.last().copied().unwrap_or(0.0) - limit).abs())
}

fn check_choquet_c2(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    let rep = choquet_c2_test(&masks(&grid, draw)?, &problem(setup, Mask::empty(&grid))?)?;
    Ok(Some(choquet_margin(
        &rep.values,
        rep.limit_value,
        true,
        tol.get("set_function"),
    )))
}

fn check_choquet_c3(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    let rep = choquet_c3_test(&masks(&grid, draw)?, &problem(setup, Mask::empty(&grid))?)?;
    Ok(Some(choquet_margin(
        &rep.values,
        rep.limit_value,
        false,
        tol.get("set_function"),
    )))
}

fn check_interior(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    let all = masks(&grid, draw)?;
    let prob = problem(setup, all[0].clone())?;
    let whole = converged_value(&prob)?;
    // the target is itself compact, so it is one of the subsets
    let rep = interior_capacity(&prob, &all)?;
    let t = tol.get("set_function");
    let over = rep
        .values
        .iter()
        .map(|v| whole + t - v)
        .fold(f64::INFINITY, f64::min);
    Ok(Some(over.min(t - (rep.sup - whole).abs())))
}

fn check_relative_full(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    let target = mask(&grid, draw, 0)?;
    let sob = converged_value(&problem(setup, target.clone())?)?;
    let rel = CapacityProblem::relative(setup.params()?, target, Mask::full(&grid))
        .with_optimizer(setup.optimizer.clone());
    let rel = crate::capacity::capacity(&rel)?
        .solve
        .require_converged()?
        .value;
    Ok(Some(tol.get("set_function") - (rel - sob).abs()))
}

fn check_smooth(setup: &Setup, draw: &Draw, tol: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    let prob = problem(setup, mask(&grid, draw, 0)?)?;
    if !prob.params.p.diagonal_invariant() {
        return Ok(None);
    }
    let h = grid.spacing();
    let rep = smooth_admissible_capacity(&prob, &[0.5 * h, 0.25 * h, 0.125 * h])?;
    if rep.rows.iter().any(|r| !r.converged) {
        return Err(Error::InvalidParameter(
            "smoothed solve did not converge".into(),
        ));
    }
    let c = rep.reference;
    let last = rep.rows.last().expect("sigma rows");
    let floor = rep
        .rows
        .iter()
        .map(|r| r.value - (c - tol.get("smooth_floor")))
        .fold(f64::INFINITY, f64::min);
    let limit = tol.get("smooth_limit") - (last.value - c).abs();
    let inflation = 1.0 + SMOOTH_INFLATION - last.inflation;
    Ok(Some(floor.min(limit).min(inflation)))
}

fn info_uniform_convexity(setup: &Setup, draw: &Draw, _: &Tolerances) -> Result<Option<f64>> {
    let params = setup.params()?;
    let (u, v) = (
        function(&params.grid, draw, 0)?,
        function(&params.grid, draw, 1)?,
    );
    let n = Modular::new(&params)?;
    // normalize to the unit sphere of the modular
    let scale = |f: &GridFunction| -> Result<GridFunction> {
        let k = norm(&n, f)?;
        Ok(f.map(|x| x / k))
    };
    Ok(Some(uniform_convexity_probe(
        &[(scale(&u)?, scale(&v)?)],
        &params,
        0.1,
    )?))
}

fn info_subadditivity(setup: &Setup, draw: &Draw, _: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    let (a, b) = (mask(&grid, draw, 0)?, mask(&grid, draw, 1)?);
    let ca = converged_value(&problem(setup, a.clone())?)?;
    let cb = converged_value(&problem(setup, b.clone())?)?;
    let cu = converged_value(&problem(setup, a.union(&b)?)?)?;
    Ok(Some(cu / (ca + cb)))
}

/// Largest increase of the relative capacity as the domain grows through
/// `dilate(E, 1)`, `dilate(E, 2)`, `dilate(E, 3)` and the full grid.
fn info_relative_domains(setup: &Setup, draw: &Draw, _: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    let target = mask(&grid, draw, 0)?;
    let mut domains: Vec<Mask> = (1..=3).map(|r| target.dilate(r)).collect();
    domains.push(Mask::full(&grid));
    let values: Vec<f64> = domains
        .into_iter()
        .map(|d| {
            let prob = CapacityProblem::relative(setup.params()?, target.clone(), d)
                .with_optimizer(setup.optimizer.clone());
            Ok(crate::capacity::capacity(&prob)?.value)
        })
        .collect::<Result<_>>()?;
    Ok(Some(
        values
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max),
    ))
}

fn info_domain_truncation(setup: &Setup, draw: &Draw, _: &Tolerances) -> Result<Option<f64>> {
    let grid = setup.grid()?;
    let nodes = draw.masks.first().cloned().unwrap_or_default();
    let spec = MaskSpec::Points {
        nodes: nodes
            .iter()
            .map(|&i| grid.multi_index(i)[..grid.dim()].to_vec())
            .collect(),
    };
    let rep = domain_truncation_sensitivity(
        &grid,
        setup.s,
        &setup.family.q_for(grid.dim()),
        &setup.family.p_for(grid.dim()),
        &spec,
        &setup.optimizer,
    )?;
    Ok(Some(rep.drift_percent))
}
