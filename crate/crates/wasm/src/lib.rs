//! Browser bindings: three 1D explorers over the unit interval.
//!
//! Every export takes plain numbers and returns a JSON string, so the page
//! needs nothing beyond `JSON.parse`. The `*_json` functions are the same
//! computations without the bindgen layer; tests call those.

use fracap::capacity::{exterior_capacity, sobolev_capacity};
use fracap::modular::{luxemburg_norm, DEFAULT_NORM_TOL};
use fracap::{
    CapacityProblem, ExponentP, ExponentQ, Grid, GridFunction, MaskSpec, Modular, ModularParams,
    PSpec, QSpec,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest grid the page may request; keeps a solve under a second or so.
pub const MAX_NODES: usize = 129;

/// Exponents on `[0, 1]`: `q(x) = q_base + q_slope x` clamped to `[1.05, 8]`,
/// `p(x, y) = p_base + p_amp min(1, |x - y|)`.
#[derive(Debug, Clone, Copy)]
pub struct Setup {
    pub n: usize,
    pub s: f64,
    pub q_base: f64,
    pub q_slope: f64,
    pub p_base: f64,
    pub p_amp: f64,
}

impl Setup {
    fn params(&self, s: f64) -> Result<ModularParams, String> {
        if !(2..=MAX_NODES).contains(&self.n) {
            return Err(format!("n must lie in 2..={MAX_NODES}"));
        }
        let grid = Grid::line(self.n, 0.0, 1.0 / (self.n - 1) as f64).map_err(|e| e.to_string())?;
        let q = QSpec::Affine {
            base: self.q_base,
            slope: vec![self.q_slope],
            clamp: Some([1.05, 8.0]),
        };
        let p = PSpec::Distance {
            base: self.p_base,
            amplitude: self.p_amp,
            scale: 1.0,
        };
        let q = ExponentQ::build(&grid, &q).map_err(|e| e.to_string())?;
        let p = ExponentP::build(&grid, &p).map_err(|e| e.to_string())?;
        ModularParams::new(grid, s, q, p).map_err(|e| e.to_string())
    }
}

fn xs(grid: &Grid) -> Vec<f64> {
    (0..grid.len()).map(|i| grid.coords(i)[0]).collect()
}

fn to_json(v: &impl Serialize) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

#[derive(Serialize)]
struct ModularOut {
    x: Vec<f64>,
    u: Vec<f64>,
    lebesgue: f64,
    gagliardo: f64,
    total: f64,
    norm: f64,
}

/// Modular and norm of the tent `height * max(0, 1 - |x - center| / width)`.
pub fn modular_json(setup: Setup, center: f64, width: f64, height: f64) -> Result<String, String> {
    if !(width > 0.0) {
        return Err("width must be positive".into());
    }
    let params = setup.params(setup.s)?;
    let u = GridFunction::from_fn(&params.grid, |x| {
        height * (1.0 - (x[0] - center).abs() / width).max(0.0)
    })
    .map_err(|e| e.to_string())?;
    let m = Modular::new(&params).map_err(|e| e.to_string())?;
    let val = m.eval(&u).map_err(|e| e.to_string())?;
    let norm = luxemburg_norm(&u, &params, DEFAULT_NORM_TOL).map_err(|e| e.to_string())?;
    Ok(to_json(&ModularOut {
        x: xs(&params.grid),
        u: u.values().to_vec(),
        lebesgue: val.lebesgue_term,
        gagliardo: val.gagliardo_term,
        total: val.total,
        norm,
    }))
}

#[derive(Serialize)]
struct CapacityOut {
    x: Vec<f64>,
    minimizer: Vec<f64>,
    value: f64,
    iters: usize,
    converged: bool,
    /// `(radius, value)` for the outer neighborhoods of the target.
    exterior: Vec<(usize, f64)>,
}

/// Capacity of `[lo, hi]` with its minimizer and a short exterior table.
pub fn capacity_json(setup: Setup, lo: f64, hi: f64) -> Result<String, String> {
    let params = setup.params(setup.s)?;
    let target = MaskSpec::Interval { lo, hi }
        .rasterize(&params.grid)
        .map_err(|e| e.to_string())?;
    if target.is_empty() {
        return Err("the interval contains no grid node".into());
    }
    let prob = CapacityProblem::sobolev(params.clone(), target);
    let res = sobolev_capacity(&prob).map_err(|e| e.to_string())?;
    let exterior = exterior_capacity(&prob, &[3, 2, 1]).map_err(|e| e.to_string())?;
    Ok(to_json(&CapacityOut {
        x: xs(&params.grid),
        minimizer: res.minimizer.values().to_vec(),
        value: res.value,
        iters: res.solve.iters,
        converged: res.solve.converged,
        exterior: exterior.iter().map(|r| (r.radius, r.value)).collect(),
    }))
}

#[derive(Serialize)]
struct SweepRow {
    s: f64,
    value: f64,
    converged: bool,
}

/// Capacity of `[lo, hi]` for `count` values of `s` spread evenly over `(0, 1)`.
pub fn sweep_json(setup: Setup, lo: f64, hi: f64, count: usize) -> Result<String, String> {
    if !(1..=32).contains(&count) {
        return Err("count must lie in 1..=32".into());
    }
    let mut rows = Vec::with_capacity(count);
    for k in 1..=count {
        let s = k as f64 / (count + 1) as f64;
        let params = setup.params(s)?;
        let target = MaskSpec::Interval { lo, hi }
            .rasterize(&params.grid)
            .map_err(|e| e.to_string())?;
        if target.is_empty() {
            return Err("the interval contains no grid node".into());
        }
        let res = sobolev_capacity(&CapacityProblem::sobolev(params, target))
            .map_err(|e| e.to_string())?;
        rows.push(SweepRow {
            s,
            value: res.value,
            converged: res.solve.converged,
        });
    }
    Ok(to_json(&rows))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn modular(
    n: usize,
    s: f64,
    q_base: f64,
    q_slope: f64,
    p_base: f64,
    p_amp: f64,
    center: f64,
    width: f64,
    height: f64,
) -> Result<String, JsValue> {
    let setup = Setup {
        n,
        s,
        q_base,
        q_slope,
        p_base,
        p_amp,
    };
    modular_json(setup, center, width, height).map_err(|e| JsValue::from_str(&e))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn capacity(
    n: usize,
    s: f64,
    q_base: f64,
    q_slope: f64,
    p_base: f64,
    p_amp: f64,
    lo: f64,
    hi: f64,
) -> Result<String, JsValue> {
    let setup = Setup {
        n,
        s,
        q_base,
        q_slope,
        p_base,
        p_amp,
    };
    capacity_json(setup, lo, hi).map_err(|e| JsValue::from_str(&e))
}

#[allow(clippy::too_many_arguments)]
#[wasm_bindgen]
pub fn sweep(
    n: usize,
    q_base: f64,
    q_slope: f64,
    p_base: f64,
    p_amp: f64,
    lo: f64,
    hi: f64,
    count: usize,
) -> Result<String, JsValue> {
    let setup = Setup {
        n,
        s: 0.5,
        q_base,
        q_slope,
        p_base,
        p_amp,
    };
    sweep_json(setup, lo, hi, count).map_err(|e| JsValue::from_str(&e))
}
