//! Cross-checks against a naive evaluator written from the defining double sum.

use fracap::capacity::sobolev_capacity;
use fracap::modular::{eval_modular, eval_modular_gradient};
use fracap::{
    CapacityProblem, ExponentP, ExponentQ, Grid, GridFunction, Mask, ModularParams, PSpec, QSpec,
};
use proptest::prelude::*;

/// Sum over nodes and ordered node pairs, nothing precomputed.
fn naive_modular(params: &ModularParams, u: &[f64]) -> f64 {
    let g = &params.grid;
    let d = g.dim() as i32;
    let vol = g.spacing().powi(d);
    let mut total = 0.0;
    for i in 0..g.len() {
        total += u[i].abs().powf(params.q.at(i)) * vol;
        let xi = g.coords(i);
        for j in 0..g.len() {
            if i == j {
                continue;
            }
            let xj = g.coords(j);
            let r = ((xi[0] - xj[0]).powi(2) + (xi[1] - xj[1]).powi(2)).sqrt();
            let p = params.p.value(i, j);
            total += (u[i] - u[j]).abs().powf(p) / r.powf(d as f64 + params.s * p) * vol * vol;
        }
    }
    total
}

fn params_strategy() -> impl Strategy<Value = ModularParams> {
    let shape = prop_oneof![
        (2usize..=12).prop_map(|n| vec![n]),
        (2usize..=4, 2usize..=4).prop_map(|(a, b)| vec![a, b])
    ];
    (shape, 0.05f64..0.95, 0usize..3, 1.2f64..3.0, 0.0f64..1.5).prop_map(
        |(shape, s, family, base, amp)| {
            let h = 1.0 / (shape.iter().max().unwrap() - 1) as f64;
            let grid = Grid::new(&shape, &vec![0.0; shape.len()], h).unwrap();
            let slope = vec![amp; grid.dim()];
            let (q, p) = match family {
                0 => (
                    QSpec::Constant { value: base },
                    PSpec::Constant { value: base },
                ),
                1 => (
                    QSpec::Affine {
                        base,
                        slope: slope.clone(),
                        clamp: None,
                    },
                    PSpec::Distance {
                        base,
                        amplitude: amp,
                        scale: 0.5,
                    },
                ),
                // asymmetric table: p(i, j) != p(j, i)
                _ => {
                    let n = grid.len();
                    let values = (0..n * n)
                        .map(|k| base + amp * ((k * 7 % 11) as f64) / 11.0)
                        .collect();
                    (
                        QSpec::Affine {
                            base,
                            slope,
                            clamp: None,
                        },
                        PSpec::Table { values },
                    )
                }
            };
            let q = ExponentQ::build(&grid, &q).unwrap();
            let p = ExponentP::build(&grid, &p).unwrap();
            ModularParams::new(grid, s, q, p).unwrap()
        },
    )
}

fn with_values(params: ModularParams) -> impl Strategy<Value = (ModularParams, Vec<f64>)> {
    let n = params.grid.len();
    (Just(params), prop::collection::vec(-2.0f64..2.0, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn modular_matches_naive_sum((params, u) in params_strategy().prop_flat_map(with_values)) {
        let f = GridFunction::new(&params.grid, u.clone()).unwrap();
        let got = eval_modular(&f, &params).unwrap().total;
        let want = naive_modular(&params, &u);
        prop_assert!((got - want).abs() <= 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn gradient_matches_differences_of_naive_sum((params, u) in params_strategy().prop_flat_map(with_values)) {
        let f = GridFunction::new(&params.grid, u.clone()).unwrap();
        let g = eval_modular_gradient(&f, &params).unwrap();
        let mut x = u.clone();
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..x.len() {
            let step = 1e-6 * (1.0 + x[i].abs());
            let xi = x[i];
            x[i] = xi + step;
            let up = naive_modular(&params, &x);
            x[i] = xi - step;
            let down = naive_modular(&params, &x);
            x[i] = xi;
            let fd = (up - down) / (2.0 * step);
            err = err.max((g.values()[i] - fd).abs());
            scale = scale.max(fd.abs());
        }
        prop_assert!(err <= 1e-5 * scale.max(1e-300), "relative error {}", err / scale);
    }

    /// Two nodes, one pinned: minimize a + b t^2 + c (1 - t)^2 by hand.
    #[test]
    fn two_node_capacity_closed_form(h in 0.1f64..2.0, s in 0.05f64..0.95) {
        let params = ModularParams::constant(Grid::line(2, 0.0, h).unwrap(), s, 2.0, 2.0).unwrap();
        let target = Mask::from_indices(&params.grid, &[1]).unwrap();
        let got = sobolev_capacity(&CapacityProblem::sobolev(params, target)).unwrap().value;
        let (a, b) = (h, h);
        let c = 2.0 * h * h / h.powf(1.0 + 2.0 * s);
        let want = a + b * c / (b + c);
        prop_assert!((got - want).abs() <= 1e-8 * want, "{got} vs {want}");
    }
}

#[test]
fn three_node_line_against_quadratic_solve() {
    // q = p = 2: the free values solve a 2x2 linear system
    let h = 0.5;
    let s = 0.4;
    let params = ModularParams::constant(Grid::line(3, 0.0, h).unwrap(), s, 2.0, 2.0).unwrap();
    let target = Mask::from_indices(&params.grid, &[0]).unwrap();
    let got = sobolev_capacity(&CapacityProblem::sobolev(params, target))
        .unwrap()
        .value;
    // pair weights w(r) = 2 h^2 / r^(1 + 2s) for the unordered pair at distance r
    let w = |r: f64| 2.0 * h * h / r.powf(1.0 + 2.0 * s);
    let (w1, w2) = (w(h), w(2.0 * h));
    // rho(1, a, b) = h (1 + a^2 + b^2) + w1 (1-a)^2 + w1 (a-b)^2 + w2 (1-b)^2
    let m = [[h + 2.0 * w1, -w1], [-w1, h + w1 + w2]];
    let rhs = [w1, w2];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let a = (rhs[0] * m[1][1] - m[0][1] * rhs[1]) / det;
    let b = (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det;
    let want = h * (1.0 + a * a + b * b)
        + w1 * (1.0 - a).powi(2)
        + w1 * (a - b).powi(2)
        + w2 * (1.0 - b).powi(2);
    assert!((got - want).abs() < 1e-9 * want, "{got} vs {want}");
}
