//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//!
//! Closed-form values are recomputed here from scratch. The randomized
//! criteria read the suite report of the default configuration, which is
//! generated twice to check determinism.

use std::process::ExitCode;

use fracap::capacity::{
    domain_truncation_sensitivity, smooth_admissible_capacity, sobolev_capacity,
};
use fracap::modular::{eval_modular, luxemburg_norm, DEFAULT_NORM_TOL};
use fracap::suite::{run_suite, SuiteConfig, SuiteReport};
use fracap::{
    CapacityProblem, ExponentP, ExponentQ, Grid, GridFunction, Mask, MaskSpec, ModularParams,
    OptimizerConfig, PSpec, QSpec,
};

struct Line {
    id: u32,
    title: &'static str,
    pass: bool,
    detail: String,
}

fn two_node() -> ModularParams {
    ModularParams::constant(Grid::line(2, 0.0, 1.0).unwrap(), 0.5, 2.0, 2.0).unwrap()
}

/// Two nodes at distance h with q = p = 2 and u = (1, t):
/// rho = h^d (1 + t^2) + 2 h^(2d) (1 - t)^2 / h^(d + 2s), minimized at
/// t = c / (b + c) for rho = a + b t^2 + c (1 - t)^2.
fn two_node_oracle(h: f64, s: f64) -> f64 {
    let a = h;
    let b = h;
    let c = 2.0 * h * h / h.powf(1.0 + 2.0 * s);
    a + b * c / (b + c)
}

fn criterion_1() -> Line {
    let params = two_node();
    let target = Mask::from_indices(&params.grid, &[0]).unwrap();
    let got = sobolev_capacity(&CapacityProblem::sobolev(params, target)).map(|r| r.value);
    let oracle = two_node_oracle(1.0, 0.5);
    let err = got.as_ref().map_or(f64::INFINITY, |v| (v - oracle).abs());
    Line {
        id: 1,
        title: "closed-form capacity of the 2-node instance",
        pass: err <= 1e-6 && (oracle - 5.0 / 3.0).abs() < 1e-15,
        detail: format!(
            "C = {}, oracle = {oracle}, |err| = {err:.2e} (tol 1e-6)",
            got.map_or_else(|e| format!("error: {e}"), |v| v.to_string())
        ),
    }
}

fn criterion_2() -> Line {
    let params = two_node();
    let u = GridFunction::new(&params.grid, vec![1.0, 0.0]).unwrap();
    // rho(u / lambda) = 3 / lambda^2, so the norm is sqrt(3)
    let rho_oracle: f64 = 1.0 + 2.0 * 1.0;
    let norm_oracle = rho_oracle.sqrt();
    let rho = eval_modular(&u, &params).unwrap().total;
    let norm = luxemburg_norm(&u, &params, DEFAULT_NORM_TOL).unwrap();
    Line {
        id: 2,
        title: "closed-form modular and Luxemburg norm",
        pass: rho == rho_oracle && (norm - norm_oracle).abs() <= 1e-9,
        detail: format!(
            "rho = {rho} (exact 3), norm = {norm:.12}, |norm - sqrt 3| = {:.2e}",
            (norm - norm_oracle).abs()
        ),
    }
}

/// All listed properties are clean and each ran at least `min_cases` cases.
fn from_report(
    report: &SuiteReport,
    id: u32,
    title: &'static str,
    props: &[(&str, usize)],
) -> Line {
    let mut pass = true;
    let mut parts = Vec::new();
    for &(name, min_cases) in props {
        match report.property(name) {
            Some(p) => {
                let checked = p.passed + p.failed;
                let ok = p.failed == 0 && checked >= min_cases;
                pass &= ok;
                let margin = p
                    .worst_margin
                    .map_or("-".to_string(), |m| format!("{:.2e}", m + 0.0));
                parts.push(format!(
                    "{name} {}/{checked} worst margin {margin}",
                    p.passed
                ));
            }
            None => {
                pass = false;
                parts.push(format!("{name} missing"));
            }
        }
    }
    Line {
        id,
        title,
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_12() -> Line {
    // q varies, p depends on x - y only
    let p = PSpec::Distance {
        base: 2.0,
        amplitude: 1.0,
        scale: 1.0,
    };
    let cases: Vec<(Grid, QSpec, Vec<usize>)> = vec![
        (
            Grid::line(17, 0.0, 1.0 / 16.0).unwrap(),
            QSpec::Constant { value: 2.0 },
            vec![8],
        ),
        (
            Grid::line(17, 0.0, 1.0 / 16.0).unwrap(),
            QSpec::Affine {
                base: 1.5,
                slope: vec![1.0],
                clamp: Some([1.5, 2.5]),
            },
            vec![6, 7, 8, 9],
        ),
        (
            Grid::rect(9, 9, [0.0, 0.0], 0.125).unwrap(),
            QSpec::Affine {
                base: 1.5,
                slope: vec![0.5, 0.5],
                clamp: None,
            },
            vec![30, 31, 39, 40],
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (grid, q, nodes) in cases {
        let params = ModularParams::new(
            grid,
            0.5,
            ExponentQ::build(&grid, &q).unwrap(),
            ExponentP::build(&grid, &p).unwrap(),
        )
        .unwrap();
        let target = Mask::from_indices(&grid, &nodes).unwrap();
        let h = grid.spacing();
        let rep = smooth_admissible_capacity(
            &CapacityProblem::sobolev(params, target),
            &[0.5 * h, 0.25 * h, 0.125 * h],
        )
        .unwrap();
        let c = rep.reference;
        let last = rep.rows.last().unwrap().value;
        let floor_ok = rep.rows.iter().all(|r| r.value >= c - 1e-6);
        let ok = rep.density_condition && floor_ok && (last - c).abs() <= 1e-4;
        pass &= ok;
        let values: Vec<String> = rep.rows.iter().map(|r| format!("{:.8}", r.value)).collect();
        parts.push(format!("C(K) = {c:.8}, table [{}]", values.join(", ")));
    }
    Line {
        id: 12,
        title: "smooth-admissible comparison on compact targets",
        pass,
        detail: parts.join("; "),
    }
}

fn criterion_13(a: &str, b: &str) -> Line {
    Line {
        id: 13,
        title: "suite determinism",
        pass: a == b,
        detail: format!("two runs, {} bytes each, identical = {}", a.len(), a == b),
    }
}

fn criterion_14() -> Line {
    let grid = Grid::line(17, 0.0, 1.0 / 16.0).unwrap();
    let rep = domain_truncation_sensitivity(
        &grid,
        0.5,
        &QSpec::Constant { value: 2.0 },
        &PSpec::Constant { value: 2.0 },
        &MaskSpec::Interval {
            lo: 0.4375,
            hi: 0.5625,
        },
        &OptimizerConfig::default(),
    );
    match rep {
        Ok(rep) => {
            let path =
                std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("domain_truncation.json");
            let json = serde_json::to_string_pretty(&rep).unwrap();
            let written = fracap::io::write_atomic(&path, json.as_bytes()).is_ok();
            Line {
                id: 14,
                title: "domain-truncation sensitivity report (documented, not asserted)",
                pass: written,
                detail: format!(
                    "C = {:.8} on {} nodes, {:.8} on {} nodes, drift {:+.2}%, written to {}",
                    rep.value,
                    rep.nodes,
                    rep.doubled_value,
                    rep.doubled_nodes,
                    rep.drift_percent,
                    path.display()
                ),
            }
        }
        Err(e) => Line {
            id: 14,
            title: "domain-truncation sensitivity report",
            pass: false,
            detail: e.to_string(),
        },
    }
}

fn main() -> ExitCode {
    let start = std::time::Instant::now();
    let cfg = SuiteConfig::default();
    let report = run_suite(&cfg).expect("default suite config is valid");
    let first = report.to_json();
    let second = run_suite(&cfg)
        .expect("default suite config is valid")
        .to_json();

    let lines = vec![
        criterion_1(),
        criterion_2(),
        from_report(
            &report,
            3,
            "solver matches brute force on <= 6 free nodes",
            &[("optimizer_oracle", 25)],
        ),
        from_report(
            &report,
            4,
            "analytic gradient vs central differences",
            &[("gradient_fd", 50)],
        ),
        from_report(
            &report,
            5,
            "modular axioms",
            &[
                ("modular_zero", 1),
                ("modular_even", 1),
                ("modular_convexity", 100),
                ("modular_scaling_monotone", 20),
            ],
        ),
        from_report(
            &report,
            6,
            "Delta_2 bound",
            &[("delta2_bound", 100), ("delta2_quadratic", 1)],
        ),
        from_report(
            &report,
            7,
            "lattice inequalities",
            &[
                ("lattice_abs", 100),
                ("lattice_pos", 100),
                ("lattice_min_one", 100),
            ],
        ),
        from_report(
            &report,
            8,
            "Luxemburg norm contract",
            &[
                ("norm_unit", 1),
                ("norm_homogeneity", 50),
                ("norm_triangle", 50),
                ("norm_unit_ball", 1),
            ],
        ),
        from_report(
            &report,
            9,
            "capacity set-function properties",
            &[
                ("capacity_empty", 1),
                ("capacity_monotone", 20),
                ("capacity_truncation", 10),
            ],
        ),
        from_report(
            &report,
            10,
            "outer regularity surrogate",
            &[("capacity_outer_regularity", 10)],
        ),
        from_report(
            &report,
            11,
            "Choquet limits",
            &[("capacity_choquet_c2", 5), ("capacity_choquet_c3", 5)],
        ),
        criterion_12(),
        criterion_13(&first, &second),
        criterion_14(),
    ];

    println!("{}", report.summary_table());
    let mut failed = 0;
    for l in &lines {
        println!(
            "criterion {:>2} {}: {} | {}",
            l.id,
            if l.pass { "PASS" } else { "FAIL" },
            l.title,
            l.detail
        );
        failed += usize::from(!l.pass);
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1?}",
        lines.len() - failed,
        lines.len(),
        start.elapsed()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
