//! Command execution and output files.

use std::path::{Path, PathBuf};

use fracap::capacity::{
    capacity, domain_truncation_sensitivity, smooth_admissible_capacity, SmoothReport,
    TruncationReport,
};
use fracap::io::{format_g17, grid_function_csv, read_grid_function, write_atomic};
use fracap::modular::DEFAULT_NORM_TOL;
use fracap::suite::{replay, run_suite, Instance, SuiteConfig};
use fracap::{CapacityProblem, GridFunction, MaskSpec, Modular, ModularParams};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::config::{config_err, params_for, CliError, Command, Loaded, RunConfig};

pub struct Options {
    pub out: PathBuf,
    pub threads: usize,
    pub seed: Option<u64>,
}

fn compute_err(e: impl std::fmt::Display) -> CliError {
    CliError::Compute(e.to_string())
}

/// Output context: directory, file stem and the comment line for CSVs.
struct Sink {
    dir: PathBuf,
    comment: String,
}

impl Sink {
    fn write(&self, name: &str, body: &str) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        write_atomic(&path, body.as_bytes())
            .map_err(|e| compute_err(format!("writing {}: {e}", path.display())))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }

    fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        let mut body = format!("# {}\n{}\n", self.comment, header.join(","));
        for row in rows {
            let cells: Vec<String> = row.iter().map(|c| csv_cell(c)).collect();
            body.push_str(&cells.join(","));
            body.push('\n');
        }
        self.write(name, &body)
    }

    fn json(&self, name: &str, value: &impl Serialize) -> Result<PathBuf, CliError> {
        let body = serde_json::to_string_pretty(value).map_err(compute_err)? + "\n";
        self.write(name, &body)
    }

    fn grid_function(&self, name: &str, u: &GridFunction) -> Result<PathBuf, CliError> {
        self.write(name, &grid_function_csv(u, &self.comment))
    }
}

fn csv_cell(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

/// Hash of the effective configuration, command-line overrides included.
fn config_hash(cfg: &RunConfig, opts: &Options) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg).expect("config serializes"));
    h.update(format!("threads={} seed={:?}", opts.threads, opts.seed));
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn exponent_summary(params: &ModularParams) -> String {
    format!(
        "q={}..{};p={}..{}",
        params.q.q_minus(),
        params.q.q_plus(),
        params.p.p_minus(),
        params.p.p_plus()
    )
}

fn names(cfg: &RunConfig, default_stem: &str) -> (String, String) {
    (
        cfg.outputs
            .csv
            .clone()
            .unwrap_or_else(|| format!("{default_stem}.csv")),
        cfg.outputs
            .json
            .clone()
            .unwrap_or_else(|| format!("{default_stem}.json")),
    )
}

fn stem(name: &str) -> &str {
    name.rsplit_once('.').map_or(name, |(a, _)| a)
}

pub fn run(loaded: &Loaded, opts: &Options) -> Result<(), CliError> {
    let cfg = &loaded.config;
    if opts.seed.is_some() && cfg.command != Command::Suite {
        log::warn!("--seed only affects the suite command; ignored");
    }
    let sink = Sink {
        dir: opts.out.clone(),
        comment: format!(
            "fracap {} config-sha256={}",
            env!("CARGO_PKG_VERSION"),
            config_hash(cfg, opts)
        ),
    };
    match cfg.command {
        Command::Modular | Command::Norm => run_modular(loaded, opts, &sink),
        Command::Capacity | Command::Relcap => run_capacity(loaded, opts, &sink),
        Command::Sweep => run_sweep(loaded, opts, &sink),
        Command::Suite => run_suite_cmd(loaded, opts, &sink),
        Command::Replay => run_replay(loaded, &sink),
    }
}

fn run_modular(loaded: &Loaded, opts: &Options, sink: &Sink) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let s = cfg.s.expect("validated");
    let params = params_for(cfg, s, opts.threads)?;
    let path = loaded.resolve(cfg.u.as_deref().expect("validated"));
    let u = read_grid_function(&path, &params.grid).map_err(config_err)?;
    let m = Modular::new(&params).map_err(compute_err)?;
    let exps = exponent_summary(&params);
    let (csv, json) = names(cfg, cfg.command.name());
    if cfg.command == Command::Modular {
        let v = m.eval(&u).map_err(compute_err)?;
        sink.csv(
            &csv,
            &["s", "exponents", "lebesgue", "gagliardo", "total"],
            &[vec![
                format_g17(s),
                exps.clone(),
                format_g17(v.lebesgue_term),
                format_g17(v.gagliardo_term),
                format_g17(v.total),
            ]],
        )?;
        sink.json(
            &json,
            &serde_json::json!({ "command": "modular", "s": s, "exponents": exps, "value": v }),
        )?;
        println!("rho(u) = {}", format_g17(v.total));
    } else {
        let tol = cfg.norm_tol.unwrap_or(DEFAULT_NORM_TOL);
        let n = m.luxemburg_norm(&u, tol).map_err(compute_err)?;
        let at = if n > 0.0 {
            m.eval(&u.map(|x| x / n)).map_err(compute_err)?.total
        } else {
            0.0
        };
        sink.csv(
            &csv,
            &["s", "exponents", "norm", "modular_at_norm"],
            &[vec![
                format_g17(s),
                exps.clone(),
                format_g17(n),
                format_g17(at),
            ]],
        )?;
        sink.json(
            &json,
            &serde_json::json!({ "command": "norm", "s": s, "exponents": exps, "norm": n, "modular_at_norm": at, "tol": tol }),
        )?;
        println!("||u|| = {}", format_g17(n));
    }
    Ok(())
}

#[derive(Serialize)]
struct Row {
    variant: String,
    set: String,
    radius: usize,
    s: f64,
    exponents: String,
    value: f64,
    iters: usize,
    converged: bool,
    projected_grad_norm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    minimizer: Option<Vec<f64>>,
}

impl Row {
    fn cells(&self) -> Vec<String> {
        vec![
            self.variant.clone(),
            self.set.clone(),
            self.radius.to_string(),
            format_g17(self.s),
            self.exponents.clone(),
            format_g17(self.value),
            self.iters.to_string(),
            self.converged.to_string(),
        ]
    }
}

const ROW_HEADER: [&str; 8] = [
    "variant",
    "set",
    "r",
    "s",
    "exponents",
    "value",
    "iters",
    "converged",
];

fn set_descriptor(target: &MaskSpec) -> String {
    serde_json::to_string(target).expect("mask spec serializes")
}

fn solve_row(
    prob: &CapacityProblem,
    set: &str,
    keep: bool,
) -> Result<(Row, GridFunction), CliError> {
    let res = capacity(prob).map_err(compute_err)?;
    let row = Row {
        variant: prob.variant.name().into(),
        set: set.into(),
        radius: prob.radius,
        s: prob.params.s,
        exponents: exponent_summary(&prob.params),
        value: res.value,
        iters: res.solve.iters,
        converged: res.solve.converged,
        projected_grad_norm: res.solve.projected_grad_norm,
        minimizer: keep.then(|| res.minimizer.values().to_vec()),
    };
    Ok((row, res.minimizer))
}

fn unconverged(rows: &[Row]) -> Result<(), CliError> {
    match rows.iter().find(|r| !r.converged) {
        Some(r) => Err(compute_err(format!(
            "solver did not converge (r={}, s={}, projected gradient {:.3e} after {} iterations)",
            r.radius, r.s, r.projected_grad_norm, r.iters
        ))),
        None => Ok(()),
    }
}

#[derive(Serialize)]
struct CapacityOutput<'a> {
    command: &'static str,
    config_sha256: &'a str,
    rows: Vec<Row>,
    #[serde(skip_serializing_if = "Option::is_none")]
    smooth: Option<SmoothReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    box_sensitivity: Option<TruncationReport>,
}

fn run_capacity(loaded: &Loaded, opts: &Options, sink: &Sink) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let s = cfg.s.expect("validated");
    let params = params_for(cfg, s, opts.threads)?;
    let target_spec = cfg.target.as_ref().expect("validated");
    let target = target_spec.rasterize(&params.grid).map_err(config_err)?;
    let mut prob = match cfg.command {
        Command::Relcap => {
            let domain = cfg
                .domain
                .as_ref()
                .expect("validated")
                .rasterize(&params.grid)
                .map_err(config_err)?;
            CapacityProblem::relative(params.clone(), target, domain)
        }
        _ => CapacityProblem::sobolev(params.clone(), target),
    };
    prob = prob
        .with_truncate(cfg.truncate)
        .with_optimizer(cfg.optimizer.clone());
    prob.validate().map_err(config_err)?;

    let set = set_descriptor(target_spec);
    let radii = cfg.radii.clone().unwrap_or_else(|| vec![cfg.radius]);
    let (csv, json) = names(cfg, cfg.command.name());
    let mut rows = Vec::new();
    for &r in &radii {
        let (row, minimizer) = solve_row(&prob.clone().with_radius(r), &set, cfg.write_minimizer)?;
        if cfg.write_minimizer {
            sink.grid_function(&format!("{}_minimizer_r{r}.csv", stem(&csv)), &minimizer)?;
        }
        println!(
            "{} r={} value={} converged={}",
            row.variant,
            r,
            format_g17(row.value),
            row.converged
        );
        rows.push(row);
    }
    sink.csv(
        &csv,
        &ROW_HEADER,
        &rows.iter().map(Row::cells).collect::<Vec<_>>(),
    )?;

    let smooth = match &cfg.sigmas {
        Some(sig) => {
            let h = params.grid.spacing();
            let scaled: Vec<f64> = sig.iter().map(|x| x * h).collect();
            let rep = smooth_admissible_capacity(&prob.clone().with_radius(cfg.radius), &scaled)
                .map_err(compute_err)?;
            let table: Vec<Vec<String>> = rep
                .rows
                .iter()
                .zip(sig)
                .map(|(r, sh)| {
                    vec![
                        format_g17(*sh),
                        format_g17(r.value),
                        format_g17(r.raw_value),
                        format_g17(r.inflation),
                        r.feasible.to_string(),
                        r.converged.to_string(),
                    ]
                })
                .collect();
            sink.csv(
                &format!("{}_smooth.csv", stem(&csv)),
                &[
                    "sigma_over_h",
                    "value",
                    "raw_value",
                    "inflation",
                    "feasible",
                    "converged",
                ],
                &table,
            )?;
            Some(rep)
        }
        None => None,
    };
    let box_sensitivity = if cfg.box_sensitivity && cfg.command == Command::Capacity {
        let rep = domain_truncation_sensitivity(
            &params.grid,
            s,
            cfg.q.as_ref().expect("validated"),
            cfg.p.as_ref().expect("validated"),
            target_spec,
            &cfg.optimizer,
        )
        .map_err(compute_err)?;
        println!(
            "box doubled: {} -> {} ({:+.3}%)",
            format_g17(rep.value),
            format_g17(rep.doubled_value),
            rep.drift_percent
        );
        Some(rep)
    } else {
        if cfg.box_sensitivity {
            log::warn!("box_sensitivity applies to the Sobolev capacity only; skipped");
        }
        None
    };
    let hash = sink
        .comment
        .rsplit('=')
        .next()
        .unwrap_or_default()
        .to_string();
    let out = CapacityOutput {
        command: cfg.command.name(),
        config_sha256: &hash,
        rows,
        smooth,
        box_sensitivity,
    };
    sink.json(&json, &out)?;
    unconverged(&out.rows)
}

fn run_sweep(loaded: &Loaded, opts: &Options, sink: &Sink) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let target_spec = cfg.target.as_ref().expect("validated");
    let set = set_descriptor(target_spec);
    let (csv, json) = names(cfg, "sweep");
    let mut rows = Vec::new();
    for &s in cfg.s_values.as_ref().expect("validated") {
        let params = params_for(cfg, s, opts.threads)?;
        let target = target_spec.rasterize(&params.grid).map_err(config_err)?;
        let prob = CapacityProblem::sobolev(params, target)
            .with_radius(cfg.radius)
            .with_truncate(cfg.truncate)
            .with_optimizer(cfg.optimizer.clone());
        let (row, minimizer) = solve_row(&prob, &set, cfg.write_minimizer)?;
        if cfg.write_minimizer {
            sink.grid_function(
                &format!("{}_minimizer_s{}.csv", stem(&csv), format_g17(s)),
                &minimizer,
            )?;
        }
        println!(
            "s={} value={} converged={}",
            format_g17(s),
            format_g17(row.value),
            row.converged
        );
        rows.push(row);
    }
    sink.csv(
        &csv,
        &ROW_HEADER,
        &rows.iter().map(Row::cells).collect::<Vec<_>>(),
    )?;
    let hash = sink
        .comment
        .rsplit('=')
        .next()
        .unwrap_or_default()
        .to_string();
    let out = CapacityOutput {
        command: "sweep",
        config_sha256: &hash,
        rows,
        smooth: None,
        box_sensitivity: None,
    };
    sink.json(&json, &out)?;
    unconverged(&out.rows)
}

fn suite_config(cfg: &RunConfig, opts: &Options) -> SuiteConfig {
    let mut suite = cfg.suite.clone().unwrap_or_default();
    if let Some(seed) = opts.seed {
        suite.seed = seed;
    }
    suite.partitions = opts.threads;
    suite
}

fn run_suite_cmd(loaded: &Loaded, opts: &Options, sink: &Sink) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let suite = suite_config(cfg, opts);
    let report = run_suite(&suite).map_err(config_err)?;
    let (csv, json) = names(cfg, "suite_report");
    sink.write(&json, &report.to_json())?;
    let rows: Vec<Vec<String>> = report
        .properties
        .iter()
        .map(|p| {
            vec![
                p.name.clone(),
                p.module.clone(),
                p.asserted.to_string(),
                p.cases.to_string(),
                p.passed.to_string(),
                p.failed.to_string(),
                p.skipped.to_string(),
                p.worst_margin.map_or(String::new(), format_g17),
                p.observed.map_or(String::new(), |o| format_g17(o.min)),
                p.observed.map_or(String::new(), |o| format_g17(o.max)),
            ]
        })
        .collect();
    sink.csv(
        &csv,
        &[
            "property",
            "module",
            "asserted",
            "cases",
            "passed",
            "failed",
            "skipped",
            "worst_margin",
            "observed_min",
            "observed_max",
        ],
        &rows,
    )?;
    print!("{}", report.summary_table());
    if report.all_passed {
        Ok(())
    } else {
        Err(compute_err("suite reported failing properties"))
    }
}

fn read_instance(path: &Path) -> Result<Instance, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("instance: {e}")))?;
    let mut v: Value =
        serde_json::from_str(&text).map_err(|e| config_err(format!("instance: {e}")))?;
    // accept a whole failure entry as well as a bare instance
    if let Some(inner) = v.get_mut("instance") {
        v = inner.take();
    }
    serde_json::from_value(v).map_err(|e| config_err(format!("instance: {e}")))
}

fn run_replay(loaded: &Loaded, sink: &Sink) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let instance = read_instance(&loaded.resolve(cfg.instance.as_deref().expect("validated")))?;
    let suite = cfg.suite.clone().unwrap_or_default();
    let outcome = replay(&instance, &suite).map_err(compute_err)?;
    let (_, json) = names(cfg, "replay");
    sink.json(&json, &outcome)?;
    let margin = outcome.margin.map_or("-".into(), format_g17);
    println!(
        "{} trial {} rep {}: margin {margin} {}",
        outcome.property,
        instance.trial,
        instance.rep,
        if outcome.passed { "PASS" } else { "FAIL" }
    );
    if outcome.passed {
        Ok(())
    } else {
        Err(compute_err(format!(
            "{} still fails (margin {margin})",
            outcome.property
        )))
    }
}
