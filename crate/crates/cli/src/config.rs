//! JSON run configuration: parsing, table loading, unknown-key detection and
//! validation.

use std::fmt;
use std::path::{Path, PathBuf};

use fracap::suite::SuiteConfig;
use fracap::{ExponentP, ExponentQ, Grid, MaskSpec, ModularParams, OptimizerConfig, PSpec, QSpec};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug)]
pub enum CliError {
    /// Bad or unreadable configuration; exit status 2.
    Config(String),
    /// The computation itself failed; exit status 1.
    Compute(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Compute(_) => "compute",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Compute(m) => m,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

pub fn config_err(e: impl fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Modular,
    Norm,
    Capacity,
    Relcap,
    Sweep,
    Suite,
    Replay,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Modular => "modular",
            Command::Norm => "norm",
            Command::Capacity => "capacity",
            Command::Relcap => "relcap",
            Command::Sweep => "sweep",
            Command::Suite => "suite",
            Command::Replay => "replay",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub shape: Vec<usize>,
    pub h: f64,
    /// Defaults to the origin.
    #[serde(default)]
    pub origin: Option<Vec<f64>>,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid, CliError> {
        let origin = self
            .origin
            .clone()
            .unwrap_or_else(|| vec![0.0; self.shape.len()]);
        Grid::new(&self.shape, &origin, self.h).map_err(config_err)
    }
}

/// Output file names, relative to `--out`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Outputs {
    pub csv: Option<String>,
    pub json: Option<String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub s: Option<f64>,
    #[serde(default)]
    pub q: Option<QSpec>,
    #[serde(default)]
    pub p: Option<PSpec>,
    /// CSV with the node values of `u` (`modular`, `norm`).
    #[serde(default)]
    pub u: Option<PathBuf>,
    #[serde(default)]
    pub target: Option<MaskSpec>,
    /// Subdomain for `relcap`.
    #[serde(default)]
    pub domain: Option<MaskSpec>,
    #[serde(default)]
    pub radius: usize,
    /// Exterior table radii for `capacity`; replaces `radius`.
    #[serde(default)]
    pub radii: Option<Vec<usize>>,
    /// `s` grid for `sweep`.
    #[serde(default)]
    pub s_values: Option<Vec<f64>>,
    /// Smoothing widths in units of the grid spacing; adds a smooth-admissible table.
    #[serde(default)]
    pub sigmas: Option<Vec<f64>>,
    #[serde(default = "yes")]
    pub truncate: bool,
    /// Also solve on a box twice as wide and report the drift.
    #[serde(default)]
    pub box_sensitivity: bool,
    /// Include minimizers in the JSON output and as grid CSVs.
    #[serde(default)]
    pub write_minimizer: bool,
    #[serde(default)]
    pub norm_tol: Option<f64>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub suite: Option<SuiteConfig>,
    /// Serialized suite instance (or failure entry) for `replay`.
    #[serde(default)]
    pub instance: Option<PathBuf>,
    #[serde(default)]
    pub outputs: Outputs,
}

/// A validated config plus where it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    /// Directory that relative input paths are resolved against.
    pub base: PathBuf,
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }
}

fn line_of(text: &str, key: &str) -> Option<usize> {
    let needle = format!("\"{key}\"");
    text.lines()
        .position(|l| l.contains(&needle))
        .map(|k| k + 1)
}

/// Keys of `input` that do not survive a round trip through the typed config.
fn unknown_keys(input: &Value, typed: &Value, path: &str, out: &mut Vec<String>) {
    match (input, typed) {
        (Value::Object(a), Value::Object(b)) => {
            for (k, v) in a {
                let here = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                match b.get(k) {
                    Some(w) => unknown_keys(v, w, &here, out),
                    // an explicit null for an omitted optional is harmless
                    None if v.is_null() => {}
                    None => out.push(here),
                }
            }
        }
        (Value::Array(a), Value::Array(b)) => {
            for (k, (v, w)) in a.iter().zip(b).enumerate() {
                unknown_keys(v, w, &format!("{path}[{k}]"), out);
            }
        }
        _ => {}
    }
}

/// Replace `{"kind": "table", "path": ...}` with the values read from the CSV.
fn load_tables(v: &mut Value, base: &Path, field: &str) -> Result<(), CliError> {
    let Some(obj) = v.as_object_mut() else {
        return Ok(());
    };
    if obj.get("kind").and_then(Value::as_str) == Some("table") {
        if let Some(path) = obj.remove("path") {
            let path = path
                .as_str()
                .ok_or_else(|| config_err(format!("{field}.path must be a string")))?;
            let full = if Path::new(path).is_absolute() {
                PathBuf::from(path)
            } else {
                base.join(path)
            };
            let text = std::fs::read_to_string(&full).map_err(|e| {
                config_err(format!("{field}.path: cannot read {}: {e}", full.display()))
            })?;
            let values = fracap::io::parse_numbers(&text)
                .map_err(|e| config_err(format!("{field}.path: {e}")))?;
            obj.insert(
                "values".into(),
                serde_json::to_value(values).expect("numbers serialize"),
            );
        }
    }
    if let Some(inner) = obj.get_mut("field") {
        load_tables(inner, base, &format!("{field}.field"))?;
    }
    Ok(())
}

/// Read, check and validate a config file.
///
/// Unknown keys are errors unless `lenient`, in which case each one is logged
/// as a warning and ignored.
pub fn parse_config(path: &Path, lenient: bool) -> Result<Loaded, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut raw: Value =
        serde_json::from_str(&text).map_err(|e| config_err(format!("parse error: {e}")))?;
    for field in ["q", "p"] {
        if let Some(v) = raw.get_mut(field) {
            load_tables(v, &base, field)?;
        }
    }
    let config: RunConfig = serde_json::from_value(raw.clone()).map_err(|e| {
        config_err(format!(
            "parse error: {e}{}",
            line_hint(&text, &e.to_string())
        ))
    })?;
    let mut unknown = Vec::new();
    unknown_keys(
        &raw,
        &serde_json::to_value(&config).expect("config serializes"),
        "",
        &mut unknown,
    );
    for key in &unknown {
        let leaf = key.rsplit('.').next().unwrap_or(key);
        let at = line_of(&text, leaf).map_or(String::new(), |l| format!(" (line {l})"));
        if lenient {
            log::warn!("ignoring unknown key `{key}`{at}");
        } else {
            return Err(config_err(format!("parse error: unknown key `{key}`{at}")));
        }
    }
    let loaded = Loaded { config, base };
    validate(&loaded)?;
    Ok(loaded)
}

/// serde_json value errors lack positions; point at the first mentioned key.
fn line_hint(text: &str, msg: &str) -> String {
    msg.split('`')
        .nth(1)
        .and_then(|key| line_of(text, key))
        .map_or(String::new(), |l| format!(" (line {l})"))
}

fn need<'a, T>(v: &'a Option<T>, field: &str, cmd: Command) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| {
        config_err(format!(
            "field `{field}` is required for command {}",
            cmd.name()
        ))
    })
}

fn check_s(s: f64) -> Result<(), CliError> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(config_err("s must lie in (0,1)"))
    }
}

/// Modular parameters for a given `s`.
pub fn params_for(cfg: &RunConfig, s: f64, partitions: usize) -> Result<ModularParams, CliError> {
    check_s(s)?;
    let grid = need(&cfg.grid, "grid", cfg.command)?.build()?;
    let q = ExponentQ::build(&grid, need(&cfg.q, "q", cfg.command)?).map_err(config_err)?;
    let p = ExponentP::build(&grid, need(&cfg.p, "p", cfg.command)?).map_err(config_err)?;
    Ok(ModularParams::new(grid, s, q, p)
        .map_err(config_err)?
        .with_partitions(partitions))
}

fn validate(loaded: &Loaded) -> Result<(), CliError> {
    let cfg = &loaded.config;
    let cmd = cfg.command;
    cfg.optimizer.validate().map_err(config_err)?;
    if let Some(t) = cfg.norm_tol {
        if !(t > 0.0 && t < 1.0) {
            return Err(config_err("norm_tol must lie in (0,1)"));
        }
    }
    let needs_problem = !matches!(cmd, Command::Suite | Command::Replay);
    if needs_problem {
        match cmd {
            Command::Sweep => {
                let list = need(&cfg.s_values, "s_values", cmd)?;
                if list.is_empty() {
                    return Err(config_err("s_values must not be empty"));
                }
                for &s in list {
                    params_for(cfg, s, 1)?;
                }
            }
            _ => {
                params_for(cfg, *need(&cfg.s, "s", cmd)?, 1)?;
            }
        }
        let grid = need(&cfg.grid, "grid", cmd)?.build()?;
        match cmd {
            Command::Modular | Command::Norm => {
                let u = loaded.resolve(need(&cfg.u, "u", cmd)?);
                fracap::io::read_grid_function(&u, &grid)
                    .map_err(|e| config_err(format!("u: {}: {e}", u.display())))?;
            }
            Command::Capacity | Command::Relcap | Command::Sweep => {
                need(&cfg.target, "target", cmd)?
                    .rasterize(&grid)
                    .map_err(config_err)?;
                if cmd == Command::Relcap {
                    let domain = need(&cfg.domain, "domain", cmd)?
                        .rasterize(&grid)
                        .map_err(config_err)?;
                    if domain.is_empty() {
                        return Err(config_err("domain must contain at least one node"));
                    }
                }
            }
            _ => {}
        }
        if cfg.box_sensitivity && cmd == Command::Capacity {
            // the doubled box must still carry valid exponents
            let pad = grid
                .shape()
                .iter()
                .map(|&n| n.div_ceil(2))
                .max()
                .unwrap_or(1);
            let wide = grid.padded(pad);
            let (q, p) = (need(&cfg.q, "q", cmd)?, need(&cfg.p, "p", cmd)?);
            ExponentQ::build(&wide, q)
                .and_then(|_| ExponentP::build(&wide, p))
                .map_err(|e| {
                    config_err(format!(
                        "box_sensitivity: exponents on the doubled box: {e}"
                    ))
                })?;
        }
        if let Some(sig) = &cfg.sigmas {
            if sig.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
                return Err(config_err("sigmas must be finite and nonnegative"));
            }
        }
    }
    match cmd {
        Command::Suite => {
            if let Some(s) = &cfg.suite {
                s.validate().map_err(config_err)?;
            }
        }
        Command::Replay => {
            let p = loaded.resolve(need(&cfg.instance, "instance", cmd)?);
            if !p.is_file() {
                return Err(config_err(format!(
                    "instance: {} does not exist",
                    p.display()
                )));
            }
        }
        _ => {}
    }
    Ok(())
}
