//! TOML run configuration.
//!
//! Every key has a default except `command`. Parsing is strict: unknown keys,
//! type mismatches and out-of-range values are reported with the offending
//! key and, where it can be located, its line.

use std::fmt;
use std::path::PathBuf;

use driftlab_core::{DriftFamily, JumpLaw};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Classify,
    BdOracle,
    Experiment,
    Check,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Simulate => "simulate",
            Command::Classify => "classify",
            Command::BdOracle => "bd-oracle",
            Command::Experiment => "experiment",
            Command::Check => "check",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassifyMethod {
    Theorem1,
    MvCritical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Recurrence,
    Occupancy,
}

/// Chain given directly by its rates rather than by a drift field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChainSpec {
    /// `lambda*_n / mu*_n = 1 + c / n` with `lambda*_n + mu*_n = 1`.
    Ratio { c: f64 },
}

fn d_field() -> DriftFamily {
    DriftFamily::Zero
}
fn d_jump() -> JumpLaw {
    JumpLaw::Constant1
}
fn d_x_floor() -> f64 {
    1.0
}
fn d_t_proxy() -> f64 {
    driftlab_core::fields::DEFAULT_T_PROXY
}
fn d_horizon() -> f64 {
    2e4
}
fn d_n_paths() -> usize {
    400
}
fn d_level() -> f64 {
    50.0
}
fn d_band() -> f64 {
    1.0
}
fn d_x0() -> f64 {
    driftlab_core::classifier::DEFAULT_X0
}
fn d_x_max() -> f64 {
    driftlab_core::classifier::DEFAULT_X_MAX
}
fn d_grid() -> usize {
    driftlab_core::classifier::DEFAULT_GRID
}
fn d_window() -> [i64; 2] {
    [2, 10_000]
}
fn d_n0() -> i64 {
    2
}
fn d_quadrature_points() -> usize {
    8
}
fn d_tail_extension() -> u64 {
    990_000
}
fn d_occupancy_window() -> [i64; 2] {
    [-10, 10]
}
fn d_total_time() -> f64 {
    1e5
}
fn d_sigma() -> f64 {
    1.0
}
fn d_tau() -> f64 {
    10.0
}
fn d_format() -> Format {
    Format::Json
}
fn d_method() -> ClassifyMethod {
    ClassifyMethod::Theorem1
}
fn d_kind() -> ExperimentKind {
    ExperimentKind::Recurrence
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,

    #[serde(default = "d_field")]
    pub field: DriftFamily,
    #[serde(default = "d_x_floor")]
    pub x_floor: f64,
    #[serde(default = "d_t_proxy")]
    pub t_proxy: f64,
    #[serde(default = "d_jump")]
    pub up_jump: JumpLaw,
    #[serde(default = "d_jump")]
    pub down_jump: JumpLaw,

    // simulate / experiment
    #[serde(default = "d_horizon")]
    pub horizon: f64,
    #[serde(default)]
    pub z0: f64,
    #[serde(default = "d_n_paths")]
    pub n_paths: usize,
    #[serde(default = "d_kind")]
    pub experiment: ExperimentKind,
    #[serde(default = "d_level")]
    pub level: f64,
    #[serde(default = "d_band")]
    pub band: f64,
    #[serde(default = "d_occupancy_window")]
    pub occupancy_window: [i64; 2],
    #[serde(default = "d_total_time")]
    pub total_time: f64,

    // classify
    #[serde(default = "d_method")]
    pub method: ClassifyMethod,
    #[serde(default = "d_x0")]
    pub x0: f64,
    #[serde(default = "d_x_max")]
    pub x_max: f64,
    #[serde(default = "d_grid")]
    pub grid: usize,

    // bd-oracle
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chain: Option<ChainSpec>,
    #[serde(default = "d_window")]
    pub window: [i64; 2],
    #[serde(default = "d_n0")]
    pub n0: i64,
    #[serde(default = "d_quadrature_points")]
    pub quadrature_points: usize,
    #[serde(default = "d_tail_extension")]
    pub tail_extension: u64,

    // check
    #[serde(default = "d_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub window_start: f64,
    #[serde(default = "d_tau")]
    pub tau: f64,

    /// Resolved from `--seed`, this key, `DRIFTLAB_SEED`, then 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default = "d_format")]
    pub format: Format,
    #[serde(default)]
    pub strict: bool,
    /// 0 means the available parallelism.
    #[serde(default)]
    pub workers: usize,
}

/// Flag overrides applied on top of the file. Flags win.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// `key=value` pairs; `key` may be dotted (`field.c`).
    pub set: Vec<String>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
    pub strict: bool,
    pub workers: Option<usize>,
}

/// Largest seed representable in a TOML integer.
pub const MAX_SEED: u64 = i64::MAX as u64;

/// Parses and validates a configuration without overrides.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_owned()))?;
    validate(&cfg).map_err(|e| locate(e, text))?;
    Ok(cfg)
}

/// Parses the file, applies `--set` pairs and flags, resolves the seed and
/// worker count and validates the result.
pub fn load_config(text: &str, ov: &Overrides, env_seed: Option<&str>) -> Result<RunConfig, CliError> {
    let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string().trim_end().to_owned()))?;
    if !ov.set.is_empty() {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        for pair in &ov.set {
            apply_set(&mut table, pair)?;
        }
        cfg = RunConfig::deserialize(toml::Value::Table(table))
            .map_err(|e| CliError::Config(format!("after --set overrides: {}", e.to_string().trim_end())))?;
    }
    if let Some(seed) = ov.seed {
        cfg.seed = Some(seed);
    }
    if cfg.seed.is_none() {
        cfg.seed = Some(match env_seed {
            Some(s) => s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("DRIFTLAB_SEED: expected an unsigned integer, got `{s}`")))?,
            None => 0,
        });
    }
    if let Some(output) = &ov.output {
        cfg.output = Some(output.clone());
    }
    if let Some(format) = ov.format {
        cfg.format = format;
    }
    cfg.strict |= ov.strict;
    if let Some(workers) = ov.workers {
        cfg.workers = workers;
    }
    if cfg.workers == 0 {
        cfg.workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    }
    validate(&cfg).map_err(|e| locate(e, text))?;
    Ok(cfg)
}

fn apply_set(table: &mut toml::Table, pair: &str) -> Result<(), CliError> {
    let (key, raw) = pair
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set {pair}: expected key=value")))?;
    let key = key.trim();
    let value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_owned()),
    };
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| CliError::Config(format!("--set {pair}: empty key")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_owned())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--set {pair}: `{p}` is not a table")))?;
    }
    cur.insert(last.to_owned(), value);
    Ok(())
}

/// A precondition violation on a config key.
#[derive(Debug)]
pub(crate) struct Invalid {
    pub key: String,
    pub reason: String,
}

fn bad(key: &str, reason: impl Into<String>) -> Invalid {
    Invalid {
        key: key.to_owned(),
        reason: reason.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<(), Invalid> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(bad(key, format!("must be positive and finite, got {v}")))
    }
}

fn nonnegative(key: &str, v: f64) -> Result<(), Invalid> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(bad(key, format!("must be finite and nonnegative, got {v}")))
    }
}

/// Checks the keys the selected command uses, then builds the core objects
/// once so that their own checks run before any work starts.
pub(crate) fn validate(cfg: &RunConfig) -> Result<(), Invalid> {
    if cfg.seed.is_some_and(|s| s > MAX_SEED) {
        return Err(bad("seed", format!("must not exceed {MAX_SEED}")));
    }
    positive("x_floor", cfg.x_floor)?;
    positive("t_proxy", cfg.t_proxy)?;
    let uses_walk = matches!(cfg.command, Command::Simulate | Command::Experiment | Command::Check);
    let uses_field = cfg.command != Command::BdOracle || cfg.chain.is_none();
    if uses_walk {
        for (key, law) in [("up_jump", &cfg.up_jump), ("down_jump", &cfg.down_jump)] {
            law.validate().map_err(|e| core_invalid(e, key))?;
        }
    }
    if uses_field {
        driftlab_core::DriftField::with_x_floor(cfg.field.clone(), cfg.x_floor)
            .map_err(|e| core_invalid(e, "field"))?;
    }
    match cfg.command {
        Command::Simulate => {
            nonnegative("horizon", cfg.horizon)?;
            if !cfg.z0.is_finite() {
                return Err(bad("z0", "must be finite"));
            }
        }
        Command::Classify => {
            positive("x0", cfg.x0)?;
            if !(cfg.x_max.is_finite() && cfg.x_max > cfg.x0) {
                return Err(bad("x_max", format!("must exceed x0 = {}, got {}", cfg.x0, cfg.x_max)));
            }
            if cfg.grid < 100 {
                return Err(bad("grid", format!("must be at least 100, got {}", cfg.grid)));
            }
            if cfg.method == ClassifyMethod::MvCritical {
                match cfg.field {
                    DriftFamily::PowerLaw { rho, alpha, beta } => {
                        if (alpha - (2.0 * beta - 1.0)).abs() > 1e-12 {
                            return Err(bad(
                                "field.alpha",
                                format!("mv_critical needs alpha = 2 beta - 1, got {alpha}"),
                            ));
                        }
                        driftlab_core::classifier::mv_critical_field(rho, beta)
                            .map_err(|e| core_invalid(e, "field"))?;
                    }
                    _ => return Err(bad("method", "mv_critical needs a power_law field")),
                }
            }
        }
        Command::BdOracle => {
            let [lo, hi] = cfg.window;
            if lo >= hi {
                return Err(bad("window", format!("needs lo < hi, got [{lo}, {hi}]")));
            }
            if cfg.n0 < 1 || cfg.n0 > hi {
                return Err(bad("n0", format!("must lie in [1, {hi}], got {}", cfg.n0)));
            }
            if cfg.quadrature_points == 0 {
                return Err(bad("quadrature_points", "must be at least 1"));
            }
            if let Some(ChainSpec::Ratio { c }) = cfg.chain {
                if !c.is_finite() {
                    return Err(bad("chain.c", "must be finite"));
                }
                if lo < 1 || (c < 0.0 && (lo as f64) <= -c) {
                    return Err(bad("window", "ratio chains need cells n >= 1 with 1 + c/n > 0"));
                }
            }
        }
        Command::Experiment => {
            if cfg.n_paths < 1 {
                return Err(bad("n_paths", "must be at least 1"));
            }
            match cfg.experiment {
                ExperimentKind::Recurrence => {
                    nonnegative("horizon", cfg.horizon)?;
                    positive("band", cfg.band)?;
                    if !(cfg.level.is_finite() && cfg.level > cfg.band) {
                        return Err(bad(
                            "level",
                            format!("must exceed band = {}, got {}", cfg.band, cfg.level),
                        ));
                    }
                }
                ExperimentKind::Occupancy => {
                    nonnegative("total_time", cfg.total_time)?;
                    let [lo, hi] = cfg.occupancy_window;
                    if hi - lo < 2 {
                        return Err(bad(
                            "occupancy_window",
                            format!("needs at least three cells, got [{lo}, {hi}]"),
                        ));
                    }
                    if !matches!(cfg.field, DriftFamily::MeanReverting { .. }) {
                        return Err(bad("field", "occupancy needs a mean_reverting field"));
                    }
                }
            }
        }
        Command::Check => {
            if cfg.n_paths < 100 {
                return Err(bad("n_paths", format!("must be at least 100, got {}", cfg.n_paths)));
            }
            nonnegative("sigma", cfg.sigma)?;
            nonnegative("window_start", cfg.window_start)?;
            nonnegative("tau", cfg.tau)?;
        }
    }
    Ok(())
}

fn core_invalid(e: driftlab_core::Error, table: &str) -> Invalid {
    match e {
        driftlab_core::Error::InvalidParameter { name, reason } => {
            let key = if name == "x_floor" {
                name.to_owned()
            } else {
                format!("{table}.{name}")
            };
            bad(&key, reason)
        }
        other => bad(table, other.to_string()),
    }
}

/// Attaches the line of `inv.key` in `text` when it can be found.
fn locate(inv: Invalid, text: &str) -> CliError {
    match find_key_line(text, &inv.key) {
        Some(line) => CliError::Config(format!("line {line}, key `{}`: {}", inv.key, inv.reason)),
        None => CliError::Config(format!("key `{}`: {}", inv.key, inv.reason)),
    }
}

/// 1-based line defining the dotted `key`, or of its enclosing table.
pub(crate) fn find_key_line(text: &str, key: &str) -> Option<usize> {
    let (table, leaf) = match key.rsplit_once('.') {
        Some((t, l)) => (t, l),
        None => ("", key),
    };
    let mut current = String::new();
    let mut table_line = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_owned();
            if current == key || (!table.is_empty() && current == table) {
                table_line = Some(i + 1);
            }
            continue;
        }
        let Some((k, _)) = line.split_once('=') else { continue };
        let k = k.trim();
        let full = if current.is_empty() {
            k.to_owned()
        } else {
            format!("{current}.{k}")
        };
        if full == key || (current == table && k == leaf) {
            return Some(i + 1);
        }
        if table.is_empty() && current.is_empty() && k.split('.').next() == Some(leaf) {
            return Some(i + 1);
        }
        if !table.is_empty() && current.is_empty() && k == table {
            table_line = table_line.or(Some(i + 1));
        }
    }
    table_line
}

impl RunConfig {
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}
