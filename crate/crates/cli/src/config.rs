//! Flat key=value run configuration.
//!
//! The format is deliberately strict: one `key = value` pair per line, `#`
//! starts a comment, and unknown or duplicate keys are errors so a typo in a
//! model parameter cannot silently fall back to a default.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thermistor_core::{
    model::validate_params, Conductivity, ConductivityId, ConstantLawWindow, ControlBox,
    ModelParams, SchemeMode,
};

/// What the optimize command runs; simulate and verify ignore it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Driver {
    Sweep,
    ProjectedGradient,
    SimulateOnly,
    ConstantBeta,
}

impl Driver {
    pub fn name(self) -> &'static str {
        match self {
            Driver::Sweep => "sweep",
            Driver::ProjectedGradient => "projected_gradient",
            Driver::SimulateOnly => "simulate_only",
            Driver::ConstantBeta => "constant_beta",
        }
    }
}

impl FromStr for Driver {
    type Err = String;

    fn from_str(s: &str) -> Result<Driver, String> {
        match s {
            "sweep" => Ok(Driver::Sweep),
            "projected_gradient" => Ok(Driver::ProjectedGradient),
            "simulate_only" => Ok(Driver::SimulateOnly),
            "constant_beta" => Ok(Driver::ConstantBeta),
            other => Err(format!(
                "unknown driver '{other}' (expected sweep, projected_gradient, simulate_only, or constant_beta)"
            )),
        }
    }
}

pub fn parse_mode(s: &str) -> Result<SchemeMode, String> {
    match s {
        "paper" => Ok(SchemeMode::BoundaryLumped),
        "consistent" => Ok(SchemeMode::ConsistentGalerkin),
        other => Err(format!("unknown mode '{other}' (expected paper or consistent)")),
    }
}

pub fn mode_name(mode: SchemeMode) -> &'static str {
    match mode {
        SchemeMode::BoundaryLumped => "paper",
        SchemeMode::ConsistentGalerkin => "consistent",
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub params: ModelParams,
    pub mode: SchemeMode,
    pub driver: Driver,
    pub tolerance: f64,
    pub max_iter: usize,
    pub relaxation: f64,
    pub step: f64,
    pub beta0: f64,
    pub constant_window: ConstantLawWindow,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

/// All configuration violations found in one pass.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration ({} violations)", self.0.len())
    }
}

impl std::error::Error for ConfigErrors {}

struct Entry {
    key: String,
    value: String,
    line: usize,
    consumed: bool,
}

struct Entries {
    entries: Vec<Entry>,
    errors: Vec<String>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        let entry = self.entries.iter_mut().find(|e| e.key == key)?;
        entry.consumed = true;
        Some(entry.value.clone())
    }

    fn parse<T: FromStr>(&mut self, key: &str, kind: &str) -> Option<T> {
        let raw = self.take(key)?;
        match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.errors.push(format!("key '{key}': expected {kind}, got '{raw}'"));
                None
            }
        }
    }
}

fn read_entries(path: &Path) -> Result<Entries, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigErrors(vec![format!("cannot read config file {}: {e}", path.display())])
    })?;
    let mut entries: Vec<Entry> = Vec::new();
    let mut errors = Vec::new();
    for (index, raw_line) in text.lines().enumerate() {
        let line = index + 1;
        let body = raw_line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            errors.push(format!("line {line}: expected 'key = value', got '{body}'"));
            continue;
        };
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if entries.iter().any(|e| e.key == key) {
            errors.push(format!("line {line}: duplicate key '{key}'"));
            continue;
        }
        entries.push(Entry { key, value, line, consumed: false });
    }
    Ok(Entries { entries, errors })
}

/// Reads and validates the config file, then applies command-line overrides.
pub fn load_config(
    path: &Path,
    mode_override: Option<&str>,
    seed_override: Option<u64>,
    out_override: Option<PathBuf>,
) -> Result<RunConfig, ConfigErrors> {
    let mut entries = read_entries(path)?;

    let conductivity = match entries.take("conductivity") {
        Some(raw) => match raw.parse::<ConductivityId>() {
            Ok(id) => Some(Conductivity::builtin(id)),
            Err(e) => {
                entries.errors.push(format!("key 'conductivity': {e}"));
                None
            }
        },
        None => {
            entries.errors.push("missing required key 'conductivity'".into());
            None
        }
    };
    let lambda: Option<f64> = required(&mut entries, "lambda", "a number");
    let control_lower: Option<f64> = required(&mut entries, "control_lower", "a number");
    let control_upper: Option<f64> = required(&mut entries, "control_upper", "a number");
    let n_elements: Option<usize> = required(&mut entries, "n_elements", "a positive integer");
    let time_step: Option<f64> = required(&mut entries, "time_step", "a number");
    let horizon: Option<f64> = required(&mut entries, "horizon", "a number");

    let initial_temperature: f64 =
        entries.parse("initial_temperature", "a number").unwrap_or(0.0);
    let mode_raw = entries.take("mode");
    let driver_raw = entries.take("driver");
    let tolerance: f64 = entries.parse("tolerance", "a number").unwrap_or(1e-6);
    let max_iter: usize = entries.parse("max_iter", "a positive integer").unwrap_or(200);
    let relaxation: f64 = entries.parse("relaxation", "a number").unwrap_or(0.5);
    let step: f64 = entries.parse("step", "a number").unwrap_or(0.5);
    let beta0_raw: Option<f64> = entries.parse("beta0", "a number");
    let window_raw = entries.take("constant_window");
    let seed: u64 = entries.parse("seed", "an unsigned integer").unwrap_or(0);
    let out_dir_raw = entries.take("out_dir");

    for entry in entries.entries.iter().filter(|e| !e.consumed) {
        entries
            .errors
            .push(format!("line {}: unknown configuration key '{}'", entry.line, entry.key));
    }
    let mut errors = entries.errors;

    let mode = match mode_override.or(mode_raw.as_deref()) {
        Some(raw) => match parse_mode(raw) {
            Ok(m) => m,
            Err(e) => {
                errors.push(format!("key 'mode': {e}"));
                SchemeMode::ConsistentGalerkin
            }
        },
        None => SchemeMode::ConsistentGalerkin,
    };
    let driver = match driver_raw.as_deref() {
        Some(raw) => match raw.parse::<Driver>() {
            Ok(d) => d,
            Err(e) => {
                errors.push(format!("key 'driver': {e}"));
                Driver::Sweep
            }
        },
        None => Driver::Sweep,
    };
    let constant_window = match window_raw.as_deref() {
        Some("final") | None => ConstantLawWindow::FinalTime,
        Some("averaged") => ConstantLawWindow::TimeAveraged,
        Some(other) => {
            errors.push(format!(
                "key 'constant_window': unknown value '{other}' (expected final or averaged)"
            ));
            ConstantLawWindow::FinalTime
        }
    };

    if tolerance <= 0.0 || !tolerance.is_finite() {
        errors.push("key 'tolerance': must be positive".into());
    }
    if max_iter == 0 {
        errors.push("key 'max_iter': must be at least 1".into());
    }
    if !(relaxation > 0.0 && relaxation <= 1.0) {
        errors.push("key 'relaxation': must lie in (0, 1]".into());
    }
    if step <= 0.0 || !step.is_finite() {
        errors.push("key 'step': must be positive".into());
    }

    let (Some(conductivity), Some(lambda), Some(lower), Some(upper), Some(n), Some(tau), Some(t)) = (
        conductivity,
        lambda,
        control_lower,
        control_upper,
        n_elements,
        time_step,
        horizon,
    ) else {
        return Err(ConfigErrors(errors));
    };

    let beta0 = beta0_raw.unwrap_or(lower);
    if !beta0.is_finite() || beta0 < 0.0 {
        errors.push("key 'beta0': must be a finite nonnegative number".into());
    }

    let params = ModelParams::with_uniform_u0(
        conductivity,
        lambda,
        ControlBox::new(lower, upper),
        initial_temperature,
        n,
        tau,
        t,
    );
    errors.extend(validate_params(&params));
    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }

    Ok(RunConfig {
        params,
        mode,
        driver,
        tolerance,
        max_iter,
        relaxation,
        step,
        beta0,
        constant_window,
        seed: seed_override.unwrap_or(seed),
        out_dir: out_override.or(out_dir_raw.map(PathBuf::from)),
    })
}

fn required<T: FromStr>(entries: &mut Entries, key: &str, kind: &str) -> Option<T> {
    match entries.take(key) {
        Some(raw) => match raw.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                entries.errors.push(format!("key '{key}': expected {kind}, got '{raw}'"));
                None
            }
        },
        None => {
            entries.errors.push(format!("missing required key '{key}'"));
            None
        }
    }
}
