//! Scenario files: TOML with fixed sections, defaults for everything, and
//! strict key checking. Dotted-key overrides are applied to the raw document
//! before it is deserialized.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::battery::BatteryParams;
use crate::cycle::{load_cycle, DriveCycle};
use crate::dtc::DtcConfig;
use crate::error::ConfigError;
use crate::motor::MotorParams;
use crate::mras::MrasConfig;
use crate::vehicle::VehicleParams;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadConfig {
    /// Constant grade angle, rad. Positive is uphill.
    pub slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedControllerKind {
    Pi,
    Mras,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedConfig {
    pub controller: SpeedControllerKind,
    /// Torque reference saturation, N·m.
    pub torque_limit: f64,
}

impl Default for SpeedConfig {
    fn default() -> Self {
        Self {
            controller: SpeedControllerKind::Pi,
            torque_limit: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PiGains {
    /// N·m per rad/s of motor speed error.
    pub kp: f64,
    /// N·m per rad of accumulated speed error.
    pub ki: f64,
}

impl Default for PiGains {
    fn default() -> Self {
        Self { kp: 5.0, ki: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt_electrical: f64,
    pub dt_control: f64,
    /// Simulated time, s. Defaults to the end of the cycle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    /// Reserved; runs are deterministic.
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_electrical: 1e-5,
            dt_control: 5e-5,
            duration: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpeedUnit {
    #[default]
    Mps,
    Kph,
}

/// Where the speed reference comes from. Exactly one source may be given;
/// with none, the bundled ECE-15 cycle is used.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CycleConfig {
    /// CSV file, relative to the scenario file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Name of a bundled cycle (`ece15`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    /// Inline `[time_s, speed]` knots.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<[f64; 2]>>,
    /// Unit of the inline speeds.
    #[serde(default)]
    pub speed_unit: SpeedUnit,
}

/// Everything a scenario file can set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub motor: MotorParams,
    pub vehicle: VehicleParams,
    pub road: RoadConfig,
    pub battery: BatteryParams,
    pub dtc: DtcConfig,
    pub speed: SpeedConfig,
    pub pi: PiGains,
    pub mras: MrasConfig,
    pub sim: SimConfig,
    pub cycle: CycleConfig,
}

/// A validated configuration with its drive cycle loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub cycle: DriveCycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float,
    Int,
    Bool,
    Str,
    Array,
}

/// Keys that may be absent from a fully defaulted document.
const OPTIONAL_KEYS: &[(&str, Kind)] = &[
    ("mras.gamma", Kind::Float),
    ("sim.duration", Kind::Float),
    ("cycle.path", Kind::Str),
    ("cycle.builtin", Kind::Str),
    ("cycle.points", Kind::Array),
];

fn kind_of(v: &Value) -> Kind {
    match v {
        Value::Float(_) => Kind::Float,
        Value::Integer(_) => Kind::Int,
        Value::Boolean(_) => Kind::Bool,
        Value::String(_) => Kind::Str,
        Value::Array(_) => Kind::Array,
        // tables are walked, never leaves; datetimes do not occur in the schema
        _ => Kind::Str,
    }
}

/// Every settable dotted key with its expected TOML kind.
fn schema() -> Vec<(String, Kind)> {
    let doc = Value::try_from(ScenarioConfig::default()).expect("defaults serialize");
    let mut out = Vec::new();
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, Kind)>) {
        match v {
            Value::Table(t) => {
                for (k, child) in t {
                    let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                    walk(&key, child, out);
                }
            }
            leaf => out.push((prefix.to_owned(), kind_of(leaf))),
        }
    }
    walk("", &doc, &mut out);
    out.extend(OPTIONAL_KEYS.iter().map(|(k, kind)| (k.to_string(), *kind)));
    out
}

/// All keys accepted in a scenario file or by `--set`, sorted.
pub fn schema_keys() -> Vec<String> {
    let mut keys: Vec<String> = schema().into_iter().map(|(k, _)| k).collect();
    keys.sort();
    keys
}

fn lookup_kind(key: &str) -> Option<Kind> {
    schema().into_iter().find(|(k, _)| k == key).map(|(_, kind)| kind)
}

fn is_section(key: &str) -> bool {
    let prefix = format!("{key}.");
    schema().iter().any(|(k, _)| k.starts_with(&prefix))
}

/// Rejects keys the schema does not know, naming the full dotted path.
fn check_keys(prefix: &str, table: &Table) -> Result<(), ConfigError> {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(inner) if is_section(&key) => check_keys(&key, inner)?,
            _ if lookup_kind(&key).is_some() => {}
            _ => return Err(ConfigError::UnknownKey(key)),
        }
    }
    Ok(())
}

/// Parses the right-hand side of an override. Anything that is not a TOML
/// literal is taken as a bare string, so `dtc.mode=modified` works.
fn parse_override_value(raw: &str) -> Value {
    let raw = raw.trim();
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_owned()))
}

/// Coerces `value` to the schema kind of `key`, if that is lossless.
fn coerce(key: &str, expected: Kind, value: Value) -> Result<Value, ConfigError> {
    let got = kind_of(&value);
    match (expected, value) {
        (e, v) if e == got => Ok(v),
        (Kind::Float, Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (_, v) => Err(ConfigError::TypeMismatch {
            key: key.to_owned(),
            reason: format!("expected {expected:?}, got {:?} `{v}`", got).to_lowercase(),
        }),
    }
}

/// Applies `key=value` overrides to a raw scenario document.
pub fn apply_overrides(doc: &mut Table, overrides: &[String]) -> Result<(), ConfigError> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| ConfigError::MalformedOverride(item.clone()))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::MalformedOverride(item.clone()));
        }
        let expected = lookup_kind(key).ok_or_else(|| ConfigError::UnknownKey(key.to_owned()))?;
        let value = coerce(key, expected, parse_override_value(raw))?;
        let parts: Vec<&str> = key.split('.').collect();
        let mut table = &mut *doc;
        for part in &parts[..parts.len() - 1] {
            let entry = table
                .entry(part.to_string())
                .or_insert_with(|| Value::Table(Table::new()));
            table = match entry {
                Value::Table(t) => t,
                _ => {
                    return Err(ConfigError::TypeMismatch {
                        key: key.to_owned(),
                        reason: format!("`{part}` is not a section"),
                    })
                }
            };
        }
        table.insert(parts[parts.len() - 1].to_owned(), value);
    }
    Ok(())
}

/// Integer literals are accepted wherever a float is expected.
fn coerce_document(prefix: &str, table: &mut Table) -> Result<(), ConfigError> {
    for (k, v) in table.iter_mut() {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        if let Value::Table(inner) = v {
            if is_section(&key) {
                coerce_document(&key, inner)?;
                continue;
            }
        }
        if let Some(kind) = lookup_kind(&key) {
            let taken = std::mem::replace(v, Value::Boolean(false));
            *v = coerce(&key, kind, taken)?;
        }
    }
    Ok(())
}

impl ScenarioConfig {
    /// Parses a scenario document and applies overrides to it.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc: Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        check_keys("", &doc)?;
        apply_overrides(&mut doc, overrides)?;
        coerce_document("", &mut doc)?;
        let cfg: ScenarioConfig = Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.message().to_owned()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.motor.validate()?;
        self.vehicle.validate()?;
        self.battery.validate()?;
        self.dtc.validate()?;
        self.mras.validate()?;
        if !(self.road.slope.is_finite() && self.road.slope.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(ConfigError::invalid("road.slope", "must satisfy |slope| < pi/2"));
        }
        if !(self.speed.torque_limit.is_finite() && self.speed.torque_limit > 0.0) {
            return Err(ConfigError::invalid("speed.torque_limit", "must be > 0"));
        }
        if !(self.pi.kp.is_finite() && self.pi.kp >= 0.0 && self.pi.ki.is_finite() && self.pi.ki >= 0.0) {
            return Err(ConfigError::invalid("pi", "gains must be finite and >= 0"));
        }
        let s = &self.sim;
        if !(s.dt_electrical.is_finite() && s.dt_electrical > 0.0) {
            return Err(ConfigError::invalid("sim.dt_electrical", "must be > 0"));
        }
        if !(s.dt_control.is_finite() && s.dt_control >= s.dt_electrical) {
            return Err(ConfigError::invalid("sim.dt_control", "must be >= dt_electrical"));
        }
        let ratio = s.dt_control / s.dt_electrical;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio {
            return Err(ConfigError::invalid(
                "sim.dt_control",
                "must be an integer multiple of dt_electrical",
            ));
        }
        if let Some(d) = s.duration {
            if !(d.is_finite() && d >= 0.0) {
                return Err(ConfigError::invalid("sim.duration", "must be >= 0"));
            }
        }
        let sources = [self.cycle.path.is_some(), self.cycle.builtin.is_some(), self.cycle.points.is_some()];
        if sources.iter().filter(|s| **s).count() > 1 {
            return Err(ConfigError::invalid("cycle", "give at most one of path, builtin, points"));
        }
        Ok(())
    }

    /// Control sub-steps per control period.
    pub fn substeps(&self) -> usize {
        (self.sim.dt_control / self.sim.dt_electrical).round() as usize
    }

    /// Loads the drive cycle. Relative paths resolve against `base_dir`.
    pub fn load_cycle(&self, base_dir: Option<&Path>) -> Result<DriveCycle, ConfigError> {
        let c = &self.cycle;
        if let Some(path) = &c.path {
            let full = match base_dir {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            return load_cycle(&full);
        }
        if let Some(points) = &c.points {
            let scale = match c.speed_unit {
                SpeedUnit::Mps => 1.0,
                SpeedUnit::Kph => 1.0 / 3.6,
            };
            let samples = points.iter().map(|[t, v]| (*t, v * scale)).collect();
            let name = if self.name.is_empty() { "inline" } else { self.name.as_str() };
            return Ok(DriveCycle::new(name, samples)?);
        }
        match c.builtin.as_deref() {
            None | Some("ece15") => Ok(DriveCycle::ece15()),
            Some(other) => Err(ConfigError::invalid("cycle.builtin", format!("unknown cycle `{other}`"))),
        }
    }
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        config.validate()?;
        let cycle = config.load_cycle(base_dir)?;
        Ok(Self { config, cycle })
    }

    /// Reads, overrides, validates and loads a scenario file.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut config = ScenarioConfig::from_toml(&text, overrides)?;
        if config.name.is_empty() {
            config.name = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("scenario")
                .to_owned();
        }
        Self::from_config(config, path.parent())
    }

    /// Simulated time, s.
    pub fn duration(&self) -> f64 {
        self.config.sim.duration.unwrap_or_else(|| self.cycle.end())
    }
}
