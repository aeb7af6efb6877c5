//! Scenario configuration: TOML (or JSON) file, dotted-key overrides, strict
//! schema with unknown keys rejected.

use crate::error::{Error, Result};
use crate::initial_data::{Lattice, Profile, ScalingParams};
use crate::quad::QuadOpts;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Propagate,
    Resonances,
    CrOp,
    WkOp,
    Expansion,
    Mc,
    OracleCompare,
    Decay,
    Validate,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Propagate => "propagate",
            Experiment::Resonances => "resonances",
            Experiment::CrOp => "cr-op",
            Experiment::WkOp => "wk-op",
            Experiment::Expansion => "expansion",
            Experiment::Mc => "mc",
            Experiment::OracleCompare => "oracle-compare",
            Experiment::Decay => "decay",
            Experiment::Validate => "validate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    /// Radius of the frequency window, in continuum units.
    pub radius: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { abs: 1e-8, rel: 1e-6 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSpec {
    pub samples: u64,
    pub include_v2: bool,
    pub antisymmetry: bool,
}

impl Default for McSpec {
    fn default() -> Self {
        Self { samples: 10_000, include_v2: true, antisymmetry: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpansionSpec {
    /// Also evaluate the exact (finite h, sigma) iterates.
    pub exact: bool,
    pub second_order: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSpec {
    pub n: usize,
    /// Box side; `16 / h` when absent.
    pub side: Option<f64>,
    pub dt: f64,
    /// Sign of the cubic term.
    pub lambda: f64,
    pub eps_ladder: Vec<f64>,
    pub checkpoint: bool,
    pub slope_range: Option<[f64; 2]>,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self { n: 512, side: None, dt: 1e-3, lambda: 1.0, eps_ladder: vec![0.4, 0.2, 0.1], checkpoint: false, slope_range: None }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuumSpec {
    /// Level-set profile nodes written by `cr-op` (0 disables).
    pub xi_nodes: usize,
    pub xi_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecaySpec {
    /// Quadratic coefficient of the three frequency-space packets.
    pub width: f64,
    /// Real linear coefficient of the packets.
    pub shift: [f64; 2],
    pub k: [f64; 2],
    pub slope_range: Option<[f64; 2]>,
}

impl Default for DecaySpec {
    fn default() -> Self {
        Self { width: 1.0, shift: [0.0, 0.0], k: [0.0, 0.0], slope_range: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub experiment: Experiment,
    pub params: ScalingParams,
    pub lattice: LatticeSpec,
    pub profile: Profile,
    /// Lattice sites `K` (integer coordinates).
    #[serde(default = "origin")]
    pub sites: Vec<[i64; 2]>,
    #[serde(default)]
    pub times: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Skip regime and time-window guards.
    #[serde(default)]
    pub guard_override: bool,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub mc: McSpec,
    #[serde(default)]
    pub expansion: ExpansionSpec,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default)]
    pub continuum: ContinuumSpec,
    #[serde(default)]
    pub decay: DecaySpec,
}

fn origin() -> Vec<[i64; 2]> {
    vec![[0, 0]]
}

impl ScenarioConfig {
    pub fn lattice(&self) -> Lattice {
        Lattice::new(self.params.l, self.lattice.radius)
    }

    pub fn quad(&self) -> QuadOpts {
        QuadOpts::new(self.tolerances.abs, self.tolerances.rel)
    }

    /// Canonical JSON text (field order fixed by the struct).
    pub fn canonical_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn cfg_err(path: &str, msg: impl ToString) -> Error {
    Error::Config { path: path.to_string(), msg: msg.to_string() }
}

/// Raw document from TOML or JSON text. A run manifest is accepted too: its
/// `config` member is used.
pub fn parse_document(text: &str, json: bool) -> Result<Value> {
    let v: Value = if json {
        serde_json::from_str(text).map_err(|e| cfg_err("<root>", e))?
    } else {
        toml::from_str(text).map_err(|e| cfg_err("<root>", e.message()))?
    };
    match v {
        Value::Object(mut m) if m.contains_key("manifest_version") => {
            m.remove("config").ok_or_else(|| cfg_err("config", "manifest without config"))
        }
        other => Ok(other),
    }
}

/// Set `a.b.c = val`, where `val` is read as a TOML literal (bare strings
/// are kept as strings).
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| cfg_err(assignment, "override must be KEY=VAL"))?;
    let key = key.trim();
    let val = match toml::from_str::<toml::Table>(&format!("v = {}", raw.trim())) {
        Ok(mut t) => serde_json::to_value(t.remove("v").expect("key v")).map_err(|e| cfg_err(key, e))?,
        Err(_) => Value::String(raw.trim().to_string()),
    };
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, p) in parts.iter().enumerate() {
        let obj = cur.as_object_mut().ok_or_else(|| cfg_err(&parts[..i].join("."), "not a table"))?;
        if i + 1 == parts.len() {
            obj.insert(p.to_string(), val);
            return Ok(());
        }
        cur = obj.entry(p.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(cfg_err(key, "empty key"))
}

pub fn from_value(doc: Value) -> Result<ScenarioConfig> {
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(doc).map_err(|e| {
        let path = e.path().to_string();
        cfg_err(&path, e.into_inner())
    })?;
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &ScenarioConfig) -> Result<()> {
    if !(cfg.lattice.radius > 0.0) {
        return Err(cfg_err("lattice.radius", "must be positive"));
    }
    if !(cfg.params.l > 0.0) {
        return Err(cfg_err("params.l", "must be positive"));
    }
    if cfg.sites.is_empty() {
        return Err(cfg_err("sites", "at least one site required"));
    }
    if cfg.times.iter().any(|t| !t.is_finite()) {
        return Err(cfg_err("times", "must be finite"));
    }
    Ok(())
}

pub fn load(path: &Path, overrides: &[String]) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| cfg_err(&path.display().to_string(), e))?;
    let json = path.extension().is_some_and(|e| e == "json");
    let mut doc = parse_document(&text, json)?;
    for o in overrides {
        apply_override(&mut doc, o)?;
    }
    from_value(doc)
}
