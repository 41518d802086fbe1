//! Parameter files and flag overlays.
//!
//! A config file is TOML (or JSON when the extension is `.json`) with exactly one of
//! `[dimensionless]` / `[physical]`, an optional `[lab]` table and optional per-subcommand
//! tables. Inline flags override file values key by key.

use std::f64::consts::PI;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use mim_dicke::{DimensionlessParams, PhysicalParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::Invalid;

const TABLES: &[&str] = &[
    "dimensionless",
    "physical",
    "lab",
    "potential",
    "sweep",
    "spectrum",
    "groundstate",
    "wigner",
    "fock",
    "dynamics",
];

#[derive(Debug, Clone, Default)]
pub struct ConfigFile {
    tables: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let value: Value = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?
        };
        let Value::Object(tables) = value else {
            bail!(Invalid("config root must be a table".into()));
        };
        for (k, v) in &tables {
            if !TABLES.contains(&k.as_str()) {
                bail!(Invalid(format!("unknown config table `{k}`")));
            }
            if !v.is_object() {
                bail!(Invalid(format!("`{k}` must be a table")));
            }
        }
        let has_dimless = tables.contains_key("dimensionless");
        let has_phys = tables.contains_key("physical");
        if has_dimless == has_phys {
            bail!(Invalid("config must contain exactly one of [dimensionless] or [physical]".into()));
        }
        Ok(ConfigFile { tables })
    }

    pub fn table(&self, name: &str) -> Map<String, Value> {
        match self.tables.get(name) {
            Some(Value::Object(m)) => m.clone(),
            _ => Map::new(),
        }
    }

    pub fn has(&self, name: &str) -> bool {
        self.tables.contains_key(name)
    }
}

/// Serializes a flag struct and overlays its non-null fields onto `base`.
pub fn overlay<A: Serialize>(mut base: Map<String, Value>, flags: &A) -> Result<Map<String, Value>> {
    if let Value::Object(m) = serde_json::to_value(flags)? {
        for (k, v) in m {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    Ok(base)
}

pub fn resolve<T: DeserializeOwned, A: Serialize>(file: &ConfigFile, table: &str, flags: &A) -> Result<T> {
    let merged = overlay(file.table(table), flags)?;
    serde_json::from_value(Value::Object(merged)).map_err(|e| anyhow!(Invalid(format!("[{table}]: {e}"))))
}

/// Laboratory rates (rad/s) and the operating point relative to threshold.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabSettings {
    pub g: f64,
    pub kappa: f64,
    pub p_over_pc: f64,
}

impl Default for LabSettings {
    fn default() -> Self {
        LabSettings {
            g: 2.0 * PI * 1e7,
            kappa: 2.0 * PI * 1e5,
            p_over_pc: 1.1,
        }
    }
}

impl LabSettings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("g", self.g), ("kappa", self.kappa), ("p_over_pc", self.p_over_pc)] {
            if !(v.is_finite() && v > 0.0) {
                bail!(Invalid(format!("[lab] {name} = {v} must be finite and > 0")));
            }
        }
        Ok(())
    }
}

/// Inline overrides for the model parameters.
#[derive(Debug, Clone, Default)]
pub struct ParamFlags {
    pub g: Option<f64>,
    pub kappa: Option<f64>,
    pub eta: Option<f64>,
    pub eta_a: Option<f64>,
    pub eta_b: Option<f64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub volume: Option<f64>,
    pub delta: Option<f64>,
    pub gamma: Option<f64>,
    pub power: Option<f64>,
}

impl ParamFlags {
    fn dimensionless_overlay(&self) -> Map<String, Value> {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<f64>| {
            if let Some(v) = v {
                m.insert(k.to_string(), Value::from(v));
            }
        };
        put("g", self.g);
        put("kappa", self.kappa);
        put("eta_a", self.eta);
        put("eta_b", self.eta.map(|e| -e));
        put("eta_a", self.eta_a);
        put("eta_b", self.eta_b);
        put("lambda", self.lambda);
        put("V", self.volume);
        put("delta", self.delta);
        put("gamma", self.gamma);
        m
    }
}

/// Where the model parameters came from.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum ParamSource {
    Dimensionless,
    Physical { physical: PhysicalParams },
}

#[derive(Debug, Clone)]
pub struct Resolved {
    pub params: DimensionlessParams,
    pub source: ParamSource,
    pub lab: LabSettings,
}

fn default_dimensionless() -> Map<String, Value> {
    let v = serde_json::to_value(DimensionlessParams::balanced(1.0, 1.0, 1.0, 1.0, 100.0)).expect("serializable");
    match v {
        Value::Object(m) => m,
        _ => unreachable!(),
    }
}

pub fn resolve_params(file: &ConfigFile, flags: &ParamFlags, lab_flags: &LabFlags) -> Result<Resolved> {
    let lab: LabSettings = resolve(file, "lab", lab_flags)?;
    lab.validate()?;
    let over = flags.dimensionless_overlay();
    let (mut params, source) = if file.has("physical") {
        if !over.is_empty() || flags.mu.is_some() {
            bail!(Invalid("dimensionless overrides cannot be combined with a [physical] parameter source".into()));
        }
        let mut table = file.table("physical");
        if let Some(p) = flags.power {
            table.insert("P".into(), Value::from(p));
        }
        let pp: PhysicalParams =
            serde_json::from_value(Value::Object(table)).map_err(|e| Invalid(format!("[physical]: {e}")))?;
        let params = pp.to_dimensionless(lab.g, lab.kappa)?;
        (params, ParamSource::Physical { physical: pp })
    } else {
        if flags.power.is_some() {
            bail!(Invalid("--power requires a [physical] parameter source".into()));
        }
        let base = if file.has("dimensionless") {
            file.table("dimensionless")
        } else {
            default_dimensionless()
        };
        let mut merged = base;
        merged.extend(over);
        let params: DimensionlessParams =
            serde_json::from_value(Value::Object(merged)).map_err(|e| Invalid(format!("[dimensionless]: {e}")))?;
        (params, ParamSource::Dimensionless)
    };
    if let Some(mu) = flags.mu {
        params = params.with_mu(mu)?;
    }
    params.validate()?;
    Ok(Resolved { params, source, lab })
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct LabFlags {
    pub g: Option<f64>,
    pub kappa: Option<f64>,
    pub p_over_pc: Option<f64>,
}
