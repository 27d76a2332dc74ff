//! Scenario files: JSON with explicit units on every physical quantity.
//!
//! Quantities are strings such as `"11.8 GHz"`, `"386 fF"` or `"85 nA"`.
//! Every key is optional and falls back to the reference design; unknown keys
//! are rejected. Errors carry the JSON pointer of the offending value.

use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::device::DeviceConfig;
use crate::netgraph::DiplexerModel;
use crate::snail::SnailParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("schema error at {pointer}: {message}")]
    SchemaError { pointer: String, message: String },
    #[error("unit error at {pointer}: {message}")]
    UnitError { pointer: String, message: String },
}

impl ConfigError {
    pub fn pointer(&self) -> Option<&str> {
        match self {
            ConfigError::Json(_) => None,
            ConfigError::SchemaError { pointer, .. } | ConfigError::UnitError { pointer, .. } => Some(pointer),
        }
    }
}

fn schema(pointer: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::SchemaError {
        pointer: pointer.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dim {
    Hertz,
    Farad,
    Henry,
    Ampere,
    Radian,
    Ohm,
}

impl Dim {
    fn symbol(self) -> &'static str {
        match self {
            Dim::Hertz => "Hz",
            Dim::Farad => "F",
            Dim::Henry => "H",
            Dim::Ampere => "A",
            Dim::Radian => "rad",
            Dim::Ohm => "Ohm",
        }
    }
}

fn prefix(p: &str) -> Option<f64> {
    Some(match p {
        "" => 1.0,
        "f" => 1e-15,
        "p" => 1e-12,
        "n" => 1e-9,
        "u" | "µ" | "μ" => 1e-6,
        "m" => 1e-3,
        "k" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        "T" => 1e12,
        _ => return None,
    })
}

/// Parses `"<number> <prefix><unit>"` for the given dimension.
pub fn parse_quantity(text: &str, dim: Dim) -> Result<f64, String> {
    let t = text.trim();
    let split = t
        .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | '+' | '-' | 'e' | 'E')))
        .unwrap_or(t.len());
    let (num, unit) = (t[..split].trim(), t[split..].trim());
    let value: f64 = num.parse().map_err(|_| format!("`{text}` does not start with a number"))?;
    if unit.is_empty() {
        return Err(format!("`{text}` has no unit; expected {}", dim.symbol()));
    }
    let scale = match dim {
        Dim::Radian if unit == "deg" => Some(std::f64::consts::PI / 180.0),
        Dim::Ohm if unit == "Ω" || unit == "ohm" => Some(1.0),
        _ => unit.strip_suffix(dim.symbol()).and_then(prefix),
    };
    let scale = scale.ok_or_else(|| format!("unit `{unit}` is not a unit of {}", dim.symbol()))?;
    let v = value * scale;
    if !v.is_finite() {
        return Err(format!("`{text}` is not finite"));
    }
    Ok(v)
}

fn format_quantity(v: f64, dim: Dim) -> Value {
    Value::String(format!("{v:e} {}", dim.symbol()))
}

/// Keys of one JSON object, tracking which were consumed.
struct Obj<'a> {
    map: Option<&'a Map<String, Value>>,
    path: String,
    known: Vec<&'static str>,
}

fn escape(key: &str) -> String {
    key.replace('~', "~0").replace('/', "~1")
}

impl<'a> Obj<'a> {
    fn new(v: Option<&'a Value>, path: &str) -> Result<Self, ConfigError> {
        let map = match v {
            None | Some(Value::Null) => None,
            Some(Value::Object(m)) => Some(m),
            Some(_) => return Err(schema(path_or_root(path), "expected an object")),
        };
        Ok(Self {
            map,
            path: path.to_string(),
            known: vec![],
        })
    }

    fn at(&self, key: &str) -> String {
        format!("{}/{}", self.path, escape(key))
    }

    fn raw(&mut self, key: &'static str) -> Option<&'a Value> {
        self.known.push(key);
        self.map.and_then(|m| m.get(key)).filter(|v| !v.is_null())
    }

    fn child(&mut self, key: &'static str) -> Result<Obj<'a>, ConfigError> {
        let p = self.at(key);
        Obj::new(self.raw(key), &p)
    }

    fn number(&mut self, key: &'static str, default: f64) -> Result<f64, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(Value::Number(n)) => Ok(n.as_f64().unwrap_or(f64::NAN)),
            Some(Value::String(_)) => Err(ConfigError::UnitError {
                pointer: self.at(key),
                message: "dimensionless value given with a unit".into(),
            }),
            Some(_) => Err(schema(&self.at(key), "expected a number")),
        }
    }

    fn integer(&mut self, key: &'static str, default: u64) -> Result<u64, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v
                .as_u64()
                .ok_or_else(|| schema(&self.at(key), "expected a non-negative integer")),
        }
    }

    fn boolean(&mut self, key: &'static str, default: bool) -> Result<bool, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.as_bool().ok_or_else(|| schema(&self.at(key), "expected true or false")),
        }
    }

    fn string(&mut self, key: &'static str, default: &str) -> Result<String, ConfigError> {
        match self.raw(key) {
            None => Ok(default.to_string()),
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(schema(&self.at(key), "expected a string")),
        }
    }

    fn quantity_opt(&mut self, key: &'static str, dim: Dim) -> Result<Option<f64>, ConfigError> {
        let p = self.at(key);
        self.raw(key).map(|v| quantity_value(v, dim, &p)).transpose()
    }

    fn quantity(&mut self, key: &'static str, dim: Dim, default: f64) -> Result<f64, ConfigError> {
        Ok(self.quantity_opt(key, dim)?.unwrap_or(default))
    }

    fn present(&self, key: &str) -> bool {
        self.map.is_some_and(|m| m.get(key).is_some_and(|v| !v.is_null()))
    }

    fn finish(self) -> Result<(), ConfigError> {
        if let Some(m) = self.map {
            // BTreeMap order keeps the first reported key stable
            if let Some(k) = m.keys().find(|k| !self.known.contains(&k.as_str())) {
                return Err(schema(&self.at(k), "unknown key"));
            }
        }
        Ok(())
    }
}

fn path_or_root(p: &str) -> &str {
    if p.is_empty() {
        "/"
    } else {
        p
    }
}

fn quantity_value(v: &Value, dim: Dim, pointer: &str) -> Result<f64, ConfigError> {
    let unit = |message: String| ConfigError::UnitError {
        pointer: pointer.to_string(),
        message,
    };
    match v {
        Value::String(s) => parse_quantity(s, dim).map_err(unit),
        Value::Number(_) => Err(unit(format!("missing unit; expected a string such as \"1 {}\"", dim.symbol()))),
        _ => Err(schema(pointer, "expected a quantity string")),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PumpSpec {
    /// Physical pump current at each amplifier.
    Amplitude(f64),
    /// Mid-band gain the pump is bisected to.
    GainTarget(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmeSection {
    pub g0: Option<f64>,
    pub pump_depletion: bool,
    pub include_upconversion: bool,
    pub steps_per_cell: usize,
    /// Calibration pump current, amperes.
    pub calibration_pump: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TwpaOverride {
    pub index: usize,
    pub g0_scale: f64,
    pub l_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopologySection {
    pub name: String,
    pub dphi: f64,
    pub diplexer_transition: f64,
    pub diplexer_model: DiplexerModel,
    pub phase_err: f64,
    pub amp_err_db: f64,
    pub pump_phases: Option<[f64; 4]>,
    pub overrides: Vec<TwpaOverride>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub f_lo: f64,
    pub f_hi: f64,
    pub points: usize,
}

impl Sweep {
    pub fn frequencies(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.f_lo];
        }
        let step = (self.f_hi - self.f_lo) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.f_lo + step * i as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub device: DeviceConfig,
    pub cme: CmeSection,
    pub topology: TopologySection,
    pub pump: PumpSpec,
    pub sweep: Sweep,
    pub outputs: Vec<String>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        parse_config("{}").expect("baseline parses")
    }
}

pub const TOPOLOGIES: [&str; 7] = [
    "single",
    "balanced",
    "diplexed",
    "diplexed_balanced",
    "wif_single",
    "wif_double",
    "wif_double_cascaded",
];

fn device_section(o: &mut Obj) -> Result<DeviceConfig, ConfigError> {
    let base = DeviceConfig::default();
    let n_array = o.integer("n_array", base.n_array as u64)?;
    let alpha = o.number("alpha", base.alpha)?;
    let i_crit = o.quantity("i_crit", Dim::Ampere, base.i_crit)?;
    let phi_ext = o.quantity_opt("phi_ext", Dim::Radian)?;
    let snail = SnailParams {
        n_array: u32::try_from(n_array).map_err(|_| schema(&o.at("n_array"), "too large"))?,
        alpha,
        i_crit,
        phi_ext: phi_ext.unwrap_or(0.0),
    };
    if let Err(e) = snail.validate() {
        let key = if n_array < 1 {
            "n_array"
        } else if !(alpha > 0.0 && alpha <= 1.0) {
            "alpha"
        } else if !(i_crit > 0.0) {
            "i_crit"
        } else {
            "phi_ext"
        };
        return Err(schema(&o.at(key), e.to_string()));
    }
    let positive = |o: &Obj, key: &str, v: f64| {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(schema(&o.at(key), "must be positive"))
        }
    };
    let c_total = o.quantity("c_total", Dim::Farad, base.c_total)?;
    positive(o, "c_total", c_total)?;
    let f_res = o.quantity("f_res", Dim::Hertz, base.f_res)?;
    positive(o, "f_res", f_res)?;
    let n_cells = o.integer("n_cells", base.n_cells as u64)? as usize;
    if n_cells < 2 {
        return Err(schema(&o.at("n_cells"), "need at least 2 cells"));
    }
    let z0 = o.quantity("z0", Dim::Ohm, base.z0)?;
    positive(o, "z0", z0)?;
    // an explicit null keeps the SNAIL inductance as derived
    let explicit_null = o.map.and_then(|m| m.get("target_cutoff")).is_some_and(Value::is_null);
    let target_cutoff = match o.quantity_opt("target_cutoff", Dim::Hertz)? {
        Some(fc) => Some(fc),
        None if explicit_null => None,
        None => base.target_cutoff,
    };
    if let Some(fc) = target_cutoff {
        positive(o, "target_cutoff", fc)?;
    }
    let l_override = o.quantity_opt("l_override", Dim::Henry)?;
    if let Some(l) = l_override {
        positive(o, "l_override", l)?;
    }
    let taper_cells = o.integer("taper_cells", base.taper_cells as u64)? as usize;
    let taper_max_iter = o.integer("taper_max_iter", base.taper_max_iter as u64)? as usize;
    Ok(DeviceConfig {
        n_array: snail.n_array,
        alpha,
        i_crit,
        phi_ext,
        c_total,
        f_res,
        n_cells,
        z0,
        target_cutoff,
        l_override,
        taper_cells,
        taper_max_iter,
        ..base
    })
}

fn cme_section(o: &mut Obj, dev: &mut DeviceConfig) -> Result<CmeSection, ConfigError> {
    dev.f_p = o.quantity("f_p", Dim::Hertz, dev.f_p)?;
    if !(dev.f_p > 0.0) {
        return Err(schema(&o.at("f_p"), "must be positive"));
    }
    let g0 = match o.raw("g0") {
        None => None,
        Some(_) => {
            let v = o.number("g0", 0.0)?;
            if !(v >= 0.0) {
                return Err(schema(&o.at("g0"), "must be >= 0"));
            }
            Some(v)
        }
    };
    let pump_depletion = o.boolean("pump_depletion", false)?;
    let include_upconversion = o.boolean("include_upconversion", false)?;
    let steps_per_cell = o.integer("steps_per_cell", 8)? as usize;
    if steps_per_cell < 1 {
        return Err(schema(&o.at("steps_per_cell"), "must be >= 1"));
    }
    let mut cal = o.child("calibration")?;
    let pump = cal.quantity("pump", Dim::Ampere, dev.cal_pump * dev.i_crit)?;
    if !(pump > 0.0) {
        return Err(schema(&cal.at("pump"), "must be positive"));
    }
    dev.cal_pump = pump / dev.i_crit;
    dev.cal_gain_db = cal.number("gain_db", dev.cal_gain_db)?;
    dev.cal_freq = cal.quantity("freq", Dim::Hertz, dev.cal_freq)?;
    if !(dev.cal_freq > 0.0 && dev.cal_freq < dev.f_p) {
        return Err(schema(&cal.at("freq"), "must lie between 0 and the pump frequency"));
    }
    cal.finish()?;
    Ok(CmeSection {
        g0,
        pump_depletion,
        include_upconversion,
        steps_per_cell,
        calibration_pump: pump,
    })
}

fn topology_section(o: &mut Obj) -> Result<TopologySection, ConfigError> {
    let name = o.string("name", "single")?;
    if !TOPOLOGIES.contains(&name.as_str()) {
        return Err(schema(&o.at("name"), format!("unknown topology `{name}`")));
    }
    let dphi = o.quantity("dphi", Dim::Radian, 0.0)?;
    let mut d = o.child("diplexer")?;
    let diplexer_transition = d.quantity("transition", Dim::Hertz, 9e9)?;
    if !(diplexer_transition > 0.0) {
        return Err(schema(&d.at("transition"), "must be positive"));
    }
    let model = d.string("model", "brickwall")?;
    let order = d.integer("order", 5)?;
    let diplexer_model = match model.as_str() {
        "brickwall" => DiplexerModel::Brickwall,
        "butterworth" if (1..=64).contains(&order) => DiplexerModel::Butterworth(order as u32),
        "butterworth" => return Err(schema(&d.at("order"), "order must lie in 1..=64")),
        _ => return Err(schema(&d.at("model"), "expected `brickwall` or `butterworth`")),
    };
    d.finish()?;
    let mut c = o.child("coupler")?;
    let phase_err = c.quantity("phase_err", Dim::Radian, 0.0)?;
    let amp_err_db = c.number("amp_err_db", 0.0)?;
    c.finish()?;
    let pump_phases = match o.raw("pump_phases") {
        None => None,
        Some(Value::Array(a)) if a.len() == 4 => {
            let mut out = [0.0; 4];
            for (i, v) in a.iter().enumerate() {
                out[i] = quantity_value(v, Dim::Radian, &format!("{}/{i}", o.at("pump_phases")))?;
            }
            Some(out)
        }
        Some(_) => return Err(schema(&o.at("pump_phases"), "expected four phases")),
    };
    let overrides = match o.raw("overrides") {
        None => vec![],
        Some(Value::Array(items)) => {
            let base = o.at("overrides");
            items
                .iter()
                .enumerate()
                .map(|(i, v)| {
                    let mut e = Obj::new(Some(v), &format!("{base}/{i}"))?;
                    let index = e.integer("index", 0)? as usize;
                    let g0_scale = e.number("g0_scale", 1.0)?;
                    let l_scale = e.number("l_scale", 1.0)?;
                    if !(g0_scale >= 0.0) {
                        return Err(schema(&e.at("g0_scale"), "must be >= 0"));
                    }
                    if !(l_scale > 0.0) {
                        return Err(schema(&e.at("l_scale"), "must be positive"));
                    }
                    e.finish()?;
                    Ok(TwpaOverride {
                        index,
                        g0_scale,
                        l_scale,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?
        }
        Some(_) => return Err(schema(&o.at("overrides"), "expected an array")),
    };
    Ok(TopologySection {
        name,
        dphi,
        diplexer_transition,
        diplexer_model,
        phase_err,
        amp_err_db,
        pump_phases,
        overrides,
    })
}

fn pump_section(o: &mut Obj, cal_pump: f64) -> Result<PumpSpec, ConfigError> {
    let has_amp = o.present("amplitude");
    let has_target = o.present("gain_target_db");
    if has_amp && has_target {
        return Err(schema(&o.at("gain_target_db"), "give either amplitude or gain_target_db"));
    }
    if has_target {
        let t = o.number("gain_target_db", 0.0)?;
        o.raw("amplitude");
        if !t.is_finite() {
            return Err(schema(&o.at("gain_target_db"), "must be finite"));
        }
        return Ok(PumpSpec::GainTarget(t));
    }
    o.raw("gain_target_db");
    let a = o.quantity("amplitude", Dim::Ampere, cal_pump)?;
    if !(a >= 0.0) {
        return Err(schema(&o.at("amplitude"), "must be >= 0"));
    }
    Ok(PumpSpec::Amplitude(a))
}

fn sweep_section(o: &mut Obj) -> Result<Sweep, ConfigError> {
    let f_lo = o.quantity("f_lo", Dim::Hertz, 4e9)?;
    let f_hi = o.quantity("f_hi", Dim::Hertz, 8e9)?;
    let points = o.integer("points", 201)? as usize;
    if !(f_lo > 0.0) {
        return Err(schema(&o.at("f_lo"), "must be positive"));
    }
    if !(f_hi >= f_lo) {
        return Err(schema(&o.at("f_hi"), "must not be below f_lo"));
    }
    if points < 1 || points > 1_000_000 {
        return Err(schema(&o.at("points"), "must lie in 1..=1000000"));
    }
    Ok(Sweep { f_lo, f_hi, points })
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ConfigError::Json(e.to_string()))?;
    from_value(&v)
}

pub fn from_value(v: &Value) -> Result<ScenarioConfig, ConfigError> {
    let mut root = Obj::new(Some(v), "")?;
    if root.map.is_none() {
        return Err(schema("/", "expected an object"));
    }
    let mut d = root.child("device")?;
    let mut device = device_section(&mut d)?;
    d.finish()?;
    let mut c = root.child("cme")?;
    let cme = cme_section(&mut c, &mut device)?;
    c.finish()?;
    let mut t = root.child("topology")?;
    let topology = topology_section(&mut t)?;
    t.finish()?;
    let mut p = root.child("pump")?;
    let pump = pump_section(&mut p, cme.calibration_pump)?;
    p.finish()?;
    let mut s = root.child("sweep")?;
    let sweep = sweep_section(&mut s)?;
    s.finish()?;
    let outputs = match root.raw("outputs") {
        None => vec![],
        Some(Value::Array(a)) => a
            .iter()
            .enumerate()
            .map(|(i, x)| {
                x.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| schema(&format!("/outputs/{i}"), "expected a column name"))
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(schema("/outputs", "expected an array of column names")),
    };
    root.finish()?;
    Ok(ScenarioConfig {
        device,
        cme,
        topology,
        pump,
        sweep,
        outputs,
    })
}

/// Fully explicit JSON form; parsing it gives back the same config.
pub fn to_value(c: &ScenarioConfig) -> Value {
    let d = &c.device;
    let q = format_quantity;
    let opt = |v: Option<f64>, dim| v.map_or(Value::Null, |x| q(x, dim));
    let (model, order) = match c.topology.diplexer_model {
        DiplexerModel::Brickwall => ("brickwall", 5),
        DiplexerModel::Butterworth(n) => ("butterworth", n),
    };
    let pump = match c.pump {
        PumpSpec::Amplitude(a) => json!({ "amplitude": q(a, Dim::Ampere) }),
        PumpSpec::GainTarget(t) => json!({ "gain_target_db": t }),
    };
    json!({
        "device": {
            "n_array": d.n_array,
            "alpha": d.alpha,
            "i_crit": q(d.i_crit, Dim::Ampere),
            "phi_ext": opt(d.phi_ext, Dim::Radian),
            "c_total": q(d.c_total, Dim::Farad),
            "f_res": q(d.f_res, Dim::Hertz),
            "n_cells": d.n_cells,
            "z0": q(d.z0, Dim::Ohm),
            "target_cutoff": opt(d.target_cutoff, Dim::Hertz),
            "l_override": opt(d.l_override, Dim::Henry),
            "taper_cells": d.taper_cells,
            "taper_max_iter": d.taper_max_iter,
        },
        "cme": {
            "f_p": q(d.f_p, Dim::Hertz),
            "g0": c.cme.g0,
            "pump_depletion": c.cme.pump_depletion,
            "include_upconversion": c.cme.include_upconversion,
            "steps_per_cell": c.cme.steps_per_cell,
            "calibration": {
                "pump": q(c.cme.calibration_pump, Dim::Ampere),
                "gain_db": d.cal_gain_db,
                "freq": q(d.cal_freq, Dim::Hertz),
            },
        },
        "topology": {
            "name": c.topology.name,
            "dphi": q(c.topology.dphi, Dim::Radian),
            "diplexer": {
                "transition": q(c.topology.diplexer_transition, Dim::Hertz),
                "model": model,
                "order": order,
            },
            "coupler": {
                "phase_err": q(c.topology.phase_err, Dim::Radian),
                "amp_err_db": c.topology.amp_err_db,
            },
            "pump_phases": c.topology.pump_phases.map(|p| p.map(|x| q(x, Dim::Radian)).to_vec()),
            "overrides": c.topology.overrides.iter().map(|o| json!({
                "index": o.index, "g0_scale": o.g0_scale, "l_scale": o.l_scale,
            })).collect::<Vec<_>>(),
        },
        "pump": pump,
        "sweep": {
            "f_lo": q(c.sweep.f_lo, Dim::Hertz),
            "f_hi": q(c.sweep.f_hi, Dim::Hertz),
            "points": c.sweep.points,
        },
        "outputs": c.outputs,
    })
}

pub fn serialize(c: &ScenarioConfig) -> String {
    serde_json::to_string_pretty(&to_value(c)).expect("config serializes")
}

/// SHA-256 of the canonical serialization.
pub fn config_hash(c: &ScenarioConfig) -> String {
    hex::encode(Sha256::digest(serialize(c).as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_object_is_the_baseline() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c.device, DeviceConfig::default());
        assert_eq!(c.topology.name, "single");
        assert_eq!(c.topology.diplexer_transition, 9e9);
        assert_eq!(c.topology.diplexer_model, DiplexerModel::Brickwall);
        assert_eq!(c.device.z0, 50.0);
        assert_eq!(c.device.alpha, 0.44);
        assert_eq!(c.device.i_crit, 1e-6);
        assert_eq!(c.device.f_res, 11.8e9);
        assert_eq!(c.device.n_cells, 100);
        assert!((c.device.c_total - 386e-15).abs() < 1e-27);
        match c.pump {
            PumpSpec::Amplitude(a) => assert!((a - 85e-9).abs() < 1e-20),
            _ => panic!(),
        }
    }

    #[test]
    fn alpha_above_one_rejected() {
        let e = parse_config(r#"{"device":{"alpha":1.5}}"#).unwrap_err();
        assert!(matches!(&e, ConfigError::SchemaError { pointer, .. } if pointer == "/device/alpha"), "{e}");
    }

    #[test]
    fn unknown_keys_rejected_with_pointer() {
        let e = parse_config(r#"{"device":{"alpah":0.4}}"#).unwrap_err();
        assert_eq!(e.pointer(), Some("/device/alpah"));
        let e = parse_config(r#"{"topology":{"diplexer":{"cutoff":"9 GHz"}}}"#).unwrap_err();
        assert_eq!(e.pointer(), Some("/topology/diplexer/cutoff"));
        let e = parse_config(r#"{"bogus":1}"#).unwrap_err();
        assert_eq!(e.pointer(), Some("/bogus"));
    }

    #[test]
    fn bare_numbers_need_units() {
        let e = parse_config(r#"{"device":{"f_res":11.8e9}}"#).unwrap_err();
        assert!(matches!(&e, ConfigError::UnitError { pointer, .. } if pointer == "/device/f_res"));
        let e = parse_config(r#"{"device":{"f_res":"11.8 GF"}}"#).unwrap_err();
        assert!(matches!(e, ConfigError::UnitError { .. }));
        let e = parse_config(r#"{"sweep":{"f_lo":"4"}}"#).unwrap_err();
        assert!(matches!(e, ConfigError::UnitError { .. }));
    }

    #[test]
    fn quantity_forms() {
        assert_eq!(parse_quantity("11.8 GHz", Dim::Hertz).unwrap(), 11.8e9);
        assert_eq!(parse_quantity("386fF", Dim::Farad).unwrap(), 386.0 * 1e-15);
        assert_eq!(parse_quantity("1 µA", Dim::Ampere).unwrap(), 1e-6);
        assert_eq!(parse_quantity("1.5e-9 H", Dim::Henry).unwrap(), 1.5e-9);
        assert_eq!(parse_quantity("50 Ω", Dim::Ohm).unwrap(), 50.0);
        assert!((parse_quantity("180 deg", Dim::Radian).unwrap() - std::f64::consts::PI).abs() < 1e-15);
        assert!(parse_quantity("3 Hz", Dim::Farad).is_err());
    }

    #[test]
    fn malformed_json() {
        assert!(matches!(parse_config("{"), Err(ConfigError::Json(_))));
        assert!(matches!(parse_config("[]"), Err(ConfigError::SchemaError { .. })));
    }

    #[test]
    fn pump_forms() {
        let c = parse_config(r#"{"pump":{"gain_target_db":20}}"#).unwrap();
        assert_eq!(c.pump, PumpSpec::GainTarget(20.0));
        let e = parse_config(r#"{"pump":{"gain_target_db":20,"amplitude":"1 nA"}}"#).unwrap_err();
        assert!(matches!(e, ConfigError::SchemaError { .. }));
    }

    #[test]
    fn null_cutoff_keeps_snail_inductance() {
        let c = parse_config(r#"{"device":{"target_cutoff":null}}"#).unwrap();
        assert_eq!(c.device.target_cutoff, None);
        let back = parse_config(&serialize(&c)).unwrap();
        assert_eq!(back.device.target_cutoff, None);
    }

    #[test]
    fn round_trip_of_a_full_scenario() {
        let text = r#"{
            "device": {"alpha": 0.3, "n_cells": 80, "l_override": "1.2 nH", "phi_ext": "2.5 rad"},
            "cme": {"f_p": "12 GHz", "g0": 0.02, "calibration": {"gain_db": 15}},
            "topology": {"name": "wif_single", "dphi": "180 deg",
                         "diplexer": {"model": "butterworth", "order": 3},
                         "coupler": {"phase_err": "0.1 rad", "amp_err_db": 0.2},
                         "pump_phases": ["0 rad", "1 rad", "2 rad", "3 rad"],
                         "overrides": [{"index": 1, "g0_scale": 1.01}]},
            "pump": {"gain_target_db": 18.5},
            "sweep": {"f_lo": "4.5 GHz", "f_hi": "7 GHz", "points": 11},
            "outputs": ["gain_db"]
        }"#;
        let c = parse_config(text).unwrap();
        let once = serialize(&c);
        let back = parse_config(&once).unwrap();
        assert_eq!(back, c);
        assert_eq!(serialize(&back), once);
        assert_eq!(config_hash(&back), config_hash(&c));
    }

    proptest! {
        #[test]
        fn serialization_is_idempotent(alpha in 0.05f64..1.0, f in 1e9f64..11e9, pts in 1usize..500, amp in 0.0f64..1e-6) {
            let mut c = ScenarioConfig::default();
            c.device.alpha = alpha;
            c.sweep = Sweep { f_lo: f, f_hi: f * 1.1, points: pts };
            c.pump = PumpSpec::Amplitude(amp);
            let once = serialize(&c);
            let back = parse_config(&once).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(serialize(&back), once);
        }
    }
}
