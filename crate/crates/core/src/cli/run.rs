//! The seven commands, each producing one CSV table and one JSON summary.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::config::{config_hash, ConfigError, PumpSpec, ScenarioConfig};
use crate::cme::{forward_transfer, pump_for_gain, reverse_gain_db, signal_gain_db, CmeError, DispersionModel};
use crate::device::{build_device, Device, DeviceError};
use crate::ladder::{
    bloch_impedance, chain_reflection, cutoff_frequency, dispersion_k, rpm_resonance, CellTopology, LadderParams,
    C64,
};
use crate::netgraph::report::{band_sweep, drive_for_gain, leakage_row};
use crate::netgraph::{build_topology, Imbalance, NetError, NetworkGraph, TopologyName, TopologyParams, TwpaModel};
use crate::optimize::{matched_chain_abcd, optimize_matching, taper_init, Band, TaperSpec};

/// dB values are floored here so tables never carry infinities.
pub const DB_FLOOR: f64 = -400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Dispersion,
    Reflection,
    Gain,
    Network,
    Isolation,
    OptimizeMatching,
    Table1,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Dispersion => "dispersion",
            Command::Reflection => "reflection",
            Command::Gain => "gain",
            Command::Network => "network",
            Command::Isolation => "isolation",
            Command::OptimizeMatching => "optimize-matching",
            Command::Table1 => "table1",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o failure: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) => 3,
            RunError::Io(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            RunError::Config(ConfigError::UnitError { .. }) => "unit",
            RunError::Config(_) => "schema",
            RunError::Numerical(_) => "numerical",
            RunError::Io(_) => "io",
        }
    }
}

macro_rules! numerical {
    ($($t:ty),*) => {$(
        impl From<$t> for RunError {
            fn from(e: $t) -> Self {
                RunError::Numerical(e.to_string())
            }
        }
    )*};
}
numerical!(NetError, CmeError, DeviceError);

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: vec![],
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Keeps the key column plus the requested ones, in request order.
    fn select(self, wanted: &[String]) -> Result<Self, RunError> {
        if wanted.is_empty() {
            return Ok(self);
        }
        let mut idx = vec![0];
        for (i, w) in wanted.iter().enumerate() {
            match self.columns.iter().position(|c| c == w) {
                Some(0) => {}
                Some(j) => idx.push(j),
                None => {
                    return Err(ConfigError::SchemaError {
                        pointer: format!("/outputs/{i}"),
                        message: format!("no column `{w}`; available: {}", self.columns.join(", ")),
                    }
                    .into())
                }
            }
        }
        Ok(Self {
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            rows: self.rows.iter().map(|r| idx.iter().map(|&j| r[j].clone()).collect()).collect(),
        })
    }

    pub fn to_csv(&self) -> Result<String, RunError> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(vec![]);
        let io = |e: csv::Error| RunError::Io(e.to_string());
        w.write_record(&self.columns).map_err(io)?;
        for r in &self.rows {
            w.write_record(r.iter().map(|c| match c {
                Cell::Num(x) => fmt9(*x),
                Cell::Text(s) => s.clone(),
            }))
            .map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| RunError::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| RunError::Io(e.to_string()))
    }

    /// `{column: {min, max}}` over the numeric columns.
    fn ranges(&self) -> Value {
        let mut out = Map::new();
        for (j, name) in self.columns.iter().enumerate() {
            let xs: Vec<f64> = self
                .rows
                .iter()
                .filter_map(|r| match r[j] {
                    Cell::Num(x) if !x.is_nan() => Some(x),
                    _ => None,
                })
                .collect();
            if !xs.is_empty() {
                let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                out.insert(name.clone(), json!({ "min": lo, "max": hi }));
            }
        }
        Value::Object(out)
    }
}

/// Nine significant digits, plain notation where it stays short.
pub fn fmt9(x: f64) -> String {
    if x == 0.0 {
        return "0.0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let trim = |s: &str| -> String {
        if !s.contains('.') {
            return s.to_string();
        }
        let t = s.trim_end_matches('0');
        if t.ends_with('.') {
            format!("{t}0")
        } else {
            t.to_string()
        }
    };
    let e = x.abs().log10().floor() as i32;
    if (-4..9).contains(&e) {
        trim(&format!("{:.*}", (8 - e) as usize, x))
    } else {
        let s = format!("{x:.8e}");
        let (m, ex) = s.split_once('e').expect("exponent form");
        format!("{}e{ex}", trim(m))
    }
}

fn floor_db(x: f64) -> f64 {
    if x.is_nan() {
        x
    } else {
        x.max(DB_FLOOR)
    }
}

fn db(p: f64) -> f64 {
    floor_db(10.0 * p.log10())
}

/// Everything derived from a config before any command runs.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub device: Device,
    pub twpa: TwpaModel,
    pub params: TopologyParams,
}

impl Scenario {
    pub fn new(config: &ScenarioConfig) -> Result<Self, RunError> {
        let mut device = build_device(&config.device)?;
        let c = &config.cme;
        if let Some(g0) = c.g0 {
            device.cme.g0 = g0;
        }
        device.cme.pump_depletion = c.pump_depletion;
        device.cme.include_upconversion = c.include_upconversion;
        device.cme.steps_per_cell = c.steps_per_cell;
        let twpa = TwpaModel::from_device(&device);
        let t = &config.topology;
        let mut params = TopologyParams::new(twpa.clone());
        params.diplexer_transition = t.diplexer_transition;
        params.diplexer_model = t.diplexer_model;
        params.coupler_imbalance = Imbalance {
            phase_err: t.phase_err,
            amp_err_db: t.amp_err_db,
        };
        params.pump_phases = t.pump_phases;
        for o in &t.overrides {
            if params.overrides.len() <= o.index {
                params.overrides.resize(o.index + 1, None);
            }
            let mut m = twpa.clone();
            m.cme.g0 *= o.g0_scale;
            if let DispersionModel::Ladder(p) = &mut m.cme.dispersion {
                p.l *= o.l_scale;
            }
            params.overrides[o.index] = Some(m);
        }
        Ok(Self {
            config: config.clone(),
            device,
            twpa,
            params,
        })
    }

    fn ladder(&self) -> &LadderParams {
        &self.device.ladder
    }

    fn freqs(&self) -> Vec<f64> {
        self.config.sweep.frequencies()
    }

    fn i_crit(&self) -> f64 {
        self.config.device.i_crit
    }

    fn topology(&self) -> Result<TopologyName, RunError> {
        let t = &self.config.topology;
        TopologyName::parse(&t.name, t.dphi).map_err(|e| {
            ConfigError::SchemaError {
                pointer: "/topology/name".into(),
                message: e.to_string(),
            }
            .into()
        })
    }

    /// Mixing commands need every signal tone below the pump.
    fn require_below_pump(&self) -> Result<(), RunError> {
        let f_p = self.device.cme.f_p;
        if self.config.sweep.f_hi >= f_p {
            return Err(ConfigError::SchemaError {
                pointer: "/sweep/f_hi".into(),
                message: format!("must lie below the pump frequency ({f_p:e} Hz)"),
            }
            .into());
        }
        Ok(())
    }

    /// Pump amplitude at the amplifier input, in units of the critical current.
    fn chain_pump(&self) -> Result<f64, RunError> {
        Ok(match self.config.pump {
            PumpSpec::Amplitude(a) => a / self.i_crit(),
            PumpSpec::GainTarget(t) => pump_for_gain(t, self.config.device.cal_freq, &self.device.cme, 0.1)?,
        })
    }

    /// Pump drive at the network's pump inputs.
    fn network_drive(&self, g: &NetworkGraph) -> Result<f64, RunError> {
        Ok(match self.config.pump {
            PumpSpec::Amplitude(a) => a / self.i_crit(),
            PumpSpec::GainTarget(t) => drive_for_gain(g, t, self.config.device.cal_freq, 0.01)?,
        })
    }
}

/// Result of one command before it is written out.
#[derive(Debug, Clone)]
pub struct Output {
    pub table: Table,
    pub details: Value,
}

pub fn execute(cmd: Command, s: &Scenario) -> Result<Output, RunError> {
    let out = match cmd {
        Command::Dispersion => dispersion(s),
        Command::Reflection => reflection(s),
        Command::Gain => gain(s),
        Command::Network => network(s),
        Command::Isolation => isolation(s),
        Command::OptimizeMatching => optimize(s),
        Command::Table1 => table1(s),
    }?;
    Ok(Output {
        table: out.table.select(&s.config.outputs)?,
        details: out.details,
    })
}

fn dispersion(s: &Scenario) -> Result<Output, RunError> {
    let p = s.ladder();
    let plain = p.without_rpm();
    let mut t = Table::new(&["f_hz", "k_re", "k_im", "k_plain_re", "k_plain_im", "z_bloch_re", "z_bloch_im"]);
    for f in s.freqs() {
        let (k, k0, z) = (dispersion_k(f, p), dispersion_k(f, &plain), bloch_impedance(f, p));
        t.push(vec![f.into(), k.re.into(), k.im.into(), k0.re.into(), k0.im.into(), z.re.into(), z.im.into()]);
    }
    let details = json!({
        "cutoff_hz": cutoff_frequency(p),
        "rpm_resonance_hz": rpm_resonance(p),
        "cell_inductance_h": p.l,
        "snail_inductance_h": s.device.l_snail,
        "c2": s.device.expansion.c2,
        "c3": s.device.expansion.c3,
        "phi_ext_rad": s.device.snail.phi_ext,
    });
    Ok(Output { table: t, details })
}

fn reflection(s: &Scenario) -> Result<Output, RunError> {
    s.require_below_pump()?;
    let p = s.ladder();
    let name = s.topology()?;
    let g = build_topology(&name, &s.params)?;
    let drive = s.network_drive(&g)?;
    let freqs = s.freqs();
    let (_, pts) = band_sweep(&g, &freqs, drive)?;
    let (_, off) = band_sweep(&g, &freqs, 0.0)?;
    let mut t = Table::new(&["f_hz", "s11_bare_db", "s11_matched_db", "network_s11_off_db", "network_s11_db"]);
    for (i, &f) in freqs.iter().enumerate() {
        let bare = chain_reflection(f, p, CellTopology::Pi).norm_sqr();
        let matched = s.twpa.linear_s(f)?[0][0].norm_sqr();
        t.push(vec![
            f.into(),
            db(bare).into(),
            db(matched).into(),
            floor_db(off[i].reflection_db).into(),
            floor_db(pts[i].reflection_db).into(),
        ]);
    }
    let details = json!({ "topology": name.label(), "drive": drive });
    Ok(Output { table: t, details })
}

fn gain(s: &Scenario) -> Result<Output, RunError> {
    s.require_below_pump()?;
    let cme = s.device.cme;
    let pump = s.chain_pump()?;
    let rows = s
        .freqs()
        .par_iter()
        .map(|&f| {
            let g = signal_gain_db(f, pump, &cme)?;
            let m = forward_transfer(f, C64::new(pump, 0.0), &cme)?;
            let r = reverse_gain_db(f, pump, &cme)?;
            Ok(vec![f.into(), floor_db(g).into(), db(m[(1, 0)].norm_sqr()).into(), floor_db(r).into()])
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let mut t = Table::new(&["f_hz", "gain_db", "idler_gain_db", "reverse_idler_db"]);
    rows.into_iter().for_each(|r| t.push(r));
    let details = json!({ "pump": pump, "pump_a": pump * s.i_crit(), "g0": cme.g0 });
    Ok(Output { table: t, details })
}

fn network(s: &Scenario) -> Result<Output, RunError> {
    s.require_below_pump()?;
    let name = s.topology()?;
    let g = build_topology(&name, &s.params)?;
    let drive = s.network_drive(&g)?;
    let freqs = s.freqs();
    let (pump, pts) = band_sweep(&g, &freqs, drive)?;
    let mut t = Table::new(&["f_hz", "gain_db", "reflection_db", "idler_back_db", "idler_fwd_db", "isolation_db"]);
    for p in &pts {
        t.push(vec![
            p.f.into(),
            floor_db(p.gain_db).into(),
            floor_db(p.reflection_db).into(),
            floor_db(p.idler_back_db).into(),
            floor_db(p.idler_fwd_db).into(),
            (-floor_db(p.reverse_db)).into(),
        ]);
    }
    let row = leakage_row(name.label(), &g, &freqs, drive)?;
    let mut leaks = Map::new();
    for e in &g.externals {
        leaks.insert(e.name.clone(), json!(db(pump.relative_power(&g, &e.name)?)));
    }
    let details = json!({
        "topology": name.label(),
        "input": g.input,
        "readout": g.readout,
        "drive": drive,
        "summary": row_json(&row),
        "pump_out_db": leaks,
    });
    Ok(Output { table: t, details })
}

fn isolation(s: &Scenario) -> Result<Output, RunError> {
    s.require_below_pump()?;
    let name = s.topology()?;
    let g = build_topology(&name, &s.params)?;
    let drive = s.network_drive(&g)?;
    let (_, pts) = band_sweep(&g, &s.freqs(), drive)?;
    let mut t = Table::new(&["f_hz", "gain_db", "reverse_db", "isolation_db"]);
    for p in &pts {
        let rev = floor_db(p.reverse_db);
        t.push(vec![p.f.into(), floor_db(p.gain_db).into(), rev.into(), (-rev).into()]);
    }
    let worst = pts.iter().map(|p| -floor_db(p.reverse_db)).fold(f64::INFINITY, f64::min);
    let details = json!({ "topology": name.label(), "drive": drive, "min_isolation_db": worst });
    Ok(Output { table: t, details })
}

fn optimize(s: &Scenario) -> Result<Output, RunError> {
    let p = s.ladder();
    let cfg = &s.config.device;
    if cfg.taper_cells == 0 {
        return Err(ConfigError::SchemaError {
            pointer: "/device/taper_cells".into(),
            message: "optimize-matching needs at least one taper cell".into(),
        }
        .into());
    }
    let init = taper_init(cfg.taper_cells, p);
    let out = optimize_matching(&init, p, 1e-10, cfg.taper_max_iter)
        .map_err(|e| RunError::Numerical(e.to_string()))?;
    let s11 = |cells: &[crate::ladder::TaperCell], f: f64| {
        crate::ladder::abcd_to_s(&matched_chain_abcd(f, cells, p), p.z0).map(|m| m.get(0, 0).norm_sqr())
    };
    let mut t = Table::new(&["f_hz", "s11_bare_db", "s11_initial_db", "s11_optimized_db"]);
    for f in s.freqs() {
        let bare = s11(&[], f).map_err(|e| RunError::Numerical(e.to_string()))?;
        let a = s11(&init.cells, f).map_err(|e| RunError::Numerical(e.to_string()))?;
        let b = s11(&out.taper.cells, f).map_err(|e| RunError::Numerical(e.to_string()))?;
        t.push(vec![f.into(), db(bare).into(), db(a).into(), db(b).into()]);
    }
    let cells: Vec<Value> = out.taper.cells.iter().map(|c| json!({ "l_h": c.l, "c_f": c.c })).collect();
    let details = json!({
        "band_hz": [Band::SIGNAL.f_lo, Band::SIGNAL.f_hi],
        "bare_max_s11": crate::optimize::reflection_objective(&TaperSpec::new(vec![]), p),
        "initial_max_s11": out.initial_objective,
        "optimized_max_s11": out.objective,
        "iterations": out.iterations,
        "max_iter_exceeded": out.max_iter_exceeded,
        "cells": cells,
    });
    Ok(Output { table: t, details })
}

fn row_json(r: &crate::netgraph::LeakageRow) -> Value {
    let mut r = r.clone();
    r.min_gain_db = floor_db(r.min_gain_db);
    r.max_reflection_db = floor_db(r.max_reflection_db);
    r.max_pump_leak_db = floor_db(r.max_pump_leak_db);
    serde_json::to_value(r).expect("row serializes")
}

fn yes_no(b: bool) -> Cell {
    if b { "yes" } else { "no" }.into()
}

fn table1(s: &Scenario) -> Result<Output, RunError> {
    s.require_below_pump()?;
    let freqs = s.freqs();
    let mut t = Table::new(&[
        "topology",
        "signal_reflection",
        "pump_leakage",
        "idler_leakage",
        "isolation_db",
        "min_gain_db",
        "max_reflection_db",
        "max_pump_leak_db",
        "drive",
    ]);
    let mut stage_drive = None;
    let mut rows = vec![];
    for name in TopologyName::table() {
        let g = build_topology(&name, &s.params)?;
        // the cascade repeats the double-WIF stage at its own drive
        let drive = match (&name, stage_drive) {
            (TopologyName::WifDoubleCascaded, Some(d)) => d,
            _ => s.network_drive(&g)?,
        };
        if name == TopologyName::WifDouble {
            stage_drive = Some(drive);
        }
        let label = match name {
            TopologyName::WifSingle { dphi } if dphi.cos() > 0.0 => "wif_single(0)",
            TopologyName::WifSingle { .. } => "wif_single(pi)",
            ref other => other.label(),
        };
        let r = leakage_row(label, &g, &freqs, drive)?;
        let iso = match r.isolation_db {
            Some(x) => Cell::Num(x),
            None => "-".into(),
        };
        let idler = serde_json::to_value(r.idler_leakage).expect("enum serializes");
        t.push(vec![
            label.into(),
            yes_no(r.signal_reflection),
            yes_no(r.pump_leakage),
            idler.as_str().unwrap_or("?").into(),
            iso,
            floor_db(r.min_gain_db).into(),
            floor_db(r.max_reflection_db).into(),
            floor_db(r.max_pump_leak_db).into(),
            drive.into(),
        ]);
        rows.push(row_json(&r));
    }
    Ok(Output {
        table: t,
        details: json!({ "rows": rows }),
    })
}

fn summary(cmd: Command, hash: Option<&str>, result: Result<&Output, &RunError>) -> Value {
    let mut v = json!({
        "command": cmd.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "config_hash": hash,
    });
    let m = v.as_object_mut().expect("object");
    match result {
        Ok(o) => {
            m.insert("status".into(), json!("ok"));
            m.insert("error".into(), Value::Null);
            m.insert("rows".into(), json!(o.table.rows.len()));
            m.insert("observables".into(), o.table.ranges());
            m.insert("details".into(), o.details.clone());
        }
        Err(e) => {
            let pointer = match e {
                RunError::Config(c) => c.pointer(),
                _ => None,
            };
            m.insert("status".into(), json!("error"));
            m.insert(
                "error".into(),
                json!({ "kind": e.kind(), "message": e.to_string(), "pointer": pointer }),
            );
        }
    }
    v
}

fn write(path: &Path, text: &str) -> Result<(), RunError> {
    fs::write(path, text).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))
}

pub fn write_summary(cmd: Command, out: &Path, hash: Option<&str>, result: Result<&Output, &RunError>) -> Result<(), RunError> {
    let v = summary(cmd, hash, result);
    let text = serde_json::to_string_pretty(&v).expect("summary serializes") + "\n";
    write(&out.join(format!("{}.json", cmd.name())), &text)
}

/// Runs `cmd` and writes `<command>.csv` and `<command>.json` into `out`.
pub fn run(cmd: Command, config: &ScenarioConfig, out: &Path) -> Result<Output, RunError> {
    fs::create_dir_all(out).map_err(|e| RunError::Io(format!("{}: {e}", out.display())))?;
    let hash = config_hash(config);
    let result = Scenario::new(config).and_then(|s| execute(cmd, &s));
    match &result {
        Ok(o) => {
            write(&out.join(format!("{}.csv", cmd.name())), &o.table.to_csv()?)?;
            write_summary(cmd, out, Some(&hash), Ok(o))?;
        }
        Err(e) => write_summary(cmd, out, Some(&hash), Err(e))?,
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::{parse_config, Sweep};

    fn small(text: &str) -> ScenarioConfig {
        let mut c = parse_config(text).unwrap();
        c.device.taper_max_iter = 200;
        c.sweep = Sweep {
            f_lo: 4e9,
            f_hi: 8e9,
            points: 5,
        };
        c
    }

    #[test]
    fn number_format() {
        assert_eq!(fmt9(0.0), "0.0");
        assert_eq!(fmt9(-0.0), "0.0");
        assert_eq!(fmt9(1.0), "1.0");
        assert_eq!(fmt9(6e9), "6.0e9");
        assert_eq!(fmt9(12.345678912), "12.3456789");
        assert_eq!(fmt9(-0.00123456789123), "-0.00123456789");
        assert_eq!(fmt9(1.5e-13), "1.5e-13");
        assert_eq!(fmt9(123456789.0), "123456789");
        for x in [3.1e-7, -17.25, 4.4e9, 0.1 + 0.2] {
            let back: f64 = fmt9(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-8, "{x}");
        }
    }

    #[test]
    fn output_selection() {
        let mut t = Table::new(&["f_hz", "a", "b"]);
        t.push(vec![1.0.into(), 2.0.into(), 3.0.into()]);
        let s = t.clone().select(&["b".to_string()]).unwrap();
        assert_eq!(s.columns, vec!["f_hz", "b"]);
        assert_eq!(s.to_csv().unwrap(), "f_hz,b\n1.0,3.0\n");
        let e = t.select(&["a".into(), "zz".into()]).unwrap_err();
        assert!(matches!(e, RunError::Config(ConfigError::SchemaError { ref pointer, .. }) if pointer == "/outputs/1"));
    }

    #[test]
    fn zero_pump_gain_is_exactly_zero() {
        let c = small(r#"{"pump":{"amplitude":"0 A"}}"#);
        let o = execute(Command::Gain, &Scenario::new(&c).unwrap()).unwrap();
        assert!(o.table.rows.iter().all(|r| r[1] == Cell::Num(0.0)));
        assert!(o.table.to_csv().unwrap().lines().skip(1).all(|l| l.split(',').nth(1) == Some("0.0")));
    }

    #[test]
    fn sweep_above_pump_is_a_schema_error() {
        let mut c = small("{}");
        c.sweep.f_hi = 13e9;
        let e = execute(Command::Gain, &Scenario::new(&c).unwrap()).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        // dispersion has no such limit
        assert!(execute(Command::Dispersion, &Scenario::new(&c).unwrap()).is_ok());
    }

    #[test]
    fn run_writes_both_files_and_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let c = small(r#"{"pump":{"gain_target_db":15}}"#);
        run(Command::Gain, &c, dir.path()).unwrap();
        let first = fs::read(dir.path().join("gain.csv")).unwrap();
        let json: Value = serde_json::from_slice(&fs::read(dir.path().join("gain.json")).unwrap()).unwrap();
        assert_eq!(json["status"], "ok");
        assert_eq!(json["config_hash"], config_hash(&c));
        let mid = json["observables"]["gain_db"]["max"].as_f64().unwrap();
        assert!((mid - 15.0).abs() < 1.5, "{mid}");
        run(Command::Gain, &c, dir.path()).unwrap();
        assert_eq!(fs::read(dir.path().join("gain.csv")).unwrap(), first);
        assert!(!first.contains(&b'\r'));
    }

    #[test]
    fn overrides_reach_the_instances() {
        let c = small(r#"{"topology":{"name":"balanced","overrides":[{"index":1,"g0_scale":1.1}]}}"#);
        let s = Scenario::new(&c).unwrap();
        assert_eq!(s.params.overrides.len(), 2);
        assert!(s.params.overrides[0].is_none());
        let g0 = s.params.overrides[1].as_ref().unwrap().cme.g0;
        assert!((g0 / s.twpa.cme.g0 - 1.1).abs() < 1e-12);
    }

    #[test]
    fn dispersion_details() {
        let c = small("{}");
        let o = execute(Command::Dispersion, &Scenario::new(&c).unwrap()).unwrap();
        let fc = o.details["cutoff_hz"].as_f64().unwrap();
        assert!((fc - 16e9).abs() < 1e4, "{fc}");
        assert_eq!(o.table.rows.len(), 5);
    }
}
