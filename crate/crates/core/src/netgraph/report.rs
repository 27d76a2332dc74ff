//! Band observables and the qualitative leakage summary.

use serde::{Deserialize, Serialize};

use super::solve::{solve_network, solve_pump, MultiToneSolution, PumpSolution};
use super::topology::{build_topology, TopologyName, TopologyParams};
use super::{Channel, ExternalKind, NetError, NetworkGraph};
use rayon::prelude::*;

/// A leak counts when its power exceeds this, relative to its reference.
pub const LEAK_THRESHOLD_DB: f64 = -40.0;
/// Below this the network is reported as not isolating at all.
pub const ISOLATION_FLOOR_DB: f64 = 3.0;

fn db(p: f64) -> f64 {
    10.0 * p.log10()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IdlerLeakage {
    No,
    Forwards,
    Backwards,
    Yes,
}

impl IdlerLeakage {
    fn from_flags(forwards: bool, backwards: bool) -> Self {
        match (forwards, backwards) {
            (false, false) => Self::No,
            (true, false) => Self::Forwards,
            (false, true) => Self::Backwards,
            (true, true) => Self::Yes,
        }
    }
}

/// Observables at one signal frequency, all in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandPoint {
    pub f: f64,
    /// Readout tone at the readout per unit signal at the input.
    pub gain_db: f64,
    pub reflection_db: f64,
    /// Idler returned to the input.
    pub idler_back_db: f64,
    /// The other tone at the readout.
    pub idler_fwd_db: f64,
    /// Worst power reaching the input from the readout, either tone.
    pub reverse_db: f64,
}

impl BandPoint {
    pub fn isolation_db(&self) -> f64 {
        -self.reverse_db
    }
}

pub fn band_point(g: &NetworkGraph, sol: &MultiToneSolution) -> Result<BandPoint, NetError> {
    let (inp, out, ch) = (g.input.as_str(), g.readout.as_str(), g.readout_channel);
    let sig = Channel::Signal;
    let reverse = [Channel::Signal, Channel::Idler]
        .into_iter()
        .map(|c| sol.total_power(inp, out, c))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    Ok(BandPoint {
        f: sol.f_s,
        gain_db: sol.power_db(out, ch, inp, sig)?,
        reflection_db: sol.power_db(inp, sig, inp, sig)?,
        idler_back_db: sol.power_db(inp, Channel::Idler, inp, sig)?,
        idler_fwd_db: sol.power_db(out, ch.other(), inp, sig)?,
        reverse_db: db(reverse),
    })
}

/// Pump pass plus band observables at each frequency.
pub fn band_sweep(g: &NetworkGraph, freqs: &[f64], drive: f64) -> Result<(PumpSolution, Vec<BandPoint>), NetError> {
    let pump = solve_pump(g, drive)?;
    let pts = freqs
        .par_iter()
        .map(|&f| band_point(g, &solve_network(g, f, &pump)?))
        .collect::<Result<Vec<_>, NetError>>()?;
    Ok((pump, pts))
}

pub fn network_gain_db(g: &NetworkGraph, f: f64, drive: f64) -> Result<f64, NetError> {
    let pump = solve_pump(g, drive)?;
    let sol = solve_network(g, f, &pump)?;
    sol.power_db(&g.readout, g.readout_channel, &g.input, Channel::Signal)
}

/// Drive giving `target_db` of readout gain at `f`, by bisection.
pub fn drive_for_gain(g: &NetworkGraph, target_db: f64, f: f64, tol_db: f64) -> Result<f64, NetError> {
    let unreachable = || NetError::InvalidGraph(format!("gain of {target_db} dB not reachable"));
    let mut hi = 0.01;
    while network_gain_db(g, f, hi)? < target_db {
        hi *= 1.5;
        if hi > 10.0 {
            return Err(unreachable());
        }
    }
    let mut lo = 0.0;
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        let gain = network_gain_db(g, f, mid)?;
        if (gain - target_db).abs() <= tol_db {
            return Ok(mid);
        }
        if gain < target_db {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(unreachable())
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageRow {
    pub topology: String,
    pub signal_reflection: bool,
    pub pump_leakage: bool,
    pub idler_leakage: IdlerLeakage,
    /// `None` when the network does not isolate.
    pub isolation_db: Option<f64>,
    pub min_gain_db: f64,
    pub max_reflection_db: f64,
    pub max_pump_leak_db: f64,
}

/// Evaluates a built network over `freqs` at pump drive `drive`.
pub fn leakage_row(label: &str, g: &NetworkGraph, freqs: &[f64], drive: f64) -> Result<LeakageRow, NetError> {
    let (pump, pts) = band_sweep(g, freqs, drive)?;
    let max = |f: fn(&BandPoint) -> f64| pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let pump_leak = g
        .externals_of(ExternalKind::Port)
        .map(|e| pump.relative_power(g, &e.name))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let isolation = pts.iter().map(BandPoint::isolation_db).fold(f64::INFINITY, f64::min);
    let thr = LEAK_THRESHOLD_DB;
    Ok(LeakageRow {
        topology: label.to_string(),
        signal_reflection: max(|p| p.reflection_db) > thr,
        pump_leakage: db(pump_leak) > thr,
        idler_leakage: IdlerLeakage::from_flags(max(|p| p.idler_fwd_db) > thr, max(|p| p.idler_back_db) > thr),
        isolation_db: (isolation >= ISOLATION_FLOOR_DB).then_some(isolation),
        min_gain_db: pts.iter().map(|p| p.gain_db).fold(f64::INFINITY, f64::min),
        max_reflection_db: max(|p| p.reflection_db),
        max_pump_leak_db: db(pump_leak),
    })
}

/// Table row of a named topology over `freqs`.
pub fn leakage_report(
    name: &TopologyName,
    p: &TopologyParams,
    drive: f64,
    freqs: &[f64],
) -> Result<LeakageRow, NetError> {
    let g = build_topology(name, p)?;
    let label = match name {
        TopologyName::WifSingle { dphi } if dphi.cos() > 0.0 => "wif_single(0)".to_string(),
        TopologyName::WifSingle { .. } => "wif_single(pi)".to_string(),
        other => other.label().to_string(),
    };
    leakage_row(&label, &g, freqs, drive)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::topology::test_support::params;
    use crate::optimize::Band;

    fn band(n: usize) -> Vec<f64> {
        Band::SIGNAL.sample(n)
    }

    #[test]
    fn flags_follow_threshold() {
        assert_eq!(IdlerLeakage::from_flags(true, true), IdlerLeakage::Yes);
        assert_eq!(IdlerLeakage::from_flags(false, true), IdlerLeakage::Backwards);
        assert_eq!(IdlerLeakage::from_flags(true, false), IdlerLeakage::Forwards);
        assert_eq!(IdlerLeakage::from_flags(false, false), IdlerLeakage::No);
    }

    #[test]
    fn unpumped_single_is_a_plain_line() {
        let row = leakage_report(&TopologyName::Single, &params(), 0.0, &band(5)).unwrap();
        assert_eq!(row.idler_leakage, IdlerLeakage::No);
        assert!(row.isolation_db.is_none());
        assert!(row.min_gain_db.abs() < 0.5, "{}", row.min_gain_db);
        assert!(row.max_reflection_db < -20.0);
    }

    #[test]
    fn balanced_input_reflection_cancels() {
        let g = build_topology(&TopologyName::Balanced, &params()).unwrap();
        let (_, pts) = band_sweep(&g, &band(9), 0.085).unwrap();
        for p in pts {
            assert!(p.reflection_db < -60.0, "{} {}", p.f, p.reflection_db);
        }
    }

    #[test]
    fn gain_target_is_met() {
        let g = build_topology(&TopologyName::Single, &params()).unwrap();
        let d = drive_for_gain(&g, 15.0, 6e9, 0.05).unwrap();
        assert!((network_gain_db(&g, 6e9, d).unwrap() - 15.0).abs() <= 0.05);
    }
}
