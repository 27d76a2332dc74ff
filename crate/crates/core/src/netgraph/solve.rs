//! Two-stage network solve.
//!
//! Stage one runs the pump tone alone through the linear network to find the
//! pump wave arriving at every amplifier. Stage two freezes those pumps and
//! solves the signal/idler system, which is then linear in `(A_s, A_i*)`.
//!
//! Both stages assemble `b = S (Π b + e)` over all node ports, with `Π` the
//! wiring permutation and `e` the waves injected at externals, and solve
//! `(I − SΠ) b = S e` by dense LU for every injection at once.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::components::{diplexer_s, hybrid180_s, hybrid90_s};
use super::twpa::{core, orient, Layer, PumpDirection, PumpState, TwpaModel};
use super::{Channel, ComponentModel, NetError, NetworkGraph};
use crate::ladder::C64;

/// Largest relative residual accepted from the dense solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

struct Layout {
    offset: Vec<usize>,
    ports: usize,
    partner: Vec<Option<usize>>,
    /// External index attached at each global port.
    external_at: Vec<Option<usize>>,
    /// Global port of each external.
    external_port: Vec<usize>,
}

fn layout(g: &NetworkGraph) -> Layout {
    let mut offset = Vec::with_capacity(g.nodes.len());
    let mut ports = 0;
    for n in &g.nodes {
        offset.push(ports);
        ports += n.model.port_count();
    }
    let global = |p: super::PortRef| offset[p.node] + p.port;
    let mut partner = vec![None; ports];
    for &(a, b) in &g.edges {
        partner[global(a)] = Some(global(b));
        partner[global(b)] = Some(global(a));
    }
    let mut external_at = vec![None; ports];
    let external_port: Vec<usize> = g.externals.iter().map(|e| global(e.at)).collect();
    for (i, &p) in external_port.iter().enumerate() {
        external_at[p] = Some(i);
    }
    Layout {
        offset,
        ports,
        partner,
        external_at,
        external_port,
    }
}

/// Outgoing waves `b` at every global port/channel for each column of
/// `inject` (rows: external × channel), plus the relative residual.
fn solve_system(
    lay: &Layout,
    blocks: &[DMatrix<C64>],
    ch: usize,
    inject: &DMatrix<C64>,
) -> Result<(DMatrix<C64>, f64), NetError> {
    let n = lay.ports * ch;
    let cols = inject.ncols();
    let mut m = DMatrix::<C64>::identity(n, n);
    let mut rhs = DMatrix::<C64>::zeros(n, cols);
    for (node, s) in blocks.iter().enumerate() {
        let base = lay.offset[node] * ch;
        for r in 0..s.nrows() {
            for q in 0..s.ncols() {
                let v = s[(r, q)];
                if v == C64::default() {
                    continue;
                }
                let gq = base + q;
                let (port, c) = (gq / ch, gq % ch);
                match (lay.partner[port], lay.external_at[port]) {
                    (Some(pp), _) => m[(base + r, pp * ch + c)] -= v,
                    (None, Some(e)) => {
                        for k in 0..cols {
                            rhs[(base + r, k)] += v * inject[(e * ch + c, k)];
                        }
                    }
                    (None, None) => return Err(NetError::InvalidGraph("open port in solve".into())),
                }
            }
        }
    }
    let singular = NetError::SingularNetwork { residual: f64::INFINITY };
    let b = m.clone().lu().solve(&rhs).ok_or(singular)?;
    let scale = rhs.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let residual = if scale == 0.0 {
        0.0
    } else {
        (&m * &b - &rhs).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
    };
    if !(residual < RESIDUAL_TOL) {
        return Err(NetError::SingularNetwork { residual });
    }
    Ok((b, residual))
}

/// Single-tone S-matrix of a passive node.
fn passive_s(model: &ComponentModel, f: f64) -> Option<DMatrix<C64>> {
    match model {
        ComponentModel::Hybrid90 { imbalance } => Some(hybrid90_s(*imbalance).entries),
        ComponentModel::Hybrid180 { imbalance } => Some(hybrid180_s(*imbalance).entries),
        ComponentModel::Diplexer { transition, model } => Some(diplexer_s(f, *transition, *model).entries),
        ComponentModel::Twpa(_) => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PumpSolution {
    pub f_p: f64,
    pub drive: f64,
    /// Pump wave leaving each external.
    pub outgoing: Vec<C64>,
    /// Pump state at each node; `None` for passive nodes.
    pub pumps: Vec<Option<PumpState>>,
}

impl PumpSolution {
    /// Outgoing pump power at `name` relative to the drive power.
    pub fn relative_power(&self, g: &NetworkGraph, name: &str) -> Result<f64, NetError> {
        let p = self.outgoing[g.external_index(name)?].norm_sqr();
        Ok(if self.drive == 0.0 { p } else { p / (self.drive * self.drive) })
    }
}

/// Stage one: the pump tone through the pump-off network, every external
/// injecting `drive·pump_weight`.
pub fn solve_pump(g: &NetworkGraph, drive: f64) -> Result<PumpSolution, NetError> {
    g.validate()?;
    let f_p = g.pump_frequency()?;
    let lay = layout(g);
    let blocks = g
        .nodes
        .iter()
        .map(|n| match &n.model {
            ComponentModel::Twpa(m) => {
                let s = m.linear_s(f_p)?;
                Ok(DMatrix::from_row_slice(2, 2, &[s[0][0], s[0][1], s[1][0], s[1][1]]))
            }
            other => Ok(passive_s(other, f_p).expect("passive")),
        })
        .collect::<Result<Vec<_>, NetError>>()?;
    let inject = DMatrix::from_iterator(g.externals.len(), 1, g.externals.iter().map(|e| e.pump_weight * drive));
    let (b, _) = solve_system(&lay, &blocks, 1, &inject)?;
    let incident = |port: usize| match lay.partner[port] {
        Some(pp) => b[(pp, 0)],
        None => inject[(lay.external_at[port].expect("attached"), 0)],
    };
    let pumps = g
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| match n.model {
            ComponentModel::Twpa(_) => {
                let (a1, a2) = (incident(lay.offset[i]), incident(lay.offset[i] + 1));
                Some(if a1.norm() >= a2.norm() {
                    PumpState {
                        amplitude: a1,
                        direction: PumpDirection::Forward,
                    }
                } else {
                    PumpState {
                        amplitude: a2,
                        direction: PumpDirection::Backward,
                    }
                })
            }
            _ => None,
        })
        .collect();
    Ok(PumpSolution {
        f_p,
        drive,
        outgoing: lay.external_port.iter().map(|&p| b[(p, 0)]).collect(),
        pumps,
    })
}

/// Network scattering at one signal frequency over `(external, channel)`
/// pairs, channel-minor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MultiToneSolution {
    pub f_s: f64,
    pub f_i: f64,
    pub externals: Vec<String>,
    #[serde(skip)]
    pub s: DMatrix<C64>,
    pub residual: f64,
}

impl MultiToneSolution {
    fn index(&self, name: &str, ch: Channel) -> Result<usize, NetError> {
        let e = self
            .externals
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| NetError::UnknownPort(name.to_string()))?;
        Ok(2 * e + ch.index())
    }

    /// Wave leaving `out` in `out_ch` per unit wave entering `inp` in `in_ch`.
    pub fn amplitude(&self, out: &str, out_ch: Channel, inp: &str, in_ch: Channel) -> Result<C64, NetError> {
        Ok(self.s[(self.index(out, out_ch)?, self.index(inp, in_ch)?)])
    }

    pub fn power(&self, out: &str, out_ch: Channel, inp: &str, in_ch: Channel) -> Result<f64, NetError> {
        Ok(self.amplitude(out, out_ch, inp, in_ch)?.norm_sqr())
    }

    pub fn power_db(&self, out: &str, out_ch: Channel, inp: &str, in_ch: Channel) -> Result<f64, NetError> {
        Ok(10.0 * self.power(out, out_ch, inp, in_ch)?.log10())
    }

    /// Power leaving `out` in both channels.
    pub fn total_power(&self, out: &str, inp: &str, in_ch: Channel) -> Result<f64, NetError> {
        Ok(self.power(out, Channel::Signal, inp, in_ch)? + self.power(out, Channel::Idler, inp, in_ch)?)
    }

    /// Largest `‖S x‖² / ‖x‖²`; at most one for a passive network.
    pub fn max_power_gain(&self) -> f64 {
        let sv = self.s.clone().singular_values();
        let m = sv.iter().copied().fold(0.0, f64::max);
        m * m
    }
}

/// Per-model cache of zero-phase forward blocks, keyed on the chain pump.
struct CoreCache<'a> {
    entries: Vec<(&'a TwpaModel, i64, Layer)>,
}

impl<'a> CoreCache<'a> {
    fn get(&mut self, m: &'a TwpaModel, f_s: f64, chain_pump: f64) -> Result<Layer, NetError> {
        // magnitudes reached along different paths differ only by rounding
        let key = (chain_pump * 1e12).round() as i64;
        if let Some((_, _, c)) = self.entries.iter().find(|(x, k, _)| *k == key && *x == m) {
            return Ok(*c);
        }
        let c = core(m, f_s, chain_pump)?;
        self.entries.push((m, key, c));
        Ok(c)
    }
}

/// Stage two at one signal frequency, with the pumps of `pump`.
pub fn solve_network(g: &NetworkGraph, f_s: f64, pump: &PumpSolution) -> Result<MultiToneSolution, NetError> {
    if pump.pumps.len() != g.nodes.len() {
        return Err(NetError::PumpNotResolved("pump pass belongs to another network".into()));
    }
    let f_p = g.pump_frequency()?;
    let f_i = f_p - f_s;
    let lay = layout(g);
    let mut cache = CoreCache { entries: vec![] };
    let mut blocks = Vec::with_capacity(g.nodes.len());
    for (i, n) in g.nodes.iter().enumerate() {
        let block = match &n.model {
            ComponentModel::Twpa(m) => {
                let p = pump.pumps[i]
                    .as_ref()
                    .ok_or_else(|| NetError::PumpNotResolved(n.name.clone()))?;
                let at_chain = p.amplitude * m.pump_entry_transmission()?;
                orient(&cache.get(m, f_s, at_chain.norm())?, at_chain.arg(), p.direction)
            }
            other => {
                let s = passive_s(other, f_s).expect("passive");
                let i = passive_s(other, f_i).expect("passive");
                let k = s.nrows();
                let mut b = DMatrix::zeros(2 * k, 2 * k);
                for r in 0..k {
                    for c in 0..k {
                        b[(2 * r, 2 * c)] = s[(r, c)];
                        b[(2 * r + 1, 2 * c + 1)] = i[(r, c)].conj();
                    }
                }
                b
            }
        };
        blocks.push(block);
    }
    let ne = g.externals.len();
    let inject = DMatrix::identity(2 * ne, 2 * ne);
    let (b, residual) = solve_system(&lay, &blocks, 2, &inject)?;
    let mut s = DMatrix::zeros(2 * ne, 2 * ne);
    for (e, &port) in lay.external_port.iter().enumerate() {
        for c in 0..2 {
            s.row_mut(2 * e + c).copy_from(&b.row(2 * port + c));
        }
    }
    Ok(MultiToneSolution {
        f_s,
        f_i,
        externals: g.externals.iter().map(|e| e.name.clone()).collect(),
        s,
        residual,
    })
}

/// Pump pass followed by stage two at every frequency, in parallel.
pub fn solve_sweep(g: &NetworkGraph, freqs: &[f64], drive: f64) -> Result<Vec<MultiToneSolution>, NetError> {
    let pump = solve_pump(g, drive)?;
    freqs.par_iter().map(|&f| solve_network(g, f, &pump)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgraph::topology::test_support::params;
    use crate::netgraph::topology::{build_topology, TopologyName};
    use crate::netgraph::ExternalKind;


    #[test]
    fn pump_off_networks_are_lossless() {
        let p = params();
        for name in [TopologyName::Single, TopologyName::Balanced, TopologyName::DiplexedBalanced, TopologyName::WifDouble] {
            let g = build_topology(&name, &p).unwrap();
            let pump = solve_pump(&g, 0.0).unwrap();
            for f in [4.2e9, 6.3e9] {
                let sol = solve_network(&g, f, &pump).unwrap();
                assert!(sol.residual < 1e-12);
                let u = sol.s.adjoint() * &sol.s;
                let err = (u - DMatrix::<C64>::identity(sol.s.nrows(), sol.s.ncols())).norm();
                assert!(err < 1e-9, "{name:?} {err}");
                assert!(sol.max_power_gain() <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn single_matches_the_bare_block() {
        let p = params();
        let g = build_topology(&TopologyName::Single, &p).unwrap();
        let pump = solve_pump(&g, 0.085).unwrap();
        let st = pump.pumps[0].unwrap();
        assert_eq!(st.direction, PumpDirection::Forward);
        assert!((st.amplitude - C64::new(0.085, 0.0)).norm() < 1e-15);
        let sol = solve_network(&g, 6e9, &pump).unwrap();
        let blk = crate::netgraph::twpa_block(&p.twpa, 6e9, Some(&st)).unwrap();
        let s21 = sol.amplitude("signal_out", Channel::Signal, "signal_in", Channel::Signal).unwrap();
        let i21 = sol.amplitude("signal_out", Channel::Idler, "signal_in", Channel::Signal).unwrap();
        assert!((s21 - blk[(2, 0)]).norm() < 1e-12 * s21.norm());
        assert!((i21 - blk[(3, 0)]).norm() < 1e-12 * i21.norm());
    }

    #[test]
    fn pump_reaches_each_amplifier_of_the_double_wif_with_unit_magnitude() {
        let g = build_topology(&TopologyName::WifDouble, &params()).unwrap();
        let pump = solve_pump(&g, 0.05).unwrap();
        let states: Vec<_> = pump.pumps.iter().flatten().collect();
        assert_eq!(states.len(), 4);
        let ph: Vec<f64> = states.iter().map(|s| s.amplitude.arg()).collect();
        for s in &states {
            assert!((s.amplitude.norm() - 0.05).abs() < 1e-12);
            assert_eq!(s.direction, PumpDirection::Forward);
        }
        let wrap = |x: f64| (x + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
        assert!(wrap(ph[1] - ph[0] - std::f64::consts::PI).abs() < 1e-12);
        assert!(wrap(ph[2] - ph[0]).abs() < 1e-12);
        assert!(wrap(ph[3] - ph[0] - std::f64::consts::PI).abs() < 1e-12);
        for e in g.externals_of(ExternalKind::Port) {
            assert!(pump.relative_power(&g, &e.name).unwrap() < 1e-24);
        }
    }

    #[test]
    fn stale_pump_rejected() {
        let p = params();
        let a = build_topology(&TopologyName::Single, &p).unwrap();
        let b = build_topology(&TopologyName::Balanced, &p).unwrap();
        let pump = solve_pump(&a, 0.0).unwrap();
        assert!(matches!(solve_network(&b, 6e9, &pump), Err(NetError::PumpNotResolved(_))));
    }

    #[test]
    fn sweep_is_deterministic() {
        let g = build_topology(&TopologyName::Balanced, &params()).unwrap();
        let f: Vec<f64> = (0..6).map(|i| 4e9 + i as f64 * 0.8e9).collect();
        let a = solve_sweep(&g, &f, 0.06).unwrap();
        let b = solve_sweep(&g, &f, 0.06).unwrap();
        assert_eq!(a, b);
    }
}
