//! Wiring of the peripheral circuits around one or more amplifiers.
//!
//! Port numbering follows the component conventions: couplers 0–3 (inputs
//! 0, 1 facing outputs 2, 3), diplexers 0 common / 1 low / 2 high, amplifiers
//! 0 left / 1 right. Diplexers always face the amplifier with the common port.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use super::components::{hybrid180_s, DiplexerModel, Imbalance};
use super::twpa::TwpaModel;
use super::{Channel, ComponentModel, ExternalKind, NetError, NetworkGraph};
use crate::ladder::C64;

const NONE: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "name")]
pub enum TopologyName {
    Single,
    Balanced,
    Diplexed,
    DiplexedBalanced,
    WifSingle { dphi: f64 },
    WifDouble,
    WifDoubleCascaded,
}

impl TopologyName {
    /// `dphi` only matters for `wif_single`.
    pub fn parse(name: &str, dphi: f64) -> Result<Self, NetError> {
        Ok(match name {
            "single" => Self::Single,
            "balanced" => Self::Balanced,
            "diplexed" => Self::Diplexed,
            "diplexed_balanced" => Self::DiplexedBalanced,
            "wif_single" => Self::WifSingle { dphi },
            "wif_double" => Self::WifDouble,
            "wif_double_cascaded" => Self::WifDoubleCascaded,
            other => return Err(NetError::UnknownTopology(other.to_string())),
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Self::Single => "single",
            Self::Balanced => "balanced",
            Self::Diplexed => "diplexed",
            Self::DiplexedBalanced => "diplexed_balanced",
            Self::WifSingle { .. } => "wif_single",
            Self::WifDouble => "wif_double",
            Self::WifDoubleCascaded => "wif_double_cascaded",
        }
    }

    /// The eight configurations of the comparison table, in order.
    pub fn table() -> Vec<TopologyName> {
        vec![
            Self::Single,
            Self::Balanced,
            Self::Diplexed,
            Self::DiplexedBalanced,
            Self::WifSingle { dphi: 0.0 },
            Self::WifSingle { dphi: PI },
            Self::WifDouble,
            Self::WifDoubleCascaded,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyParams {
    pub twpa: TwpaModel,
    /// Per-instance replacements, indexed in build order.
    pub overrides: Vec<Option<TwpaModel>>,
    pub diplexer_transition: f64,
    pub diplexer_model: DiplexerModel,
    pub coupler_imbalance: Imbalance,
    /// Explicit pump phases of the four double-WIF amplifiers; `None` uses
    /// the coupler network.
    pub pump_phases: Option<[f64; 4]>,
}

impl TopologyParams {
    pub fn new(twpa: TwpaModel) -> Self {
        Self {
            twpa,
            overrides: vec![],
            diplexer_transition: 9e9,
            diplexer_model: DiplexerModel::Brickwall,
            coupler_imbalance: Imbalance::default(),
            pump_phases: None,
        }
    }
}

/// Four pump feeds from one drive of phase `drive_phase`: the drive enters
/// the difference port of one 180° coupler whose outputs feed the sum ports
/// of two more.
pub fn pump_phase_network(drive_phase: f64, imbalance: Imbalance) -> [C64; 4] {
    let h = hybrid180_s(imbalance);
    let drive = C64::from_polar(1.0, drive_phase);
    let (x3, x4) = (h.get(2, 1) * drive, h.get(3, 1) * drive);
    [h.get(2, 0) * x3, h.get(2, 0) * x4, h.get(3, 0) * x3, h.get(3, 0) * x4]
}

struct Builder<'a> {
    g: NetworkGraph,
    p: &'a TopologyParams,
    next_twpa: usize,
}

impl<'a> Builder<'a> {
    fn new(p: &'a TopologyParams, first_twpa: usize) -> Self {
        Self {
            g: NetworkGraph::new(),
            p,
            next_twpa: first_twpa,
        }
    }

    fn twpa(&mut self, name: &str) -> usize {
        let m = self
            .p
            .overrides
            .get(self.next_twpa)
            .and_then(|o| o.clone())
            .unwrap_or_else(|| self.p.twpa.clone());
        self.next_twpa += 1;
        self.g.add(name, ComponentModel::Twpa(Box::new(m)))
    }

    fn h90(&mut self, name: &str) -> usize {
        let imbalance = self.p.coupler_imbalance;
        self.g.add(name, ComponentModel::Hybrid90 { imbalance })
    }

    fn diplexer(&mut self, name: &str) -> usize {
        let (transition, model) = (self.p.diplexer_transition, self.p.diplexer_model);
        self.g.add(name, ComponentModel::Diplexer { transition, model })
    }

    fn port(&mut self, name: &str, node: usize, port: usize, w: C64) {
        self.g.attach(name, ExternalKind::Port, node, port, w);
    }

    fn load(&mut self, name: &str, node: usize, port: usize) {
        self.g.attach(name, ExternalKind::Termination, node, port, NONE);
    }

    fn finish(mut self, input: &str, readout: &str, ch: Channel) -> Result<NetworkGraph, NetError> {
        self.g.input = input.into();
        self.g.readout = readout.into();
        self.g.readout_channel = ch;
        self.g.validate()?;
        Ok(self.g)
    }

    /// Amplifier between two diplexers, fed with pump `k` at weight `w`.
    /// Returns the diplexers; their low ports are left free.
    fn diplexed_arm(&mut self, tag: &str, k: usize, w: C64) -> (usize, usize) {
        let d_in = self.diplexer(&format!("dip_in_{tag}"));
        let t = self.twpa(&format!("twpa_{tag}"));
        let d_out = self.diplexer(&format!("dip_out_{tag}"));
        self.g.connect(d_in, 0, t, 0);
        self.g.connect(t, 1, d_out, 0);
        self.g.attach(format!("pump_in_{k}"), ExternalKind::PumpIn, d_in, 2, w);
        self.g.attach(format!("pump_out_{k}"), ExternalKind::PumpOut, d_out, 2, NONE);
        (d_in, d_out)
    }

    /// Two couplers around two arms; returns `(h1, h2)` with the coupler
    /// ports 0, 1 of `h1` and 2, 3 of `h2` left free. The lower arm
    /// (coupled path of `h1`) feeds input 0 of `h2`.
    fn balanced_core(&mut self, tag: &str, arms: Option<[(usize, C64); 2]>) -> (usize, usize) {
        let h1 = self.h90(&format!("hyb_in{tag}"));
        let h2 = self.h90(&format!("hyb_out{tag}"));
        let names = match tag.trim_start_matches('_') {
            "" => ["a".to_string(), "b".to_string()],
            t => [format!("{t}1"), format!("{t}2")],
        };
        for (i, to) in [(0, 1), (1, 0)] {
            let name = names[i].clone();
            let (l, r) = match arms {
                Some(pumps) => {
                    let (k, w) = pumps[i];
                    self.diplexed_arm(&name, k, w)
                }
                None => {
                    let t = self.twpa(&format!("twpa_{name}"));
                    (t, t)
                }
            };
            // diplexer low port or the bare amplifier port
            let (lp, rp) = if arms.is_some() { (1, 1) } else { (0, 1) };
            self.g.connect(h1, 2 + i, l, lp);
            self.g.connect(r, rp, h2, to);
        }
        (h1, h2)
    }
}

fn single(b: &mut Builder) {
    let t = b.twpa("twpa");
    b.port("signal_in", t, 0, ONE);
    b.port("signal_out", t, 1, NONE);
}

fn balanced(b: &mut Builder) {
    let (h1, h2) = b.balanced_core("", None);
    // the input coupler splits the drive into two unit pumps
    b.port("signal_in", h1, 0, C64::new(SQRT_2, 0.0));
    b.load("term_in", h1, 1);
    b.port("signal_out", h2, 2, NONE);
    b.load("term_out", h2, 3);
}

fn diplexed(b: &mut Builder) {
    let (d_in, d_out) = b.diplexed_arm("main", 1, ONE);
    b.port("signal_in", d_in, 1, NONE);
    b.port("signal_out", d_out, 1, NONE);
}

fn diplexed_balanced(b: &mut Builder) {
    let d_in = b.diplexer("dip_in");
    let (h1, h2) = b.balanced_core("", None);
    let d_out = b.diplexer("dip_out");
    b.g.connect(d_in, 0, h1, 0);
    b.g.connect(h2, 2, d_out, 0);
    b.port("signal_in", d_in, 1, NONE);
    b.g.attach("pump_in_1", ExternalKind::PumpIn, d_in, 2, C64::new(SQRT_2, 0.0));
    b.load("term_in", h1, 1);
    b.load("term_out", h2, 3);
    b.port("signal_out", d_out, 1, NONE);
    b.g.attach("pump_out_1", ExternalKind::PumpOut, d_out, 2, NONE);
}

fn wif_single(b: &mut Builder, dphi: f64) {
    let (h1, h2) = b.balanced_core("", Some([(1, ONE), (2, C64::from_polar(1.0, dphi))]));
    b.port("signal_in", h1, 0, NONE);
    b.load("term_left", h1, 1);
    b.port("signal_out", h2, 2, NONE);
    b.load("term_right", h2, 3);
}

fn double_weights(p: &TopologyParams) -> [C64; 4] {
    match p.pump_phases {
        Some(ph) => ph.map(|x| C64::from_polar(1.0, x)),
        None => pump_phase_network(0.0, p.coupler_imbalance).map(|c| 2.0 * c),
    }
}

fn wif_double(b: &mut Builder) {
    let w = double_weights(b.p);
    let h0 = b.h90("hyb_split");
    let (h1a, h2a) = b.balanced_core("_a", Some([(1, w[0]), (2, w[1])]));
    let (h1b, h2b) = b.balanced_core("_b", Some([(3, w[2]), (4, w[3])]));
    let h3 = b.h90("hyb_join");
    b.port("signal_in", h0, 0, NONE);
    b.load("term_1", h0, 1);
    b.g.connect(h0, 2, h1a, 0);
    b.g.connect(h0, 3, h1b, 0);
    b.load("term_2a", h1a, 1);
    b.load("term_2b", h1b, 1);
    b.g.connect(h2a, 2, h3, 1);
    b.g.connect(h2b, 2, h3, 0);
    b.load("term_aux_a", h2a, 3);
    b.load("term_aux_b", h2b, 3);
    b.load("term_3", h3, 2);
    b.port("idler_out", h3, 3, NONE);
}

fn build_from(name: &TopologyName, p: &TopologyParams, first_twpa: usize) -> Result<NetworkGraph, NetError> {
    let mut b = Builder::new(p, first_twpa);
    let (inp, out, ch) = match name {
        TopologyName::Single => {
            single(&mut b);
            ("signal_in", "signal_out", Channel::Signal)
        }
        TopologyName::Balanced => {
            balanced(&mut b);
            ("signal_in", "signal_out", Channel::Signal)
        }
        TopologyName::Diplexed => {
            diplexed(&mut b);
            ("signal_in", "signal_out", Channel::Signal)
        }
        TopologyName::DiplexedBalanced => {
            diplexed_balanced(&mut b);
            ("signal_in", "signal_out", Channel::Signal)
        }
        TopologyName::WifSingle { dphi } => {
            wif_single(&mut b, *dphi);
            // in phase, the transmitted idler is read where the load sits
            if dphi.cos() > 0.0 {
                ("signal_in", "term_right", Channel::Idler)
            } else {
                ("signal_in", "signal_out", Channel::Signal)
            }
        }
        TopologyName::WifDouble => {
            wif_double(&mut b);
            ("signal_in", "idler_out", Channel::Idler)
        }
        TopologyName::WifDoubleCascaded => {
            let a = build_from(&TopologyName::WifDouble, p, first_twpa)?;
            let c = build_from(&TopologyName::WifDouble, p, first_twpa + a.twpa_count())?;
            return cascade_topologies(&a, &c);
        }
    };
    b.finish(inp, out, ch)
}

pub fn build_topology(name: &TopologyName, p: &TopologyParams) -> Result<NetworkGraph, NetError> {
    build_from(name, p, 0)
}

/// Feeds the readout of `a` into the input of `b`. Names gain `s1_` and
/// `s2_` prefixes. Reading an idler twice returns to the signal tone.
pub fn cascade_topologies(a: &NetworkGraph, b: &NetworkGraph) -> Result<NetworkGraph, NetError> {
    a.validate()?;
    b.validate()?;
    let mut g = NetworkGraph::new();
    let shift = a.nodes.len();
    for (pre, src, off) in [("s1_", a, 0), ("s2_", b, shift)] {
        for n in &src.nodes {
            g.add(format!("{pre}{}", n.name), n.model.clone());
        }
        for &(x, y) in &src.edges {
            g.connect(x.node + off, x.port, y.node + off, y.port);
        }
    }
    let out = a.external(&a.readout)?.at;
    let inp = b.external(&b.input)?.at;
    g.connect(out.node, out.port, inp.node + shift, inp.port);
    for e in a.externals.iter().filter(|e| e.name != a.readout) {
        g.attach(format!("s1_{}", e.name), e.kind, e.at.node, e.at.port, e.pump_weight);
    }
    for e in b.externals.iter().filter(|e| e.name != b.input) {
        g.attach(format!("s2_{}", e.name), e.kind, e.at.node + shift, e.at.port, e.pump_weight);
    }
    g.input = format!("s1_{}", a.input);
    g.readout = format!("s2_{}", b.readout);
    g.readout_channel = match a.readout_channel {
        Channel::Signal => b.readout_channel,
        Channel::Idler => b.readout_channel.other(),
    };
    g.validate()?;
    Ok(g)
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use crate::device::{build_device, DeviceConfig};
    use std::sync::OnceLock;

    pub fn params() -> TopologyParams {
        static P: OnceLock<TopologyParams> = OnceLock::new();
        P.get_or_init(|| {
            let d = build_device(&DeviceConfig::default()).unwrap();
            TopologyParams::new(TwpaModel::from_device(&d))
        })
        .clone()
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::params;
    use super::*;

    fn count(g: &NetworkGraph) -> (usize, usize, usize, usize) {
        let hyb = g.count(|m| matches!(m, ComponentModel::Hybrid90 { .. }));
        let dip = g.count(|m| matches!(m, ComponentModel::Diplexer { .. }));
        let term = g.externals_of(ExternalKind::Termination).count();
        (g.twpa_count(), hyb, dip, term)
    }

    #[test]
    fn part_counts() {
        let p = params();
        let c = |n| count(&build_topology(&n, &p).unwrap());
        assert_eq!(c(TopologyName::Single), (1, 0, 0, 0));
        assert_eq!(c(TopologyName::Balanced), (2, 2, 0, 2));
        assert_eq!(c(TopologyName::Diplexed), (1, 0, 2, 0));
        assert_eq!(c(TopologyName::DiplexedBalanced), (2, 2, 2, 2));
        assert_eq!(c(TopologyName::WifSingle { dphi: 0.0 }), (2, 2, 4, 2));
        assert_eq!(c(TopologyName::WifDouble), (4, 6, 8, 6));
        assert_eq!(c(TopologyName::WifDoubleCascaded), (8, 12, 16, 12));
        let g = build_topology(&TopologyName::WifDouble, &p).unwrap();
        for t in ["term_1", "term_2a", "term_2b", "term_3"] {
            assert_eq!(g.external(t).unwrap().kind, ExternalKind::Termination);
        }
        assert_eq!(g.externals_of(ExternalKind::PumpIn).count(), 4);
        assert_eq!(g.externals_of(ExternalKind::PumpOut).count(), 4);
    }

    #[test]
    fn unknown_name() {
        assert_eq!(
            TopologyName::parse("triple", 0.0),
            Err(NetError::UnknownTopology("triple".into()))
        );
        for n in TopologyName::table() {
            assert_eq!(TopologyName::parse(n.label(), PI).unwrap().label(), n.label());
        }
    }

    #[test]
    fn wif_single_phase_is_the_only_difference() {
        let p = params();
        let a = build_topology(&TopologyName::WifSingle { dphi: 0.0 }, &p).unwrap();
        let b = build_topology(&TopologyName::WifSingle { dphi: PI }, &p).unwrap();
        assert_eq!(a.nodes, b.nodes);
        assert_eq!(a.edges, b.edges);
        assert_eq!(a.externals.len(), b.externals.len());
        for (x, y) in a.externals.iter().zip(&b.externals) {
            assert_eq!((&x.name, x.kind, x.at), (&y.name, y.kind, y.at));
            if x.name == "pump_in_2" {
                assert!((x.pump_weight + y.pump_weight).norm() < 1e-15);
            } else {
                assert_eq!(x.pump_weight, y.pump_weight);
            }
        }
    }

    #[test]
    fn butler_style_pump_feed() {
        let c = pump_phase_network(0.0, Imbalance::default());
        for z in c {
            assert!((z.norm_sqr() - 0.25).abs() < 1e-15);
        }
        assert!((c[1] + c[0]).norm() < 1e-15);
        assert!((c[2] - c[0]).norm() < 1e-15);
        assert!((c[3] - c[1]).norm() < 1e-15);
        let total: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let d = 0.77;
        let s = pump_phase_network(d, Imbalance::default());
        for (x, y) in c.iter().zip(&s) {
            assert!((y - x * C64::from_polar(1.0, d)).norm() < 1e-15);
        }
    }

    #[test]
    fn cascade_wiring() {
        let p = params();
        let one = build_topology(&TopologyName::WifDouble, &p).unwrap();
        let g = build_topology(&TopologyName::WifDoubleCascaded, &p).unwrap();
        assert_eq!(g.input, "s1_signal_in");
        assert_eq!(g.readout, "s2_idler_out");
        assert_eq!(g.readout_channel, Channel::Signal);
        assert_eq!(g.externals.len(), 2 * one.externals.len() - 2);
        assert_eq!(g.edges.len(), 2 * one.edges.len() + 1);
        assert!(g.external("s1_idler_out").is_err() && g.external("s2_signal_in").is_err());
    }

    #[test]
    fn per_instance_override() {
        let mut p = params();
        let mut odd = p.twpa.clone();
        odd.cme.g0 *= 1.1;
        p.overrides = vec![None, None, None, Some(odd.clone())];
        let g = build_topology(&TopologyName::WifDouble, &p).unwrap();
        let models: Vec<&TwpaModel> = g
            .nodes
            .iter()
            .filter_map(|n| match &n.model {
                ComponentModel::Twpa(m) => Some(m.as_ref()),
                _ => None,
            })
            .collect();
        assert_eq!(models[3], &odd);
        assert!(models[..3].iter().all(|m| *m == &p.twpa));
    }
}
