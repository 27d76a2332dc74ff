//! Networks of amplifiers, couplers, diplexers and loads.
//!
//! A graph is a set of multiport nodes whose ports are either wired to one
//! another or exposed as named externals. Loads, sources and pump feeds are
//! externals of different kinds; a matched load simply never injects.

pub mod components;
pub mod report;
pub mod solve;
pub mod topology;
pub mod twpa;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cme::CmeError;
use crate::ladder::{LadderError, C64};
pub use crate::device::flux_mismatch_phase;
pub use components::{coupler_combining, diplexer_s, hybrid180_s, hybrid90_s, DiplexerModel, Imbalance};
pub use report::{leakage_report, IdlerLeakage, LeakageRow};
pub use solve::{solve_network, solve_pump, MultiToneSolution, PumpSolution};
pub use topology::{build_topology, cascade_topologies, pump_phase_network, TopologyName, TopologyParams};
pub use twpa::{twpa_block, PumpDirection, PumpState, TwpaModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("invalid network: {0}")]
    InvalidGraph(String),
    #[error("unknown topology `{0}`")]
    UnknownTopology(String),
    #[error("unknown external port `{0}`")]
    UnknownPort(String),
    #[error("pump not resolved: {0}")]
    PumpNotResolved(String),
    #[error("singular network (residual {residual:e})")]
    SingularNetwork { residual: f64 },
    #[error(transparent)]
    Cme(#[from] CmeError),
    #[error(transparent)]
    Ladder(#[from] LadderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ComponentModel {
    Hybrid90 { imbalance: Imbalance },
    Hybrid180 { imbalance: Imbalance },
    Diplexer { transition: f64, model: DiplexerModel },
    Twpa(Box<TwpaModel>),
}

impl ComponentModel {
    pub fn port_count(&self) -> usize {
        match self {
            ComponentModel::Hybrid90 { .. } | ComponentModel::Hybrid180 { .. } => 4,
            ComponentModel::Diplexer { .. } => 3,
            ComponentModel::Twpa(_) => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    pub model: ComponentModel,
}

/// Zero-based port of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PortRef {
    pub node: usize,
    pub port: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExternalKind {
    /// User-facing signal port.
    Port,
    /// Matched load.
    Termination,
    PumpIn,
    PumpOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct External {
    pub name: String,
    pub kind: ExternalKind,
    pub at: PortRef,
    /// Pump wave injected here per unit drive amplitude.
    pub pump_weight: C64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Signal,
    Idler,
}

impl Channel {
    pub fn index(self) -> usize {
        match self {
            Channel::Signal => 0,
            Channel::Idler => 1,
        }
    }

    pub fn other(self) -> Self {
        match self {
            Channel::Signal => Channel::Idler,
            Channel::Idler => Channel::Signal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<(PortRef, PortRef)>,
    pub externals: Vec<External>,
    /// Where the signal is injected.
    pub input: String,
    /// Where the amplified tone is read, and at which tone.
    pub readout: String,
    pub readout_channel: Channel,
}

impl NetworkGraph {
    pub fn new() -> Self {
        Self {
            nodes: vec![],
            edges: vec![],
            externals: vec![],
            input: String::new(),
            readout: String::new(),
            readout_channel: Channel::Signal,
        }
    }

    pub fn add(&mut self, name: impl Into<String>, model: ComponentModel) -> usize {
        self.nodes.push(Node { name: name.into(), model });
        self.nodes.len() - 1
    }

    pub fn connect(&mut self, a: usize, pa: usize, b: usize, pb: usize) {
        self.edges.push((PortRef { node: a, port: pa }, PortRef { node: b, port: pb }));
    }

    pub fn attach(&mut self, name: impl Into<String>, kind: ExternalKind, node: usize, port: usize, pump_weight: C64) {
        self.externals.push(External {
            name: name.into(),
            kind,
            at: PortRef { node, port },
            pump_weight,
        });
    }

    pub fn external_index(&self, name: &str) -> Result<usize, NetError> {
        self.externals
            .iter()
            .position(|e| e.name == name)
            .ok_or_else(|| NetError::UnknownPort(name.to_string()))
    }

    pub fn external(&self, name: &str) -> Result<&External, NetError> {
        Ok(&self.externals[self.external_index(name)?])
    }

    pub fn count(&self, pred: impl Fn(&ComponentModel) -> bool) -> usize {
        self.nodes.iter().filter(|n| pred(&n.model)).count()
    }

    pub fn twpa_count(&self) -> usize {
        self.count(|m| matches!(m, ComponentModel::Twpa(_)))
    }

    pub fn externals_of(&self, kind: ExternalKind) -> impl Iterator<Item = &External> {
        self.externals.iter().filter(move |e| e.kind == kind)
    }

    /// Scales the pump injected at every pump-carrying external whose name
    /// starts with `prefix`.
    pub fn scale_pump(&mut self, prefix: &str, factor: f64) {
        for e in self.externals.iter_mut().filter(|e| e.name.starts_with(prefix)) {
            e.pump_weight *= factor;
        }
    }

    /// Pump frequency shared by every amplifier.
    pub fn pump_frequency(&self) -> Result<f64, NetError> {
        let mut f = None;
        for n in &self.nodes {
            if let ComponentModel::Twpa(m) = &n.model {
                match f {
                    None => f = Some(m.f_p()),
                    Some(x) if x != m.f_p() => {
                        return Err(NetError::InvalidGraph("amplifiers disagree on the pump frequency".into()))
                    }
                    _ => {}
                }
            }
        }
        f.ok_or_else(|| NetError::InvalidGraph("no amplifier in the network".into()))
    }

    pub fn validate(&self) -> Result<(), NetError> {
        let bad = |s: String| Err(NetError::InvalidGraph(s));
        let mut used: HashSet<PortRef> = HashSet::new();
        let mut claim = |p: PortRef| -> Result<(), NetError> {
            let Some(n) = self.nodes.get(p.node) else {
                return Err(NetError::InvalidGraph(format!("no node {}", p.node)));
            };
            if p.port >= n.model.port_count() {
                return Err(NetError::InvalidGraph(format!("{} has no port {}", n.name, p.port + 1)));
            }
            if !used.insert(p) {
                return Err(NetError::InvalidGraph(format!("{} port {} used twice", n.name, p.port + 1)));
            }
            Ok(())
        };
        for &(a, b) in &self.edges {
            claim(a)?;
            claim(b)?;
        }
        let mut names = HashSet::new();
        for e in &self.externals {
            claim(e.at)?;
            if !names.insert(e.name.as_str()) {
                return bad(format!("external `{}` defined twice", e.name));
            }
        }
        for (i, n) in self.nodes.iter().enumerate() {
            for port in 0..n.model.port_count() {
                if !used.contains(&PortRef { node: i, port }) {
                    return bad(format!("{} port {} left open", n.name, port + 1));
                }
            }
        }
        if self.nodes.is_empty() {
            return bad("empty network".into());
        }
        let mut adj: HashMap<usize, Vec<usize>> = HashMap::new();
        for &(a, b) in &self.edges {
            adj.entry(a.node).or_default().push(b.node);
            adj.entry(b.node).or_default().push(a.node);
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(n) = stack.pop() {
            for &m in adj.get(&n).into_iter().flatten() {
                if !seen[m] {
                    seen[m] = true;
                    stack.push(m);
                }
            }
        }
        if let Some(i) = seen.iter().position(|s| !s) {
            return bad(format!("{} is not connected to the rest", self.nodes[i].name));
        }
        self.external_index(&self.input)?;
        self.external_index(&self.readout)?;
        Ok(())
    }
}

impl Default for NetworkGraph {
    fn default() -> Self {
        Self::new()
    }
}
