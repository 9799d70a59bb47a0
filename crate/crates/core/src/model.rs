//! Linked network model: routers, ports, links, flows and the admission
//! checks that every analysis entry point relies on.
//!
//! Instances are normally produced by [`crate::config::parse_document`],
//! which resolves names to indices and rejects structurally broken input.
//! [`validate`] then covers the semantic rules: port utilisation below
//! capacity, weighted shares large enough for every flow, sane buffer
//! sizes, and a feed-forward burst-propagation dependency graph.

use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use crate::analysis;
use crate::minplus::ArrivalCurve;

/// A named input or output port, optionally overriding the global input
/// buffer size for the buffer it fronts.
#[derive(Debug, Clone, PartialEq)]
pub struct Port {
    pub id: String,
    pub buffer: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Router {
    pub id: String,
    pub ports: Vec<Port>,
}

/// One endpoint of a link: `(router index, port index)`.
pub type PortRef = (usize, usize);

/// A directed link between an output port and the input port it feeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Link {
    pub from: PortRef,
    pub to: PortRef,
}

/// The static side of an instance: topology plus global parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    /// Link capacity `C` (bytes per time unit), identical on every link.
    pub capacity: f64,
    /// Per-router relay latency (time units).
    pub epsilon: f64,
    /// Default input buffer size (bytes).
    pub buffer: f64,
    /// Unit label for reports ("ms", "us", ...). Purely cosmetic.
    pub time_unit: String,
    pub routers: Vec<Router>,
    pub links: Vec<Link>,
}

impl NetworkModel {
    /// The link leaving `(router, port)`, if any.
    pub fn link_from(&self, router: usize, port: usize) -> Option<&Link> {
        self.links.iter().find(|l| l.from == (router, port))
    }

    /// The link feeding `(router, port)`, if any.
    pub fn link_into(&self, router: usize, port: usize) -> Option<&Link> {
        self.links.iter().find(|l| l.to == (router, port))
    }

    /// Effective buffer size in front of `(router, in_port)`.
    pub fn buffer_at(&self, router: usize, port: usize) -> f64 {
        self.routers[router].ports[port].buffer.unwrap_or(self.buffer)
    }

    pub fn router_id(&self, router: usize) -> &str {
        &self.routers[router].id
    }

    pub fn port_id(&self, router: usize, port: usize) -> &str {
        &self.routers[router].ports[port].id
    }
}

/// One step of a flow's path: the router it crosses and the input/output
/// ports it uses there. The first hop's input port is the injection point,
/// the last hop's output port the ejection point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop {
    pub router: usize,
    pub in_port: usize,
    pub out_port: usize,
}

/// A periodic flow with a fixed route.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: String,
    /// Minimum packet inter-arrival time `T` (time units).
    pub period: f64,
    /// Relative deadline (time units).
    pub deadline: f64,
    /// Maximum packet length `L` (bytes).
    pub length: f64,
    /// Maximum release jitter `J` (time units).
    pub jitter: f64,
    pub path: Vec<Hop>,
}

impl Flow {
    /// Long-run rate `L / T` in bytes per time unit.
    pub fn rate(&self) -> f64 {
        self.length / self.period
    }

    /// Token-bucket envelope at the source: a packet of `L` bytes released
    /// every `T` with jitter `J` is bounded by burst `L * (1 + J / T)` and
    /// rate `L / T`.
    pub fn arrival_curve(&self) -> ArrivalCurve {
        ArrivalCurve::new(self.length * (1.0 + self.jitter / self.period), self.rate())
    }
}

/// Who uses which port: for every output port, the flows grouped by the
/// input port they come from (the arbitration aggregates), plus each flow's
/// hop position per router.
#[derive(Debug, Clone)]
pub struct PortMaps {
    /// `(router, out_port) -> in_port -> flows`, all in declaration order.
    aggregates: BTreeMap<(usize, usize), BTreeMap<usize, Vec<usize>>>,
    /// Per flow: router -> hop index.
    positions: Vec<BTreeMap<usize, usize>>,
}

const NO_FLOWS: &[usize] = &[];

impl PortMaps {
    pub fn build(_model: &NetworkModel, flows: &[Flow]) -> PortMaps {
        let mut aggregates: BTreeMap<(usize, usize), BTreeMap<usize, Vec<usize>>> = BTreeMap::new();
        let mut positions = Vec::with_capacity(flows.len());
        for (k, flow) in flows.iter().enumerate() {
            let mut pos = BTreeMap::new();
            for (h, hop) in flow.path.iter().enumerate() {
                let prev = pos.insert(hop.router, h);
                debug_assert!(prev.is_none(), "path revisits a router");
                aggregates
                    .entry((hop.router, hop.out_port))
                    .or_default()
                    .entry(hop.in_port)
                    .or_default()
                    .push(k);
            }
            positions.push(pos);
        }
        PortMaps { aggregates, positions }
    }

    /// Hop index of `flow` at `router`, if the path crosses it.
    pub fn hop_index(&self, flow: usize, router: usize) -> Option<usize> {
        self.positions[flow].get(&router).copied()
    }

    /// Flows entering `(router, out_port)` from `in_port`.
    pub fn aggregate(&self, router: usize, out_port: usize, in_port: usize) -> &[usize] {
        self.aggregates
            .get(&(router, out_port))
            .and_then(|m| m.get(&in_port))
            .map_or(NO_FLOWS, |v| v.as_slice())
    }

    /// All `(in_port, flows)` aggregates competing for `(router, out_port)`.
    pub fn aggregates_at(
        &self,
        router: usize,
        out_port: usize,
    ) -> impl Iterator<Item = (usize, &[usize])> {
        self.aggregates
            .get(&(router, out_port))
            .into_iter()
            .flat_map(|m| m.iter().map(|(p, v)| (*p, v.as_slice())))
    }

    /// Every output port that carries traffic.
    pub fn outputs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.aggregates.keys().copied()
    }
}

/// A failed admission check. The variants mirror the checks in [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Aggregate long-run rate through an output port reaches capacity.
    PortOverload {
        router: String,
        port: String,
        utilization: f64,
        capacity: f64,
    },
    /// A flow's rate exceeds the weighted share of its aggregate.
    WeightedShareExceeded {
        flow: String,
        router: String,
        out_port: String,
        in_port: String,
        rate: f64,
        share: f64,
    },
    /// An input buffer smaller than one byte cannot hold any flit.
    BufferTooSmall {
        router: Option<String>,
        port: Option<String>,
        buffer: f64,
    },
    /// Burst propagation has no feed-forward order; analysis would chase
    /// its own tail. Nodes are `flow@router` labels.
    CyclicDependency { nodes: Vec<String> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::PortOverload { router, port, utilization, capacity } => write!(
                f,
                "output port ({router}, {port}) overloaded: {utilization} >= capacity {capacity}"
            ),
            Violation::WeightedShareExceeded { flow, router, out_port, in_port, rate, share } => {
                write!(
                    f,
                    "flow {flow} rate {rate} exceeds weighted share {share} of aggregate ({router}, {out_port}) from {in_port}"
                )
            }
            Violation::BufferTooSmall { router, port, buffer } => match (router, port) {
                (Some(r), Some(p)) => {
                    write!(f, "buffer at ({r}, {p}) is {buffer}, must be >= 1 byte")
                }
                _ => write!(f, "global buffer is {buffer}, must be >= 1 byte"),
            },
            Violation::CyclicDependency { nodes } => {
                write!(f, "burst propagation dependency cycle involving {}", nodes.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Run every admission check and report all violations:
///
/// 1. strict utilisation: the summed rate through each output port stays
///    below capacity,
/// 2. weighted shares: each flow's rate fits inside its aggregate's
///    rate-proportional share of the port,
/// 3. buffers of at least one byte, globally and per override,
/// 4. a feed-forward burst-propagation dependency graph.
pub fn validate(model: &NetworkModel, flows: &[Flow]) -> ValidationReport {
    let maps = PortMaps::build(model, flows);
    let mut violations = Vec::new();

    for (router, out_port) in maps.outputs() {
        let port_rate: f64 = maps
            .aggregates_at(router, out_port)
            .flat_map(|(_, fs)| fs.iter())
            .map(|&k| flows[k].rate())
            .sum();
        if port_rate >= model.capacity {
            violations.push(Violation::PortOverload {
                router: model.router_id(router).to_string(),
                port: model.port_id(router, out_port).to_string(),
                utilization: port_rate,
                capacity: model.capacity,
            });
        }
        for (in_port, members) in maps.aggregates_at(router, out_port) {
            let agg_rate: f64 = members.iter().map(|&k| flows[k].rate()).sum();
            let share = agg_rate / port_rate * model.capacity;
            for &k in members {
                if flows[k].rate() > share * (1.0 + 1e-12) {
                    violations.push(Violation::WeightedShareExceeded {
                        flow: flows[k].id.clone(),
                        router: model.router_id(router).to_string(),
                        out_port: model.port_id(router, out_port).to_string(),
                        in_port: model.port_id(router, in_port).to_string(),
                        rate: flows[k].rate(),
                        share,
                    });
                }
            }
        }
    }

    if model.buffer < 1.0 {
        violations.push(Violation::BufferTooSmall { router: None, port: None, buffer: model.buffer });
    }
    for (r, router) in model.routers.iter().enumerate() {
        for (p, port) in router.ports.iter().enumerate() {
            if let Some(b) = port.buffer {
                if b < 1.0 {
                    violations.push(Violation::BufferTooSmall {
                        router: Some(model.router_id(r).to_string()),
                        port: Some(model.port_id(r, p).to_string()),
                        buffer: b,
                    });
                }
            }
        }
    }

    if let Err(nodes) = analysis::propagation_order(model, flows, &maps) {
        let nodes = nodes
            .into_iter()
            .map(|(k, h)| format!("{}@{}", flows[k].id, model.router_id(flows[k].path[h].router)))
            .collect();
        violations.push(Violation::CyclicDependency { nodes });
    }

    ValidationReport { violations }
}
