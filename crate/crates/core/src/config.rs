//! JSON input schema (version 1): parsing, resolution of names to indices,
//! structural validation, and canonical serialization.
//!
//! A document has top-level keys `schema` (must be `1`), `network`, `flows`,
//! and an optional `sim` section for the simulator. Parsing resolves every
//! router/port/flow name, checks structural invariants (connected paths,
//! unique ids, positive parameters) and produces a [`ParsedInput`]; semantic
//! admission checks live in [`crate::model::validate`].

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Flow, Hop, Link, NetworkModel, Port, Router};
use crate::sim::SimSettings;

/// Everything a document describes, fully linked.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedInput {
    pub model: NetworkModel,
    pub flows: Vec<Flow>,
    /// Present only when the document carries a `sim` section.
    pub sim: Option<SimSettings>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("unsupported schema version {0} (this tool reads version 1)")]
    SchemaVersion(u64),
    /// A structural problem, located by a JSON-path-like string such as
    /// `flows[0].path[2]`.
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl From<serde_json::Error> for ParseError {
    fn from(e: serde_json::Error) -> Self {
        ParseError::Json(e.to_string())
    }
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ParseError {
    ParseError::Invalid { path: path.into(), message: message.into() }
}

// ---------------------------------------------------------------------------
// Raw (wire) layer
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RawDocument {
    schema: u64,
    network: RawNetwork,
    flows: Vec<RawFlow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sim: Option<RawSim>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawNetwork {
    capacity: f64,
    epsilon: f64,
    buffer: f64,
    #[serde(default = "default_time_unit")]
    time_unit: String,
    routers: Vec<RawRouter>,
    links: Vec<RawLink>,
}

fn default_time_unit() -> String {
    "time units".to_string()
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRouter {
    id: String,
    ports: Vec<RawPort>,
}

/// A port is either a bare name or an object carrying a buffer override.
#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum RawPort {
    Name(String),
    Spec { id: String, buffer: f64 },
}

#[derive(Debug, Serialize, Deserialize)]
struct RawLink {
    from: String,
    from_port: String,
    to: String,
    to_port: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawFlow {
    id: String,
    period: f64,
    deadline: f64,
    length: f64,
    #[serde(default)]
    jitter: f64,
    path: Vec<RawHop>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawHop {
    router: String,
    in_port: String,
    out_port: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawSim {
    horizon: f64,
    #[serde(default = "default_trials")]
    trials: u32,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_flit_size")]
    flit_size: f64,
    /// Release offset per flow id; flows not listed start at 0.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    offsets: BTreeMap<String, f64>,
}

fn default_trials() -> u32 {
    1
}

fn default_flit_size() -> f64 {
    1.0
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

fn check_number(value: f64, path: &str, what: &str, min: f64, strict: bool) -> Result<(), ParseError> {
    if !value.is_finite() {
        return Err(invalid(path, format!("{what} must be a finite number")));
    }
    let ok = if strict { value > min } else { value >= min };
    if !ok {
        let rel = if strict { ">" } else { ">=" };
        return Err(invalid(path, format!("{what} must be {rel} {min}, got {value}")));
    }
    Ok(())
}

/// Parse and link a version-1 document.
pub fn parse_document(text: &str) -> Result<ParsedInput, ParseError> {
    let raw: RawDocument = serde_json::from_str(text)?;
    if raw.schema != 1 {
        return Err(ParseError::SchemaVersion(raw.schema));
    }

    let net = &raw.network;
    check_number(net.capacity, "network.capacity", "capacity", 0.0, true)?;
    check_number(net.epsilon, "network.epsilon", "epsilon", 0.0, false)?;
    check_number(net.buffer, "network.buffer", "buffer", 0.0, true)?;

    // Routers and ports, with name -> index maps.
    let mut routers = Vec::with_capacity(net.routers.len());
    let mut router_ix: BTreeMap<&str, usize> = BTreeMap::new();
    let mut port_ix: Vec<BTreeMap<&str, usize>> = Vec::with_capacity(net.routers.len());
    for (r, rr) in net.routers.iter().enumerate() {
        let rpath = format!("network.routers[{r}]");
        if router_ix.insert(&rr.id, r).is_some() {
            return Err(invalid(rpath, format!("duplicate router id {:?}", rr.id)));
        }
        let mut ports = Vec::with_capacity(rr.ports.len());
        let mut names: BTreeMap<&str, usize> = BTreeMap::new();
        for (p, rp) in rr.ports.iter().enumerate() {
            let ppath = format!("{rpath}.ports[{p}]");
            let (id, buffer) = match rp {
                RawPort::Name(id) => (id, None),
                RawPort::Spec { id, buffer } => {
                    check_number(*buffer, &ppath, "buffer override", 0.0, true)?;
                    (id, Some(*buffer))
                }
            };
            if names.insert(id, p).is_some() {
                return Err(invalid(ppath, format!("duplicate port id {id:?} on router {:?}", rr.id)));
            }
            ports.push(Port { id: id.clone(), buffer });
        }
        port_ix.push(names);
        routers.push(Router { id: rr.id.clone(), ports });
    }

    let resolve_port = |router: &str, port: &str, path: &str| -> Result<(usize, usize), ParseError> {
        let r = *router_ix
            .get(router)
            .ok_or_else(|| invalid(path, format!("unknown router {router:?}")))?;
        let p = *port_ix[r]
            .get(port)
            .ok_or_else(|| invalid(path, format!("unknown port {port:?} on router {router:?}")))?;
        Ok((r, p))
    };

    // Links: resolve endpoints, enforce one link per output port and per
    // input port (each port is a point-to-point wire).
    let mut links = Vec::with_capacity(net.links.len());
    let mut out_used: BTreeSet<(usize, usize)> = BTreeSet::new();
    let mut in_used: BTreeSet<(usize, usize)> = BTreeSet::new();
    for (l, rl) in net.links.iter().enumerate() {
        let lpath = format!("network.links[{l}]");
        let from = resolve_port(&rl.from, &rl.from_port, &lpath)?;
        let to = resolve_port(&rl.to, &rl.to_port, &lpath)?;
        if !out_used.insert(from) {
            return Err(invalid(
                lpath,
                format!("output port ({}, {}) already drives another link", rl.from, rl.from_port),
            ));
        }
        if !in_used.insert(to) {
            return Err(invalid(
                lpath,
                format!("input port ({}, {}) is already fed by another link", rl.to, rl.to_port),
            ));
        }
        links.push(Link { from, to });
    }

    let model = NetworkModel {
        capacity: net.capacity,
        epsilon: net.epsilon,
        buffer: net.buffer,
        time_unit: net.time_unit.clone(),
        routers,
        links,
    };

    // Flows: parameters, port resolution, connectivity, simple paths.
    let mut flows = Vec::with_capacity(raw.flows.len());
    let mut flow_ix: BTreeMap<&str, usize> = BTreeMap::new();
    for (k, rf) in raw.flows.iter().enumerate() {
        let fpath = format!("flows[{k}]");
        if flow_ix.insert(&rf.id, k).is_some() {
            return Err(invalid(fpath, format!("duplicate flow id {:?}", rf.id)));
        }
        check_number(rf.period, &fpath, "period", 0.0, true)?;
        check_number(rf.deadline, &fpath, "deadline", 0.0, true)?;
        check_number(rf.length, &fpath, "length", 1.0, false)?;
        check_number(rf.jitter, &fpath, "jitter", 0.0, false)?;
        if rf.path.is_empty() {
            return Err(invalid(format!("{fpath}.path"), "path must have at least one hop"));
        }

        let mut path = Vec::with_capacity(rf.path.len());
        let mut seen_routers: BTreeSet<usize> = BTreeSet::new();
        for (h, rh) in rf.path.iter().enumerate() {
            let hpath = format!("{fpath}.path[{h}]");
            let (router, in_port) = resolve_port(&rh.router, &rh.in_port, &hpath)?;
            let (_, out_port) = resolve_port(&rh.router, &rh.out_port, &hpath)?;
            if !seen_routers.insert(router) {
                return Err(invalid(hpath, format!("path revisits router {:?}", rh.router)));
            }
            if h > 0 {
                let prev: &Hop = &path[h - 1];
                let connected = model
                    .link_from(prev.router, prev.out_port)
                    .is_some_and(|link| link.to == (router, in_port));
                if !connected {
                    return Err(invalid(
                        hpath,
                        format!(
                            "unconnected hop: no link from ({}, {}) to ({}, {})",
                            model.router_id(prev.router),
                            model.port_id(prev.router, prev.out_port),
                            rh.router,
                            rh.in_port,
                        ),
                    ));
                }
            }
            path.push(Hop { router, in_port, out_port });
        }

        flows.push(Flow {
            id: rf.id.clone(),
            period: rf.period,
            deadline: rf.deadline,
            length: rf.length,
            jitter: rf.jitter,
            path,
        });
    }

    // Simulator settings, if any.
    let sim = match &raw.sim {
        None => None,
        Some(rs) => {
            check_number(rs.horizon, "sim", "horizon", 0.0, true)?;
            check_number(rs.flit_size, "sim", "flit_size", 0.0, true)?;
            if rs.trials == 0 {
                return Err(invalid("sim", "trials must be >= 1"));
            }
            let mut offsets = vec![0.0; flows.len()];
            for (id, off) in &rs.offsets {
                let opath = format!("sim.offsets.{id}");
                let k = *flow_ix
                    .get(id.as_str())
                    .ok_or_else(|| invalid(&opath, format!("unknown flow id {id:?}")))?;
                check_number(*off, &opath, "offset", 0.0, false)?;
                offsets[k] = *off;
            }
            Some(SimSettings {
                horizon: rs.horizon,
                trials: rs.trials,
                seed: rs.seed,
                flit_size: rs.flit_size,
                offsets,
            })
        }
    };

    Ok(ParsedInput { model, flows, sim })
}

// ---------------------------------------------------------------------------
// Canonical serialization
// ---------------------------------------------------------------------------

/// Render a parsed input back to canonical JSON: declaration order kept,
/// defaults normalized, ports in bare-name form unless they carry an
/// override, offsets listed only when non-zero. `parse -> serialize ->
/// parse` is the identity on this form.
pub fn serialize_document(input: &ParsedInput) -> String {
    let model = &input.model;
    let raw = RawDocument {
        schema: 1,
        network: RawNetwork {
            capacity: model.capacity,
            epsilon: model.epsilon,
            buffer: model.buffer,
            time_unit: model.time_unit.clone(),
            routers: model
                .routers
                .iter()
                .map(|r| RawRouter {
                    id: r.id.clone(),
                    ports: r
                        .ports
                        .iter()
                        .map(|p| match p.buffer {
                            None => RawPort::Name(p.id.clone()),
                            Some(b) => RawPort::Spec { id: p.id.clone(), buffer: b },
                        })
                        .collect(),
                })
                .collect(),
            links: model
                .links
                .iter()
                .map(|l| RawLink {
                    from: model.router_id(l.from.0).to_string(),
                    from_port: model.port_id(l.from.0, l.from.1).to_string(),
                    to: model.router_id(l.to.0).to_string(),
                    to_port: model.port_id(l.to.0, l.to.1).to_string(),
                })
                .collect(),
        },
        flows: input
            .flows
            .iter()
            .map(|f| RawFlow {
                id: f.id.clone(),
                period: f.period,
                deadline: f.deadline,
                length: f.length,
                jitter: f.jitter,
                path: f
                    .path
                    .iter()
                    .map(|h| RawHop {
                        router: model.router_id(h.router).to_string(),
                        in_port: model.port_id(h.router, h.in_port).to_string(),
                        out_port: model.port_id(h.router, h.out_port).to_string(),
                    })
                    .collect(),
            })
            .collect(),
        sim: input.sim.as_ref().map(|s| RawSim {
            horizon: s.horizon,
            trials: s.trials,
            seed: s.seed,
            flit_size: s.flit_size,
            offsets: input
                .flows
                .iter()
                .zip(&s.offsets)
                .filter(|(_, &o)| o != 0.0)
                .map(|(f, &o)| (f.id.clone(), o))
                .collect(),
        }),
    };
    serde_json::to_string_pretty(&raw).expect("document serialization cannot fail") + "\n"
}
