//! End-to-end delay analysis: per-router residual service curves, burst
//! propagation in feed-forward order, direct-blocking delay bounds, the
//! recursive indirect-blocking bound, and schedulability verdicts.
//!
//! The pipeline per run:
//!
//! 1. Group flows by (router, output port, input port) and derive each
//!    aggregate's weighted share of the port.
//! 2. Order all (flow, hop) pairs so that every burst value is computed
//!    before anything consumes it; refuse circular instances.
//! 3. Walk that order, building each router's residual service for each
//!    flow (weighted share, shifted by the head-of-line delay that
//!    co-buffered flows bound for other ports can impose, reduced by the
//!    co-buffered flows bound for the same port) and pushing the flow's
//!    arrival curve through it to the next hop.
//! 4. Bound each flow's transmission + direct blocking delay over its full
//!    path, then add the recursive indirect-blocking bound obtained from
//!    the blocking sets of the active mode.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::blocking::{
    describe_subpath, BlockingMode, BlockingReport, Contention, FlowBlockingReport, Subpath,
};
use crate::minplus::{self, ArrivalCurve, MinplusError, ServiceCurve};
use crate::model::{Flow, NetworkModel, PortMaps};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    /// Burst propagation has no feed-forward order. Carries `flow@router`
    /// labels of the nodes stuck on a cycle.
    #[error("burst propagation is circular: {}", nodes.join(", "))]
    CyclicDependency { nodes: Vec<String> },
    /// A residual service ran out of rate somewhere along a path.
    #[error("{context}: {source}")]
    Unstable {
        context: String,
        #[source]
        source: MinplusError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Schedulable,
    NotSchedulable,
    Unstable,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Schedulable => write!(f, "schedulable"),
            Verdict::NotSchedulable => write!(f, "not-schedulable"),
            Verdict::Unstable => write!(f, "unstable"),
        }
    }
}

/// Worst-case burst of one flow entering one router on its path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouterBurst {
    pub router: String,
    /// `None` when an upstream instability left the value unbounded.
    pub burst: Option<f64>,
}

/// Delay bounds and verdict for one flow. Delay fields are `None` when the
/// bound does not exist (instability), in which case `note` explains why.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowResult {
    pub flow: String,
    /// Contention-free transit time: transmission plus per-router relay.
    pub d_tr: f64,
    /// Transmission + direct blocking bound over the full path.
    pub d_db: Option<f64>,
    /// Recursive indirect blocking bound.
    pub d_ib: Option<f64>,
    /// Total end-to-end bound: `d_db + d_ib`.
    pub d_eed: Option<f64>,
    /// Informational split of `d_eed` into transit + everything else.
    pub d_b: Option<f64>,
    pub deadline: f64,
    pub verdict: Verdict,
    /// Worst-case burst entering each router on the path, in path order.
    pub bursts: Vec<RouterBurst>,
    /// Deepest recursion level the indirect bound visited (1 = no nesting).
    pub indirect_depth: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub mode: BlockingMode,
    /// Buffer size (bytes) the blocking sets were computed with.
    pub buffer: f64,
    pub flows: Vec<FlowResult>,
    pub blocking: BlockingReport,
}

impl AnalysisReport {
    pub fn all_schedulable(&self) -> bool {
        self.flows.iter().all(|f| f.verdict == Verdict::Schedulable)
    }

    pub fn any_unstable(&self) -> bool {
        self.flows.iter().any(|f| f.verdict == Verdict::Unstable)
    }
}

/// Contention-free transit bound: one transmission delay plus the relay
/// latency of every router on the path.
pub fn transit_delay(model: &NetworkModel, flow: &Flow) -> f64 {
    flow.length / model.capacity + flow.path.len() as f64 * model.epsilon
}

/// A (flow, hop index) node of the burst-propagation dependency graph.
type Node = (usize, usize);

/// Order all (flow, hop) nodes so that every node comes after the nodes
/// whose burst values its router service consumes: its own upstream hop,
/// plus — at that hop's router — every co-buffered flow that either shares
/// the output port (blind multiplexing competitor) or is a direct blocker
/// bound for another port (head-of-line demultiplexing). `Err` returns the
/// nodes left on cycles.
pub(crate) fn propagation_order(
    _model: &NetworkModel,
    flows: &[Flow],
    maps: &PortMaps,
) -> Result<Vec<Node>, Vec<Node>> {
    let ctx = Contention::new(flows);
    let direct: Vec<BTreeSet<usize>> = (0..flows.len()).map(|k| ctx.direct_set(k)).collect();

    let mut adj: BTreeMap<Node, BTreeSet<Node>> = BTreeMap::new();
    let mut indegree: BTreeMap<Node, usize> = BTreeMap::new();
    for (k, f) in flows.iter().enumerate() {
        for h in 0..f.path.len() {
            indegree.insert((k, h), 0);
        }
    }
    let add_edge = |adj: &mut BTreeMap<Node, BTreeSet<Node>>,
                        indegree: &mut BTreeMap<Node, usize>,
                        from: Node,
                        to: Node| {
        if adj.entry(from).or_default().insert(to) {
            *indegree.get_mut(&to).unwrap() += 1;
        }
    };

    for (k, f) in flows.iter().enumerate() {
        for h in 0..f.path.len().saturating_sub(1) {
            add_edge(&mut adj, &mut indegree, (k, h), (k, h + 1));
            let hop = f.path[h];
            for (j, g) in flows.iter().enumerate() {
                if j == k {
                    continue;
                }
                let Some(hj) = maps.hop_index(j, hop.router) else { continue };
                let other = g.path[hj];
                if other.in_port != hop.in_port {
                    continue;
                }
                let consumes = if other.out_port == hop.out_port {
                    true // same aggregate: arrival curve feeds the residual
                } else {
                    direct[k].contains(&j) // head-of-line burst ahead of k
                };
                if consumes {
                    add_edge(&mut adj, &mut indegree, (j, hj), (k, h + 1));
                }
            }
        }
    }

    let mut ready: BTreeSet<Node> = indegree
        .iter()
        .filter(|(_, &d)| d == 0)
        .map(|(&n, _)| n)
        .collect();
    let mut order = Vec::with_capacity(indegree.len());
    while let Some(&node) = ready.iter().next() {
        ready.remove(&node);
        order.push(node);
        if let Some(next) = adj.get(&node) {
            for &to in next {
                let d = indegree.get_mut(&to).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(to);
                }
            }
        }
    }
    if order.len() == indegree.len() {
        Ok(order)
    } else {
        let stuck: Vec<Node> = indegree
            .iter()
            .filter(|(n, _)| !order.contains(n))
            .map(|(&n, _)| n)
            .collect();
        Err(stuck)
    }
}

type CurveResult = Result<ArrivalCurve, AnalysisError>;
type ServiceResult = Result<ServiceCurve, AnalysisError>;

struct Engine<'a> {
    model: &'a NetworkModel,
    flows: &'a [Flow],
    maps: PortMaps,
    ctx: Contention<'a>,
    mode: BlockingMode,
    buffer: f64,
    /// Direct blockers of each flow over the whole flow set.
    direct: Vec<BTreeSet<usize>>,
    /// `arrivals[k][h]`: k's arrival curve entering path position h.
    arrivals: Vec<Vec<Option<CurveResult>>>,
    /// `services[k][h]`: the residual service k receives at position h.
    services: Vec<Vec<Option<ServiceResult>>>,
}

impl<'a> Engine<'a> {
    fn new(
        model: &'a NetworkModel,
        flows: &'a [Flow],
        mode: BlockingMode,
        buffer: f64,
    ) -> Result<Engine<'a>, AnalysisError> {
        let maps = PortMaps::build(model, flows);
        let ctx = Contention::new(flows);
        let direct: Vec<BTreeSet<usize>> = (0..flows.len()).map(|k| ctx.direct_set(k)).collect();

        let order = propagation_order(model, flows, &maps).map_err(|nodes| {
            AnalysisError::CyclicDependency {
                nodes: nodes
                    .into_iter()
                    .map(|(k, h)| {
                        format!("{}@{}", flows[k].id, model.router_id(flows[k].path[h].router))
                    })
                    .collect(),
            }
        })?;

        let mut engine = Engine {
            model,
            flows,
            maps,
            ctx,
            mode,
            buffer,
            direct,
            arrivals: flows.iter().map(|f| vec![None; f.path.len()]).collect(),
            services: flows.iter().map(|f| vec![None; f.path.len()]).collect(),
        };

        for k in 0..flows.len() {
            engine.arrivals[k][0] = Some(Ok(flows[k].arrival_curve()));
        }
        for (k, h) in order {
            if h == 0 {
                continue;
            }
            let service = engine.residual_service(k, h - 1);
            let next = match (&engine.arrivals[k][h - 1], &service) {
                (Some(Ok(a)), Ok(s)) => a.deconvolve(*s).map_err(|e| AnalysisError::Unstable {
                    context: engine.locate(k, h - 1),
                    source: e,
                }),
                (Some(Err(e)), _) => Err(e.clone()),
                (None, _) => unreachable!("propagation order visits hops upstream first"),
                (_, Err(e)) => Err(e.clone()),
            };
            engine.services[k][h - 1] = Some(service);
            engine.arrivals[k][h] = Some(next);
        }
        for (k, f) in flows.iter().enumerate() {
            let last = f.path.len() - 1;
            if engine.services[k][last].is_none() {
                let service = engine.residual_service(k, last);
                engine.services[k][last] = Some(service);
            }
        }
        Ok(engine)
    }

    fn locate(&self, k: usize, h: usize) -> String {
        format!(
            "flow {} at router {}",
            self.flows[k].id,
            self.model.router_id(self.flows[k].path[h].router)
        )
    }

    fn arrival(&self, k: usize, h: usize) -> CurveResult {
        self.arrivals[k][h]
            .clone()
            .expect("burst propagation covered every hop")
    }

    /// The residual service flow `k` receives at path position `h`: its
    /// aggregate's weighted share of the output port, delayed by the
    /// head-of-line bursts of co-buffered direct blockers bound for other
    /// ports, minus the co-buffered traffic bound for the same port.
    fn residual_service(&self, k: usize, h: usize) -> ServiceResult {
        let hop = self.flows[k].path[h];
        let port_rate: f64 = self
            .maps
            .aggregates_at(hop.router, hop.out_port)
            .flat_map(|(_, fs)| fs.iter())
            .map(|&j| self.flows[j].rate())
            .sum();
        let members = self.maps.aggregate(hop.router, hop.out_port, hop.in_port);
        let agg_rate: f64 = members.iter().map(|&j| self.flows[j].rate()).sum();
        debug_assert!(port_rate > 0.0 && agg_rate > 0.0);
        let share = agg_rate / port_rate * self.model.capacity;
        let base = ServiceCurve::new(share, self.model.epsilon);

        // Head-of-line delay: direct blockers sharing k's input buffer here
        // but leaving through other ports park their bursts ahead of k.
        let mut headline = 0.0;
        for (j, g) in self.flows.iter().enumerate() {
            if j == k || !self.direct[k].contains(&j) {
                continue;
            }
            let Some(hj) = self.maps.hop_index(j, hop.router) else { continue };
            let other = g.path[hj];
            if other.in_port == hop.in_port && other.out_port != hop.out_port {
                match self.arrival(j, hj) {
                    Ok(a) => headline += a.burst / self.model.capacity,
                    Err(e) => return Err(e),
                }
            }
        }
        let shifted = base
            .delay_shifted(headline)
            .expect("head-of-line delay is nonnegative");

        // Blind multiplexing against same-buffer, same-port competitors.
        let mut cross = ArrivalCurve::zero();
        for &j in members {
            if j == k {
                continue;
            }
            let hj = self
                .maps
                .hop_index(j, hop.router)
                .expect("aggregate members traverse the router");
            match self.arrival(j, hj) {
                Ok(a) => cross = ArrivalCurve::sum([cross, a]),
                Err(e) => return Err(e),
            }
        }
        shifted.residual_blind(cross).map_err(|e| AnalysisError::Unstable {
            context: self.locate(k, h),
            source: e,
        })
    }

    /// Concatenated service over positions `start..=end` of `k`'s path.
    fn segment_service(&self, k: usize, start: usize, end: usize) -> ServiceResult {
        let mut acc = ServiceCurve::identity();
        for h in start..=end {
            let s = self.services[k][h]
                .clone()
                .expect("services computed for every hop")?;
            acc = acc.convolve(s);
        }
        Ok(acc)
    }

    /// Transmission + direct blocking bound of `k` over positions
    /// `start..=end`, entered with `k`'s arrival curve at `start`.
    fn segment_delay(&self, k: usize, start: usize, end: usize) -> Result<f64, AnalysisError> {
        let entry = self.arrival(k, start)?;
        let service = self.segment_service(k, start, end)?;
        minplus::delay_bound(entry, service).map_err(|e| AnalysisError::Unstable {
            context: self.locate(k, start),
            source: e,
        })
    }

    fn full_path_delay(&self, k: usize) -> Result<f64, AnalysisError> {
        self.segment_delay(k, 0, self.flows[k].path.len() - 1)
    }

    /// Recursive indirect-blocking bound of `flow` within `universe`. Each
    /// indirect blocker is charged its worst direct-blocking delay over the
    /// stretch where it contends with a held segment, plus its own indirect
    /// bound within the shrunken universe. `record`, when given, captures
    /// the charged segment per indirect blocker (top level only).
    fn indirect_bound(
        &self,
        flow: usize,
        universe: &BTreeSet<usize>,
        depth: usize,
        max_depth: &mut usize,
        mut record: Option<&mut BTreeMap<usize, Subpath>>,
    ) -> Result<f64, AnalysisError> {
        *max_depth = (*max_depth).max(depth);
        let direct_here = self.ctx.direct_within(flow, universe);
        let remainder: BTreeSet<usize> = universe.difference(&direct_here).copied().collect();
        let indirect = self.ctx.indirect_within(flow, universe, self.buffer, self.mode);
        if remainder.is_empty() || indirect.is_empty() {
            return Ok(0.0);
        }
        debug_assert!(remainder.len() < universe.len(), "recursion must shrink");

        let mut total = 0.0;
        for (blocker, held_segments) in indirect {
            let mut worst: Option<(f64, Subpath)> = None;
            for held in held_segments {
                let seg = self
                    .ctx
                    .effective_segment(blocker, &held)
                    .expect("an indirect blocker touches the held segment");
                let d = self.segment_delay(blocker, seg.start, seg.end)?;
                if worst.map_or(true, |(best, _)| d > best) {
                    worst = Some((d, held));
                }
            }
            let (charged, held) = worst.expect("at least one qualifying segment");
            if let Some(rec) = record.as_deref_mut() {
                rec.insert(blocker, held);
            }
            total += charged;
            total += self.indirect_bound(blocker, &remainder, depth + 1, max_depth, None)?;
        }
        Ok(total)
    }
}

/// Analyze every flow: contention-free transit, transmission + direct
/// blocking over the full path, recursive indirect blocking under the given
/// mode and buffer size, and the schedulability verdict against each
/// deadline. Instability is reported per flow; only a circular instance
/// fails the whole run.
pub fn analyze_all(
    model: &NetworkModel,
    flows: &[Flow],
    mode: BlockingMode,
    buffer: f64,
) -> Result<AnalysisReport, AnalysisError> {
    let engine = Engine::new(model, flows, mode, buffer)?;
    let universe: BTreeSet<usize> = (0..flows.len()).collect();

    let mut results = Vec::with_capacity(flows.len());
    let mut blocking_flows = Vec::with_capacity(flows.len());
    for (k, f) in flows.iter().enumerate() {
        let d_tr = transit_delay(model, f);
        let d_db = engine.full_path_delay(k);
        let mut chosen: BTreeMap<usize, Subpath> = BTreeMap::new();
        let mut depth = 0usize;
        let d_ib = engine.indirect_bound(k, &universe, 1, &mut depth, Some(&mut chosen));

        let (d_db, d_ib, note) = match (d_db, d_ib) {
            (Ok(a), Ok(b)) => (Some(a), Some(b), None),
            (Err(e), Ok(b)) => (None, Some(b), Some(e.to_string())),
            (Ok(a), Err(e)) => (Some(a), None, Some(e.to_string())),
            (Err(e), Err(_)) => (None, None, Some(e.to_string())),
        };
        let d_eed = match (d_db, d_ib) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        let verdict = match d_eed {
            Some(d) if d <= f.deadline => Verdict::Schedulable,
            Some(_) => Verdict::NotSchedulable,
            None => Verdict::Unstable,
        };
        let bursts = f
            .path
            .iter()
            .enumerate()
            .map(|(h, hop)| RouterBurst {
                router: model.router_id(hop.router).to_string(),
                burst: engine.arrival(k, h).ok().map(|a| a.burst),
            })
            .collect();

        let sets = engine.ctx.sets_within(k, &universe, buffer, mode);
        blocking_flows.push(FlowBlockingReport {
            flow: f.id.clone(),
            direct: sets.direct.iter().map(|&l| flows[l].id.clone()).collect(),
            direct_map: sets
                .direct_map
                .iter()
                .map(|(&l, sub)| (flows[l].id.clone(), describe_subpath(model, flows, sub)))
                .collect(),
            indirect: sets.indirect.keys().map(|&i| flows[i].id.clone()).collect(),
            indirect_map: chosen
                .iter()
                .map(|(&i, sub)| (flows[i].id.clone(), describe_subpath(model, flows, sub)))
                .collect(),
        });
        results.push(FlowResult {
            flow: f.id.clone(),
            d_tr,
            d_db,
            d_ib,
            d_eed,
            d_b: d_eed.map(|d| d - d_tr),
            deadline: f.deadline,
            verdict,
            bursts,
            indirect_depth: depth,
            note,
        });
    }

    Ok(AnalysisReport {
        mode,
        buffer,
        flows: results,
        blocking: BlockingReport { mode, buffer, flows: blocking_flows },
    })
}
