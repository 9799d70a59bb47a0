//! Flit-level discrete-event simulator of wormhole switching with finite
//! input buffers, credit backpressure, and weighted round-robin output
//! arbitration. Used to cross-check the analytic bounds from below: every
//! observed latency must stay at or under the computed bound.
//!
//! Model, per event-driven run:
//!
//! - A packet of `L` bytes travels as `ceil(L / flit_size)` flits; each
//!   flit occupies an output port for `flit_size / capacity` time units.
//! - Flits live in per-input-port FIFO buffers of `floor(buffer /
//!   flit_size)` slots. A grant moves the head flit to the next router's
//!   buffer instantly and frees its slot instantly (zero-latency credits,
//!   deliberately optimistic so observed latencies underestimate reality,
//!   never the other way around).
//! - Packets are non-preemptive: a header acquires its output port only
//!   when it is transmittable right now, and the port stays with that
//!   packet (idling when the packet stalls) until the tail flit leaves.
//! - Output ports arbitrate among competing input ports by deficit round
//!   robin at packet granularity, with quanta proportional to the same
//!   rate shares the analysis uses.
//! - Each router on the route adds a relay latency of epsilon. The total
//!   route latency `n * epsilon` is charged when the packet enters the
//!   network rather than stage by stage: the per-packet latency is
//!   identical, but charging it per stage would demand `epsilon * C` bytes
//!   of buffering per hop to sustain line rate — a pessimism the delay
//!   bounds deliberately ignore.
//! - A run releases packets up to the horizon, then drains. If flits
//!   remain undeliverable after the event queue empties (e.g. a flit
//!   larger than a buffer), the run reports a deadlock outcome instead of
//!   hanging.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{Flow, NetworkModel};

/// Run parameters, usually parsed from the document's `sim` section.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimSettings {
    /// Packets are released while their nominal release time is below this.
    pub horizon: f64,
    /// Trials for [`sweep_offsets`]; a plain [`simulate`] runs once.
    pub trials: u32,
    /// Seed for jitter realizations and randomized trial offsets.
    pub seed: u64,
    /// Flit size in bytes.
    pub flit_size: f64,
    /// Release offset per flow, aligned with the flow list.
    pub offsets: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimOutcome {
    /// Every released packet was delivered.
    Completed,
    /// The event queue drained with flits still undeliverable.
    Deadlock { time: f64, undelivered_flits: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSimStats {
    pub flow: String,
    pub packets_released: u64,
    pub packets_delivered: u64,
    /// Worst observed end-to-end latency (release to last-flit delivery).
    pub max_latency: Option<f64>,
    pub mean_latency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PortOccupancy {
    pub router: String,
    pub port: String,
    /// Peak buffer fill in bytes (flit-quantized).
    pub max_bytes: f64,
    /// Configured buffer size in bytes.
    pub capacity: f64,
}

/// Result of one run, or the per-field worst case over a sweep's trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimReport {
    pub outcome: SimOutcome,
    pub flows: Vec<FlowSimStats>,
    pub occupancy: Vec<PortOccupancy>,
    pub released_flits: u64,
    pub delivered_flits: u64,
}

/// Flits a packet of `length` bytes occupies at `flit_size` bytes per flit.
fn flit_count(length: f64, flit_size: f64) -> u32 {
    ((length / flit_size - 1e-9).ceil()).max(1.0) as u32
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Flit {
    packet: usize,
    index: u32,
}

#[derive(Debug, Clone)]
struct Packet {
    flow: usize,
    release: f64,
    flits: u32,
    delivered: u32,
}

/// What refills an input buffer when a slot frees.
#[derive(Debug, Clone, Copy)]
enum Feeder {
    /// The output port of the upstream router.
    Link { router: usize, port: usize },
    /// The local injection queue.
    Injection,
}

#[derive(Debug)]
struct InBuf {
    cap_flits: u32,
    queue: VecDeque<Flit>,
    feeder: Feeder,
    /// Packets waiting to enter the network through this buffer, in release
    /// order; the head packet lands its flits as slots free.
    inject: VecDeque<usize>,
    inject_progress: u32,
    max_seen: u32,
}

#[derive(Debug)]
struct OutPort {
    busy_until: f64,
    free_event_pending: bool,
    /// Packet currently holding the port (header granted, tail not yet).
    holder: Option<usize>,
    /// Competing input ports in fixed order, with deficit-round-robin state.
    rr: Vec<usize>,
    pos: usize,
    deficit: Vec<f64>,
    quantum: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Release { packet: usize },
    PortFree { router: usize, port: usize },
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reversed: the binary heap then pops the earliest event first,
        // ties broken by creation order for determinism.
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

struct Sim<'a> {
    model: &'a NetworkModel,
    flows: &'a [Flow],
    flit_size: f64,
    flit_time: f64,
    /// Hop index per (flow, router).
    positions: Vec<BTreeMap<usize, usize>>,
    packets: Vec<Packet>,
    buffers: BTreeMap<(usize, usize), InBuf>,
    ports: BTreeMap<(usize, usize), OutPort>,
    heap: BinaryHeap<Event>,
    seq: u64,
    dirty: BTreeSet<(usize, usize)>,
    released_flits: u64,
    delivered_flits: u64,
    per_flow_delivered: Vec<u64>,
    per_flow_max: Vec<Option<f64>>,
    per_flow_sum: Vec<f64>,
}

impl<'a> Sim<'a> {
    fn new(model: &'a NetworkModel, flows: &'a [Flow], settings: &SimSettings) -> Sim<'a> {
        let flit_size = settings.flit_size;
        let positions: Vec<BTreeMap<usize, usize>> = flows
            .iter()
            .map(|f| f.path.iter().enumerate().map(|(h, hop)| (hop.router, h)).collect())
            .collect();

        // One buffer per used input port, one arbiter per used output port.
        let mut buffers: BTreeMap<(usize, usize), InBuf> = BTreeMap::new();
        let mut port_inputs: BTreeMap<(usize, usize), BTreeSet<usize>> = BTreeMap::new();
        for f in flows {
            for (h, hop) in f.path.iter().enumerate() {
                let feeder = if h == 0 {
                    Feeder::Injection
                } else {
                    let prev = f.path[h - 1];
                    Feeder::Link { router: prev.router, port: prev.out_port }
                };
                buffers.entry((hop.router, hop.in_port)).or_insert_with(|| InBuf {
                    cap_flits: (model.buffer_at(hop.router, hop.in_port) / flit_size) as u32,
                    queue: VecDeque::new(),
                    feeder,
                    inject: VecDeque::new(),
                    inject_progress: 0,
                    max_seen: 0,
                });
                port_inputs
                    .entry((hop.router, hop.out_port))
                    .or_default()
                    .insert(hop.in_port);
            }
        }

        let mut ports = BTreeMap::new();
        for ((router, out_port), inputs) in port_inputs {
            let rr: Vec<usize> = inputs.into_iter().collect();
            // Weighted quanta: each input port's share of the output port is
            // proportional to the long-run rate it carries, scaled so the
            // heaviest share earns one maximal packet per rotation.
            let agg_rate = |ip: usize| -> f64 {
                flows
                    .iter()
                    .filter(|f| {
                        f.path
                            .iter()
                            .any(|h| h.router == router && h.out_port == out_port && h.in_port == ip)
                    })
                    .map(|f| f.rate())
                    .sum()
            };
            let rates: Vec<f64> = rr.iter().map(|&ip| agg_rate(ip)).collect();
            let max_rate = rates.iter().cloned().fold(f64::MIN, f64::max);
            let max_cost = flows
                .iter()
                .filter(|f| {
                    f.path
                        .iter()
                        .any(|h| h.router == router && h.out_port == out_port)
                })
                .map(|f| flit_count(f.length, flit_size) as f64 * flit_size)
                .fold(0.0, f64::max);
            let quantum: Vec<f64> = rates.iter().map(|r| r / max_rate * max_cost).collect();
            ports.insert(
                (router, out_port),
                OutPort {
                    busy_until: 0.0,
                    free_event_pending: false,
                    holder: None,
                    deficit: vec![0.0; rr.len()],
                    quantum,
                    rr,
                    pos: 0,
                },
            );
        }

        Sim {
            model,
            flows,
            flit_size,
            flit_time: flit_size / model.capacity,
            positions,
            packets: Vec::new(),
            buffers,
            ports,
            heap: BinaryHeap::new(),
            seq: 0,
            dirty: BTreeSet::new(),
            released_flits: 0,
            delivered_flits: 0,
            per_flow_delivered: vec![0; flows.len()],
            per_flow_max: vec![None; flows.len()],
            per_flow_sum: vec![0.0; flows.len()],
        }
    }

    fn push_event(&mut self, time: f64, ev: Ev) {
        let seq = self.seq;
        self.seq += 1;
        self.heap.push(Event { time, seq, ev });
    }

    /// Create every packet released before the horizon. Jitter realizations
    /// are drawn deterministically from the seeded generator, never above
    /// the flow's declared bound.
    fn schedule_releases(&mut self, settings: &SimSettings, rng: &mut ChaCha8Rng) {
        for (k, f) in self.flows.iter().enumerate() {
            let relay_budget = f.path.len() as f64 * self.model.epsilon;
            let mut nominal = settings.offsets.get(k).copied().unwrap_or(0.0);
            while nominal < settings.horizon {
                let jitter = if f.jitter > 0.0 { rng.gen_range(0.0..=f.jitter) } else { 0.0 };
                let release = nominal + jitter;
                let id = self.packets.len();
                self.packets.push(Packet {
                    flow: k,
                    release,
                    flits: flit_count(f.length, self.flit_size),
                    delivered: 0,
                });
                // The packet reaches the first input buffer once the route's
                // total relay latency has elapsed.
                self.push_event(release + relay_budget, Ev::Release { packet: id });
                nominal += f.period;
            }
        }
    }

    fn hop_of(&self, packet: usize, router: usize) -> usize {
        self.positions[self.packets[packet].flow][&router]
    }

    /// The output port the head flit of buffer `(router, in_port)` wants.
    fn head_target(&self, router: usize, in_port: usize) -> Option<(usize, usize)> {
        let buf = &self.buffers[&(router, in_port)];
        let head = buf.queue.front()?;
        let hop = self.hop_of(head.packet, router);
        Some((router, self.flows[self.packets[head.packet].flow].path[hop].out_port))
    }

    fn wake_head(&mut self, router: usize, in_port: usize) {
        if let Some(target) = self.head_target(router, in_port) {
            self.dirty.insert(target);
        }
    }

    /// Land queued injection flits into a source buffer while slots last.
    fn feed_injection(&mut self, router: usize, in_port: usize) {
        let mut landed = false;
        loop {
            let buf = self.buffers.get_mut(&(router, in_port)).unwrap();
            let Some(&pkt) = buf.inject.front() else { break };
            if buf.queue.len() as u32 >= buf.cap_flits {
                break;
            }
            let index = buf.inject_progress;
            buf.queue.push_back(Flit { packet: pkt, index });
            buf.max_seen = buf.max_seen.max(buf.queue.len() as u32);
            buf.inject_progress += 1;
            self.released_flits += 1;
            landed = true;
            if buf.inject_progress == self.packets[pkt].flits {
                buf.inject.pop_front();
                buf.inject_progress = 0;
            }
        }
        if landed {
            self.wake_head(router, in_port);
        }
    }

    /// Can this flit leave `router` right now, as far as the downstream
    /// buffer is concerned?
    fn credit_ok(&self, packet: usize, router: usize) -> bool {
        let hop = self.hop_of(packet, router);
        let path = &self.flows[self.packets[packet].flow].path;
        if hop == path.len() - 1 {
            return true; // delivery consumes no buffer
        }
        let next = path[hop + 1];
        let buf = &self.buffers[&(next.router, next.in_port)];
        (buf.queue.len() as u32) < buf.cap_flits
    }

    /// Deficit-round-robin choice of the next packet to acquire `(router,
    /// out_port)`: rotate over competing input ports, topping deficits up by
    /// their quantum per visit, until one ready head packet can afford its
    /// cost. Returns the chosen input port.
    fn arbitrate(&mut self, router: usize, out_port: usize) -> Option<usize> {
        let port = &self.ports[&(router, out_port)];
        let rr = port.rr.clone();
        let mut pos = port.pos;
        let mut passes = 0usize;
        loop {
            let mut any_ready = false;
            for _ in 0..rr.len() {
                let ip = rr[pos];
                let ready = {
                    let buf = &self.buffers[&(router, ip)];
                    match buf.queue.front() {
                        None => {
                            let port = self.ports.get_mut(&(router, out_port)).unwrap();
                            port.deficit[pos] = 0.0;
                            None
                        }
                        Some(&flit) => {
                            let hop = self.hop_of(flit.packet, router);
                            let target =
                                self.flows[self.packets[flit.packet].flow].path[hop].out_port;
                            if flit.index == 0
                                && target == out_port
                                && self.credit_ok(flit.packet, router)
                            {
                                let cost =
                                    self.packets[flit.packet].flits as f64 * self.flit_size;
                                Some((flit.packet, cost))
                            } else {
                                None
                            }
                        }
                    }
                };
                if let Some((packet, cost)) = ready {
                    any_ready = true;
                    let port = self.ports.get_mut(&(router, out_port)).unwrap();
                    port.deficit[pos] += port.quantum[pos];
                    if port.deficit[pos] >= cost {
                        port.deficit[pos] -= cost;
                        port.pos = pos; // keep serving this input while deficit lasts
                        port.holder = Some(packet);
                        return Some(ip);
                    }
                }
                pos = (pos + 1) % rr.len();
            }
            if !any_ready {
                let port = self.ports.get_mut(&(router, out_port)).unwrap();
                port.pos = pos;
                return None;
            }
            passes += 1;
            assert!(passes < 1_000_000, "round-robin deficits failed to converge");
        }
    }

    /// Move the head flit of `(router, in_port)` through `(router,
    /// out_port)`: free its slot (waking the feeder), occupy the port for
    /// one flit time, and either deliver it or land it downstream.
    fn grant(&mut self, router: usize, in_port: usize, out_port: usize, t: f64) {
        let flit = {
            let buf = self.buffers.get_mut(&(router, in_port)).unwrap();
            let flit = buf.queue.pop_front().expect("granted buffer is nonempty");
            flit
        };
        let feeder = self.buffers[&(router, in_port)].feeder;
        match feeder {
            Feeder::Link { router: ur, port: up } => {
                self.dirty.insert((ur, up));
            }
            Feeder::Injection => self.feed_injection(router, in_port),
        }
        self.wake_head(router, in_port);

        let tau = self.flit_time;
        {
            let port = self.ports.get_mut(&(router, out_port)).unwrap();
            port.busy_until = t + tau;
            if flit.index == self.packets[flit.packet].flits - 1 {
                port.holder = None;
            }
        }

        let hop = self.hop_of(flit.packet, router);
        let path = &self.flows[self.packets[flit.packet].flow].path;
        if hop == path.len() - 1 {
            self.delivered_flits += 1;
            let pkt = &mut self.packets[flit.packet];
            pkt.delivered += 1;
            if pkt.delivered == pkt.flits {
                let latency = t + tau - pkt.release;
                let k = pkt.flow;
                self.per_flow_delivered[k] += 1;
                self.per_flow_sum[k] += latency;
                self.per_flow_max[k] =
                    Some(self.per_flow_max[k].map_or(latency, |m| m.max(latency)));
            }
        } else {
            let next = path[hop + 1];
            let buf = self.buffers.get_mut(&(next.router, next.in_port)).unwrap();
            debug_assert!(
                (buf.queue.len() as u32) < buf.cap_flits,
                "grant without downstream credit"
            );
            buf.queue.push_back(flit);
            buf.max_seen = buf.max_seen.max(buf.queue.len() as u32);
            self.wake_head(next.router, next.in_port);
        }
    }

    /// Drive one output port at time `t` as far as it can go.
    fn service_port(&mut self, router: usize, out_port: usize, t: f64) {
        loop {
            let (busy_until, pending, holder) = {
                let port = &self.ports[&(router, out_port)];
                (port.busy_until, port.free_event_pending, port.holder)
            };
            if busy_until > t {
                if !pending {
                    self.ports.get_mut(&(router, out_port)).unwrap().free_event_pending = true;
                    self.push_event(busy_until, Ev::PortFree { router, port: out_port });
                }
                return;
            }
            let in_port = match holder {
                Some(pkt) => {
                    // Wormhole: the port belongs to this packet until its
                    // tail leaves. Its next flit moves only when present at
                    // the head of the packet's local buffer and creditable.
                    let hop = self.hop_of(pkt, router);
                    let ip = self.flows[self.packets[pkt].flow].path[hop].in_port;
                    let head_is_ours = self.buffers[&(router, ip)]
                        .queue
                        .front()
                        .is_some_and(|f| f.packet == pkt);
                    if head_is_ours && self.credit_ok(pkt, router) {
                        Some(ip)
                    } else {
                        None // port held but stalled; a wake will retry
                    }
                }
                None => self.arbitrate(router, out_port),
            };
            match in_port {
                Some(ip) => self.grant(router, ip, out_port, t),
                None => return,
            }
        }
    }

    fn drain_dirty(&mut self, t: f64) {
        while let Some(&(router, port)) = self.dirty.iter().next() {
            self.dirty.remove(&(router, port));
            self.service_port(router, port, t);
        }
    }

    #[cfg(debug_assertions)]
    fn assert_conservation(&self) {
        let in_buffers: u64 = self.buffers.values().map(|b| b.queue.len() as u64).sum();
        assert_eq!(
            self.released_flits,
            self.delivered_flits + in_buffers,
            "flit conservation violated"
        );
        for (&(r, p), buf) in &self.buffers {
            assert!(
                buf.queue.len() as u32 <= buf.cap_flits,
                "buffer ({r}, {p}) over capacity"
            );
        }
    }

    fn run(mut self, settings: &SimSettings, rng: &mut ChaCha8Rng) -> SimReport {
        self.schedule_releases(settings, rng);
        let mut last_t = 0.0;
        while let Some(ev) = self.heap.pop() {
            last_t = ev.time;
            match ev.ev {
                Ev::Release { packet } => {
                    let flow = self.packets[packet].flow;
                    let first = self.flows[flow].path[0];
                    let buf = self.buffers.get_mut(&(first.router, first.in_port)).unwrap();
                    buf.inject.push_back(packet);
                    self.feed_injection(first.router, first.in_port);
                }
                Ev::PortFree { router, port } => {
                    self.ports.get_mut(&(router, port)).unwrap().free_event_pending = false;
                    self.dirty.insert((router, port));
                }
            }
            self.drain_dirty(ev.time);
            #[cfg(debug_assertions)]
            self.assert_conservation();
        }

        let expected_flits: u64 = self.packets.iter().map(|p| p.flits as u64).sum();
        let outcome = if self.delivered_flits == expected_flits {
            SimOutcome::Completed
        } else {
            SimOutcome::Deadlock {
                time: last_t,
                undelivered_flits: expected_flits - self.delivered_flits,
            }
        };

        let mut released_packets = vec![0u64; self.flows.len()];
        for p in &self.packets {
            released_packets[p.flow] += 1;
        }
        let flows = self
            .flows
            .iter()
            .enumerate()
            .map(|(k, f)| FlowSimStats {
                flow: f.id.clone(),
                packets_released: released_packets[k],
                packets_delivered: self.per_flow_delivered[k],
                max_latency: self.per_flow_max[k],
                mean_latency: (self.per_flow_delivered[k] > 0)
                    .then(|| self.per_flow_sum[k] / self.per_flow_delivered[k] as f64),
            })
            .collect();
        let occupancy = self
            .buffers
            .iter()
            .map(|(&(r, p), buf)| PortOccupancy {
                router: self.model.router_id(r).to_string(),
                port: self.model.port_id(r, p).to_string(),
                max_bytes: buf.max_seen as f64 * self.flit_size,
                capacity: self.model.buffer_at(r, p),
            })
            .collect();
        SimReport {
            outcome,
            flows,
            occupancy,
            released_flits: self.released_flits,
            delivered_flits: self.delivered_flits,
        }
    }
}

/// Run one deterministic simulation with the configured offsets.
pub fn simulate(model: &NetworkModel, flows: &[Flow], settings: &SimSettings) -> SimReport {
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    Sim::new(model, flows, settings).run(settings, &mut rng)
}

/// Run `settings.trials` simulations — the configured offsets first, then
/// trials with offsets drawn uniformly from `[0, period)` per flow — and
/// report the per-field worst case. Identical settings yield an identical
/// report.
pub fn sweep_offsets(model: &NetworkModel, flows: &[Flow], settings: &SimSettings) -> SimReport {
    let mut offset_rng = ChaCha8Rng::seed_from_u64(settings.seed ^ 0x5EED_0FF5_E75A_11E5);
    let mut merged: Option<SimReport> = None;
    for trial in 0..settings.trials.max(1) {
        let mut trial_settings = settings.clone();
        trial_settings.trials = 1;
        if trial > 0 {
            trial_settings.seed =
                settings.seed.wrapping_add((trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            trial_settings.offsets = flows
                .iter()
                .map(|f| offset_rng.gen_range(0.0..f.period))
                .collect();
        }
        let report = simulate(model, flows, &trial_settings);
        merged = Some(match merged {
            None => report,
            Some(acc) => merge_worst(acc, report),
        });
    }
    merged.expect("at least one trial runs")
}

fn merge_worst(mut acc: SimReport, next: SimReport) -> SimReport {
    if acc.outcome == SimOutcome::Completed {
        acc.outcome = next.outcome.clone();
    }
    for (a, n) in acc.flows.iter_mut().zip(&next.flows) {
        a.packets_released = a.packets_released.max(n.packets_released);
        a.packets_delivered = a.packets_delivered.max(n.packets_delivered);
        a.max_latency = match (a.max_latency, n.max_latency) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, y) => x.or(y),
        };
        a.mean_latency = match (a.mean_latency, n.mean_latency) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, y) => x.or(y),
        };
    }
    for (a, n) in acc.occupancy.iter_mut().zip(&next.occupancy) {
        a.max_bytes = a.max_bytes.max(n.max_bytes);
    }
    acc.released_flits = acc.released_flits.max(next.released_flits);
    acc.delivered_flits = acc.delivered_flits.max(next.delivered_flits);
    acc
}
