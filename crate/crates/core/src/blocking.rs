//! Direct and indirect blocking sets for wormhole-switched flows.
//!
//! In wormhole switching a packet rarely fits into one input buffer, so a
//! stalled packet holds its output ports along several routers at once and
//! congestion travels upstream. Two flows block each other *directly* when
//! they contend for a common router output port. A third flow that never
//! meets `k` can still stall `k` *indirectly* by blocking one of `k`'s
//! direct blockers while that blocker occupies ports `k` needs.
//!
//! The buffer-aware view implemented here bounds how far downstream of the
//! last shared node a direct blocker can keep hurting `k`: once the
//! blocker's packet has advanced `ceil(L / Buff)` hops past that node, its
//! tail has cleared the shared ports and downstream stalls become
//! invisible to `k`. Only flows touching that bounded window — the
//! blocker's *divergence subpath* — count as indirect blockers. The
//! conventional view keeps the blocker's whole remaining path instead,
//! which is what this view collapses to as buffers shrink.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::model::{Flow, NetworkModel};

/// Which indirect-blocking rule to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockingMode {
    /// Bound each direct blocker's reach by its buffer-limited divergence
    /// subpath.
    BufferAware,
    /// Treat each direct blocker's full path as blocking-relevant.
    Conventional,
}

impl fmt::Display for BlockingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockingMode::BufferAware => write!(f, "buffer-aware"),
            BlockingMode::Conventional => write!(f, "conventional"),
        }
    }
}

/// Number of hops a packet of `length` bytes spans when each input buffer
/// holds `buffer` bytes: `ceil(length / buffer)`, at least 1.
pub fn hops(length: f64, buffer: f64) -> usize {
    debug_assert!(length >= 1.0 && buffer > 0.0);
    // Nudge before the ceiling so quotients that are integers up to f64
    // rounding (e.g. 100/20 computed as 5.000000000000001) do not gain a
    // spurious extra hop.
    ((length / buffer - 1e-9).ceil()).max(1.0) as usize
}

/// A contiguous slice of one flow's path: node positions `start..=end`
/// (inclusive) into `flows[flow].path`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Subpath {
    pub flow: usize,
    pub start: usize,
    pub end: usize,
}

impl Subpath {
    /// Number of links inside the slice.
    pub fn links(&self) -> usize {
        self.end - self.start
    }
}

/// Human-readable rendering of a [`Subpath`] for reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SubpathReport {
    pub flow: String,
    pub routers: Vec<String>,
}

pub fn describe_subpath(model: &NetworkModel, flows: &[Flow], sub: &Subpath) -> SubpathReport {
    let path = &flows[sub.flow].path;
    SubpathReport {
        flow: flows[sub.flow].id.clone(),
        routers: (sub.start..=sub.end)
            .map(|n| model.router_id(path[n].router).to_string())
            .collect(),
    }
}

/// Blocking sets of one flow within some universe of competitors: the
/// direct blockers with their divergence subpaths, and the indirect
/// blockers with every subpath that qualifies them (one per responsible
/// direct blocker).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockingSets {
    pub direct: BTreeSet<usize>,
    pub direct_map: BTreeMap<usize, Subpath>,
    pub indirect: BTreeMap<usize, Vec<Subpath>>,
}

/// Blocking sets for every flow, as emitted in machine-readable reports.
/// `indirect_map` holds the qualifying subpath the delay analysis actually
/// charged (the worst candidate when several direct blockers qualify the
/// same indirect blocker).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockingReport {
    pub mode: BlockingMode,
    pub buffer: f64,
    pub flows: Vec<FlowBlockingReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowBlockingReport {
    pub flow: String,
    pub direct: Vec<String>,
    pub direct_map: BTreeMap<String, SubpathReport>,
    pub indirect: Vec<String>,
    pub indirect_map: BTreeMap<String, SubpathReport>,
}

/// Precomputed port usage of every flow, the basis of all sharing tests.
///
/// Each position `p` of a flow's path claims exactly one `(router, output
/// port)` pair: the link toward position `p + 1`, or the ejection port at
/// the terminal position. Two flows interfere exactly when they claim a
/// common pair.
pub struct Contention<'a> {
    flows: &'a [Flow],
    /// `position_ports[k][p]` = the (router, out_port) pair flow `k` claims
    /// at path position `p`.
    position_ports: Vec<Vec<(usize, usize)>>,
    /// Full-path claim set per flow.
    full_ports: Vec<BTreeSet<(usize, usize)>>,
}

impl<'a> Contention<'a> {
    pub fn new(flows: &'a [Flow]) -> Contention<'a> {
        let position_ports: Vec<Vec<(usize, usize)>> = flows
            .iter()
            .map(|f| f.path.iter().map(|h| (h.router, h.out_port)).collect())
            .collect();
        let full_ports = position_ports
            .iter()
            .map(|ports| ports.iter().copied().collect())
            .collect();
        Contention { flows, position_ports, full_ports }
    }

    pub fn flows(&self) -> &'a [Flow] {
        self.flows
    }

    /// `(router, out_port)` pairs claimed by positions `start..=end` of a
    /// flow's path. A position's output port belongs to the segment only if
    /// the link it drives lies inside the segment; the terminal position
    /// contributes its ejection port instead.
    pub fn segment_ports(&self, flow: usize, start: usize, end: usize) -> BTreeSet<(usize, usize)> {
        let ports = &self.position_ports[flow];
        debug_assert!(start <= end && end < ports.len());
        let mut out: BTreeSet<(usize, usize)> = (start..end).map(|p| ports[p]).collect();
        if end == ports.len() - 1 {
            out.insert(ports[end]);
        }
        out
    }

    /// Positions of `flow`'s path that claim a pair inside `ports`.
    fn sharing_positions(&self, flow: usize, ports: &BTreeSet<(usize, usize)>) -> Vec<usize> {
        self.position_ports[flow]
            .iter()
            .enumerate()
            .filter(|(_, pp)| ports.contains(pp))
            .map(|(p, _)| p)
            .collect()
    }

    /// Do two flows contend for at least one output port anywhere?
    pub fn shares_port(&self, a: usize, b: usize) -> bool {
        let (small, large) = if self.full_ports[a].len() <= self.full_ports[b].len() {
            (&self.full_ports[a], &self.full_ports[b])
        } else {
            (&self.full_ports[b], &self.full_ports[a])
        };
        small.iter().any(|p| large.contains(p))
    }

    /// Direct blockers of `k` among all flows.
    pub fn direct_set(&self, k: usize) -> BTreeSet<usize> {
        (0..self.flows.len())
            .filter(|&i| i != k && self.shares_port(i, k))
            .collect()
    }

    /// The divergence subpath of direct blocker `i` with respect to `k`:
    /// from the last node of `i`'s path that lies on `k`'s path, through
    /// the `ceil(L_i / buffer)` further hops a stalled packet of `i` can
    /// keep occupied, clamped to `i`'s destination. `None` when the paths
    /// share no router (then `i` cannot be a direct blocker of `k`).
    pub fn subpath(&self, i: usize, k: usize, buffer: f64) -> Option<Subpath> {
        let path_i = &self.flows[i].path;
        let k_routers: BTreeSet<usize> = self.flows[k].path.iter().map(|h| h.router).collect();
        let last = path_i
            .iter()
            .enumerate()
            .rev()
            .find(|(_, h)| k_routers.contains(&h.router))
            .map(|(n, _)| n)?;
        let end = (last + hops(self.flows[i].length, buffer)).min(path_i.len() - 1);
        Some(Subpath { flow: i, start: last, end })
    }

    /// The slice of `i`'s path that the active mode holds against `k`:
    /// the divergence subpath, or the whole path in conventional mode.
    pub fn mode_subpath(&self, i: usize, k: usize, buffer: f64, mode: BlockingMode) -> Option<Subpath> {
        match mode {
            BlockingMode::BufferAware => self.subpath(i, k, buffer),
            BlockingMode::Conventional => {
                if self.shares_port(i, k) {
                    Some(Subpath { flow: i, start: 0, end: self.flows[i].path.len() - 1 })
                } else {
                    None
                }
            }
        }
    }

    /// Direct blockers of `flow` restricted to `universe`.
    pub fn direct_within(&self, flow: usize, universe: &BTreeSet<usize>) -> BTreeSet<usize> {
        self.direct_set(flow).intersection(universe).copied().collect()
    }

    /// Indirect blockers of `flow` within `universe`, each mapped to the
    /// qualifying segments: for every direct blocker `l` (in `universe`)
    /// whose held slice shares a port with candidate `x`, that slice is one
    /// way `x` can stall `flow`. Flows already blocking directly, and
    /// `flow` itself, are excluded.
    pub fn indirect_within(
        &self,
        flow: usize,
        universe: &BTreeSet<usize>,
        buffer: f64,
        mode: BlockingMode,
    ) -> BTreeMap<usize, Vec<Subpath>> {
        let direct = self.direct_within(flow, universe);
        let mut candidates: BTreeMap<usize, Vec<Subpath>> = BTreeMap::new();
        for &l in &direct {
            let sub = self
                .mode_subpath(l, flow, buffer, mode)
                .expect("a direct blocker always shares a router");
            let sub_ports = self.segment_ports(l, sub.start, sub.end);
            for &x in universe {
                if x == flow || direct.contains(&x) {
                    continue;
                }
                if self.full_ports[x].iter().any(|p| sub_ports.contains(p)) {
                    candidates.entry(x).or_default().push(sub);
                }
            }
        }
        candidates
    }

    /// Direct and indirect blocking sets of `flow` within `universe`.
    pub fn sets_within(
        &self,
        flow: usize,
        universe: &BTreeSet<usize>,
        buffer: f64,
        mode: BlockingMode,
    ) -> BlockingSets {
        let direct = self.direct_within(flow, universe);
        let direct_map = direct
            .iter()
            .map(|&l| {
                let sub = self
                    .mode_subpath(l, flow, buffer, mode)
                    .expect("a direct blocker always shares a router");
                (l, sub)
            })
            .collect();
        BlockingSets {
            indirect: self.indirect_within(flow, universe, buffer, mode),
            direct,
            direct_map,
        }
    }

    /// The slice of `x`'s own path over which it contends with `held`:
    /// from the first position claiming a port of `held`'s segment through
    /// the downstream node of the last such claim. This is the stretch `x`
    /// must clear before the held segment can drain, and therefore the
    /// segment over which `x`'s own direct-blocking delay is charged.
    /// `None` when `x` never touches the held segment.
    pub fn effective_segment(&self, x: usize, held: &Subpath) -> Option<Subpath> {
        let held_ports = self.segment_ports(held.flow, held.start, held.end);
        let positions = self.sharing_positions(x, &held_ports);
        let (&first, &last) = (positions.first()?, positions.last()?);
        let terminal = self.flows[x].path.len() - 1;
        let end = if last == terminal { terminal } else { last + 1 };
        Some(Subpath { flow: x, start: first, end })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_document;
    use crate::synth::builder::NetBuilder;

    const F1: usize = 0;
    const F2: usize = 1;
    const F3: usize = 2;

    fn fixture() -> (NetworkModel, Vec<Flow>) {
        let doc = include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/net_y.json"));
        let input = parse_document(doc).unwrap();
        (input.model, input.flows)
    }

    fn universe(n: usize) -> BTreeSet<usize> {
        (0..n).collect()
    }

    #[test]
    fn hops_covers_exact_and_fractional_fits() {
        assert_eq!(hops(100.0, 56.0), 2);
        assert_eq!(hops(100.0, 100.0), 1);
        assert_eq!(hops(100.0, 20.0), 5);
        assert_eq!(hops(100.0, 1000.0), 1);
        assert_eq!(hops(64.0, 56.0), 2);
        assert_eq!(hops(1.0, 1.0), 1);
    }

    #[test]
    fn direct_sets_on_the_y_fixture() {
        let (_, flows) = fixture();
        let ctx = Contention::new(&flows);
        assert_eq!(ctx.direct_set(F1), BTreeSet::from([F2]));
        assert_eq!(ctx.direct_set(F3), BTreeSet::from([F2]));
        assert_eq!(ctx.direct_set(F2), BTreeSet::from([F1, F3]));
    }

    #[test]
    fn single_flow_has_no_blockers() {
        let (_, flows) = NetBuilder::new(100.0, 1.0, 32.0)
            .chain(&["a", "b", "c"])
            .flow("f1", 100.0, 64.0, &["a", "b", "c"])
            .build();
        let ctx = Contention::new(&flows);
        assert!(ctx.direct_set(0).is_empty());
        assert!(ctx.indirect_within(0, &universe(1), 32.0, BlockingMode::BufferAware).is_empty());
        assert!(ctx.indirect_within(0, &universe(1), 32.0, BlockingMode::Conventional).is_empty());
    }

    #[test]
    fn crossing_a_router_on_disjoint_ports_does_not_block() {
        // Two flows through the same middle router, different in/out ports.
        let (_, flows) = NetBuilder::new(100.0, 1.0, 32.0)
            .chain(&["a", "m", "b"])
            .link("x", "m")
            .link("m", "y")
            .flow("f1", 100.0, 64.0, &["a", "m", "b"])
            .flow("f2", 100.0, 64.0, &["x", "m", "y"])
            .build();
        let ctx = Contention::new(&flows);
        assert!(ctx.direct_set(0).is_empty());
        assert!(ctx.direct_set(1).is_empty());
    }

    #[test]
    fn divergence_subpath_tracks_buffer_size() {
        let (_, flows) = fixture();
        let ctx = Contention::new(&flows);
        // f2's path is E,B,C,F,G,H; its last node on f1's path is C (position 2).
        let by_buffer = [
            (56.0, 2, 4),   // two hops past C: C,F,G
            (20.0, 2, 5),   // five hops clamp at the destination H: C,F,G,H
            (1000.0, 2, 3), // one hop: C,F
        ];
        for (buffer, start, end) in by_buffer {
            let sub = ctx.subpath(F2, F1, buffer).unwrap();
            assert_eq!((sub.flow, sub.start, sub.end), (F2, start, end), "buffer {buffer}");
        }
    }

    #[test]
    fn divergence_subpath_clamps_to_a_single_terminal_node() {
        let (_, flows) = fixture();
        let ctx = Contention::new(&flows);
        // f2's last node on f3's path is its own destination H (position 5):
        // the subpath degenerates to the single node H with no links.
        let sub = ctx.subpath(F2, F3, 56.0).unwrap();
        assert_eq!((sub.start, sub.end), (5, 5));
        assert_eq!(sub.links(), 0);
        // A one-node terminal slice still claims the ejection port.
        assert_eq!(ctx.segment_ports(F2, 5, 5).len(), 1);
    }

    #[test]
    fn subpath_is_undefined_for_router_disjoint_flows() {
        let (_, flows) = NetBuilder::new(100.0, 1.0, 32.0)
            .chain(&["a", "b"])
            .chain(&["x", "y"])
            .flow("f1", 100.0, 64.0, &["a", "b"])
            .flow("f2", 100.0, 64.0, &["x", "y"])
            .build();
        let ctx = Contention::new(&flows);
        assert!(ctx.subpath(1, 0, 32.0).is_none());
        assert!(ctx.mode_subpath(1, 0, 32.0, BlockingMode::Conventional).is_none());
    }

    #[test]
    fn buffer_aware_indirect_set_appears_only_for_small_buffers() {
        let (_, flows) = fixture();
        let ctx = Contention::new(&flows);
        let u = universe(flows.len());

        for buffer in [56.0, 1000.0] {
            let ib = ctx.indirect_within(F1, &u, buffer, BlockingMode::BufferAware);
            assert!(ib.is_empty(), "buffer {buffer} should hide f3 from f1");
        }

        let ib = ctx.indirect_within(F1, &u, 20.0, BlockingMode::BufferAware);
        assert_eq!(ib.keys().copied().collect::<Vec<_>>(), vec![F3]);
        assert_eq!(ib[&F3], vec![Subpath { flow: F2, start: 2, end: 5 }]);
    }

    #[test]
    fn indirect_membership_flips_exactly_between_49_and_50_bytes() {
        let (_, flows) = fixture();
        let ctx = Contention::new(&flows);
        let u = universe(flows.len());
        let at = |buffer: f64| {
            ctx.indirect_within(F1, &u, buffer, BlockingMode::BufferAware)
                .contains_key(&F3)
        };
        assert!(at(49.0), "3 hops past C still cover G->H");
        assert!(!at(50.0), "2 hops past C stop at G");
    }

    #[test]
    fn conventional_indirect_sets_ignore_buffers() {
        let (_, flows) = fixture();
        let ctx = Contention::new(&flows);
        let u = universe(flows.len());
        for buffer in [20.0, 56.0, 1000.0] {
            let ib1 = ctx.indirect_within(F1, &u, buffer, BlockingMode::Conventional);
            assert_eq!(ib1.keys().copied().collect::<Vec<_>>(), vec![F3]);
            let ib3 = ctx.indirect_within(F3, &u, buffer, BlockingMode::Conventional);
            assert_eq!(ib3.keys().copied().collect::<Vec<_>>(), vec![F1]);
        }
    }

    #[test]
    fn blocking_sets_stay_disjoint_and_exclude_self() {
        let (_, flows) = fixture();
        let ctx = Contention::new(&flows);
        let u = universe(flows.len());
        for mode in [BlockingMode::BufferAware, BlockingMode::Conventional] {
            for buffer in [1.0, 20.0, 56.0, 1000.0] {
                for k in 0..flows.len() {
                    let sets = ctx.sets_within(k, &u, buffer, mode);
                    assert!(!sets.direct.contains(&k));
                    assert!(!sets.indirect.contains_key(&k));
                    assert!(sets.direct.iter().all(|l| !sets.indirect.contains_key(l)));
                    assert_eq!(
                        sets.direct.iter().copied().collect::<Vec<_>>(),
                        sets.direct_map.keys().copied().collect::<Vec<_>>()
                    );
                }
            }
        }
    }

    #[test]
    fn effective_segments_span_the_contended_stretch() {
        let (_, flows) = fixture();
        let ctx = Contention::new(&flows);

        // f3 against f2's buffer-20 subpath C..H: they meet on G->H, and the
        // contended stretch of f3's own path is G..H (positions 1..2).
        let held = ctx.subpath(F2, F1, 20.0).unwrap();
        let seg = ctx.effective_segment(F3, &held).unwrap();
        assert_eq!((seg.flow, seg.start, seg.end), (F3, 1, 2));

        // f1 against f2's full path: they meet on B->C, stretch B..C.
        let full = Subpath { flow: F2, start: 0, end: 5 };
        let seg = ctx.effective_segment(F1, &full).unwrap();
        assert_eq!((seg.flow, seg.start, seg.end), (F1, 1, 2));

        // f3 against f2's buffer-56 subpath C..G: no contact.
        let held = ctx.subpath(F2, F1, 56.0).unwrap();
        assert!(ctx.effective_segment(F3, &held).is_none());
    }

    #[test]
    fn subpath_descriptions_use_router_names() {
        let (model, flows) = fixture();
        let ctx = Contention::new(&flows);
        let sub = ctx.subpath(F2, F1, 56.0).unwrap();
        let desc = describe_subpath(&model, &flows, &sub);
        assert_eq!(desc.flow, "f2");
        assert_eq!(desc.routers, vec!["C", "F", "G"]);
    }
}
