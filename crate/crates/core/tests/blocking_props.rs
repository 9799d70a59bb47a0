//! Cross-checks of the blocking-set machinery against a deliberately naive
//! re-derivation that shares no code with the implementation, plus the
//! structural properties the analysis relies on (subset monotonicity in the
//! buffer size, hop-count arithmetic, segment sanity).

use std::collections::{BTreeMap, BTreeSet};

use flitbound::blocking::{hops, BlockingMode, Contention, Subpath};
use flitbound::model::Flow;
use flitbound::synth::random_instance;
use proptest::prelude::*;

const BUFFER_GRID: [f64; 11] =
    [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0];

// ---------------------------------------------------------------------------
// Naive reference implementation, written directly from the definitions.

/// Ports claimed by positions `start..=end`: each position's outgoing link,
/// except that only the terminal position contributes its ejection port.
fn naive_segment_ports(f: &Flow, start: usize, end: usize) -> BTreeSet<(usize, usize)> {
    let mut ports = BTreeSet::new();
    for p in start..=end {
        if p < end || end == f.path.len() - 1 {
            ports.insert((f.path[p].router, f.path[p].out_port));
        }
    }
    ports
}

fn naive_full_ports(f: &Flow) -> BTreeSet<(usize, usize)> {
    naive_segment_ports(f, 0, f.path.len() - 1)
}

/// Smallest hop count whose combined buffering covers the packet.
fn naive_hops(length: f64, buffer: f64) -> usize {
    let mut h = 1;
    while (h as f64) * buffer < length - 1e-6 {
        h += 1;
    }
    h
}

fn naive_direct(flows: &[Flow], k: usize) -> BTreeSet<usize> {
    let mine = naive_full_ports(&flows[k]);
    (0..flows.len())
        .filter(|&i| i != k && !naive_full_ports(&flows[i]).is_disjoint(&mine))
        .collect()
}

fn naive_subpath(flows: &[Flow], i: usize, k: usize, buffer: f64, mode: BlockingMode) -> Subpath {
    match mode {
        BlockingMode::Conventional => Subpath { flow: i, start: 0, end: flows[i].path.len() - 1 },
        BlockingMode::BufferAware => {
            let on_k: BTreeSet<usize> = flows[k].path.iter().map(|h| h.router).collect();
            let last = (0..flows[i].path.len())
                .rev()
                .find(|&n| on_k.contains(&flows[i].path[n].router))
                .expect("direct blockers share a router");
            let end = (last + naive_hops(flows[i].length, buffer)).min(flows[i].path.len() - 1);
            Subpath { flow: i, start: last, end }
        }
    }
}

fn naive_indirect(
    flows: &[Flow],
    k: usize,
    buffer: f64,
    mode: BlockingMode,
) -> BTreeMap<usize, Vec<Subpath>> {
    let direct = naive_direct(flows, k);
    let mut out: BTreeMap<usize, Vec<Subpath>> = BTreeMap::new();
    for &l in &direct {
        let sub = naive_subpath(flows, l, k, buffer, mode);
        let held = naive_segment_ports(&flows[l], sub.start, sub.end);
        for x in 0..flows.len() {
            if x == k || direct.contains(&x) {
                continue;
            }
            if !naive_full_ports(&flows[x]).is_disjoint(&held) {
                out.entry(x).or_default().push(sub);
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------

#[test]
fn blocking_sets_match_the_naive_derivation() {
    for seed in 0..60 {
        let input = random_instance(seed);
        let flows = &input.flows;
        let ctx = Contention::new(flows);
        let universe: BTreeSet<usize> = (0..flows.len()).collect();
        for &buffer in &[1.0, 4.0, 16.0, 64.0, 256.0, 1024.0] {
            for mode in [BlockingMode::BufferAware, BlockingMode::Conventional] {
                for k in 0..flows.len() {
                    let sets = ctx.sets_within(k, &universe, buffer, mode);
                    assert_eq!(
                        sets.direct,
                        naive_direct(flows, k),
                        "seed {seed} buffer {buffer} mode {mode} flow {k}: direct"
                    );
                    let expected_map: BTreeMap<usize, Subpath> = sets
                        .direct
                        .iter()
                        .map(|&l| (l, naive_subpath(flows, l, k, buffer, mode)))
                        .collect();
                    assert_eq!(
                        sets.direct_map, expected_map,
                        "seed {seed} buffer {buffer} mode {mode} flow {k}: subpaths"
                    );
                    assert_eq!(
                        sets.indirect,
                        naive_indirect(flows, k, buffer, mode),
                        "seed {seed} buffer {buffer} mode {mode} flow {k}: indirect"
                    );
                }
            }
        }
    }
}

#[test]
fn indirect_sets_shrink_as_buffers_grow() {
    for seed in 0..60 {
        let input = random_instance(seed);
        let ctx = Contention::new(&input.flows);
        let universe: BTreeSet<usize> = (0..input.flows.len()).collect();
        for k in 0..input.flows.len() {
            let mut previous: Option<BTreeSet<usize>> = None;
            for &buffer in &BUFFER_GRID {
                let sets = ctx.sets_within(k, &universe, buffer, BlockingMode::BufferAware);
                let current: BTreeSet<usize> = sets.indirect.keys().copied().collect();
                if let Some(prev) = previous {
                    assert!(
                        current.is_subset(&prev),
                        "seed {seed} flow {k}: indirect set grew from {prev:?} to {current:?} \
                         at buffer {buffer}"
                    );
                }
                previous = Some(current);

                // The conventional set never depends on the buffer and
                // always contains the buffer-aware one.
                let conv = ctx.sets_within(k, &universe, buffer, BlockingMode::Conventional);
                let conv_keys: BTreeSet<usize> = conv.indirect.keys().copied().collect();
                assert!(sets.indirect.keys().all(|x| conv_keys.contains(x)));
                assert_eq!(
                    conv,
                    ctx.sets_within(k, &universe, 1.0, BlockingMode::Conventional)
                );
            }
        }
    }
}

#[test]
fn blocking_sets_are_disjoint_and_self_free() {
    for seed in 0..40 {
        let input = random_instance(seed);
        let ctx = Contention::new(&input.flows);
        let universe: BTreeSet<usize> = (0..input.flows.len()).collect();
        for mode in [BlockingMode::BufferAware, BlockingMode::Conventional] {
            for k in 0..input.flows.len() {
                let sets = ctx.sets_within(k, &universe, 16.0, mode);
                assert!(!sets.direct.contains(&k));
                assert!(!sets.indirect.contains_key(&k));
                for x in sets.indirect.keys() {
                    assert!(!sets.direct.contains(x), "direct and indirect overlap");
                }
                for (l, sub) in &sets.direct_map {
                    assert_eq!(sub.flow, *l);
                    assert!(sub.start <= sub.end);
                    assert!(sub.end < input.flows[*l].path.len());
                }
            }
        }
    }
}

#[test]
fn effective_segments_touch_the_held_slice() {
    for seed in 0..40 {
        let input = random_instance(seed);
        let flows = &input.flows;
        let ctx = Contention::new(flows);
        for k in 0..flows.len() {
            for &l in &ctx.direct_set(k) {
                let held = ctx.subpath(l, k, 16.0).unwrap();
                let held_ports = ctx.segment_ports(l, held.start, held.end);
                for x in 0..flows.len() {
                    let Some(eff) = ctx.effective_segment(x, &held) else { continue };
                    assert_eq!(eff.flow, x);
                    assert!(eff.start <= eff.end && eff.end < flows[x].path.len());
                    // The entry position's own claimed port lies on the held
                    // slice; that is what makes the segment "effective".
                    let hop = flows[x].path[eff.start];
                    assert!(
                        held_ports.contains(&(hop.router, hop.out_port)),
                        "seed {seed}: segment start does not touch the held slice"
                    );
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn hop_count_is_exact_integer_ceiling(length in 1u32..10_000, buffer in 1u32..10_000) {
        let expect = (length as usize).div_ceil(buffer as usize);
        prop_assert_eq!(hops(length as f64, buffer as f64), expect.max(1));
    }

    #[test]
    fn hop_count_never_increases_with_buffer(length in 1u32..10_000, buffer in 1u32..5_000) {
        let small = hops(length as f64, buffer as f64);
        let large = hops(length as f64, (buffer * 2) as f64);
        prop_assert!(large <= small);
        prop_assert!(hops(length as f64, length as f64) == 1);
        prop_assert!(small >= 1);
    }
}
