//! Test-support fixtures: a by-hand network builder and a randomized
//! generator of small feed-forward instances for property suites.

pub mod builder;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ParsedInput;
use crate::sim::SimSettings;
use crate::synth::builder::NetBuilder;

const MAX_ROUTERS: usize = 12;
const MAX_FLOWS: usize = 8;
const CAPACITY: f64 = 100.0;
const FLIT_SIZE: f64 = 4.0;
/// Per-port utilization ceiling, kept well under capacity so every
/// generated instance is stable under the analysis and the simulator has
/// real slack to randomize against.
const UTILIZATION_CAP: f64 = 0.45;

/// Generate one random feed-forward instance (at most [`MAX_FLOWS`] flows
/// over at most [`MAX_ROUTERS`] routers), deterministically from the seed.
///
/// Routes are strictly increasing in router index, so burst propagation is
/// cycle-free by construction; per-port load stays below
/// [`UTILIZATION_CAP`] of capacity, which keeps every residual service
/// positive-rate and every instance stable.
pub fn random_instance(seed: u64) -> ParsedInput {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_routers = rng.gen_range(4..=MAX_ROUTERS);
    let n_flows = rng.gen_range(2..=MAX_FLOWS);

    // Monotone routes over distinct router indices.
    let mut routes: Vec<Vec<usize>> = Vec::with_capacity(n_flows);
    for _ in 0..n_flows {
        let len = rng.gen_range(2..=n_routers.min(6));
        let mut pool: Vec<usize> = (0..n_routers).collect();
        let (picked, _) = pool.partial_shuffle(&mut rng, len);
        let mut route = picked.to_vec();
        route.sort_unstable();
        routes.push(route);
    }

    let mut lengths: Vec<f64> = Vec::with_capacity(n_flows);
    let mut periods: Vec<f64> = Vec::with_capacity(n_flows);
    let mut jitters: Vec<f64> = Vec::with_capacity(n_flows);
    for _ in 0..n_flows {
        lengths.push(4.0 * rng.gen_range(2..=16) as f64); // 8..=64 bytes
        periods.push([40.0, 80.0, 160.0, 320.0][rng.gen_range(0..4)]);
        jitters.push(0.0); // filled in below, after periods settle
    }

    // Enforce the utilization cap: while some shared link is too hot, halve
    // the rate of its heaviest flow by doubling that flow's period.
    loop {
        let mut hottest: Option<(f64, usize)> = None; // (load, heaviest flow)
        let mut edges: std::collections::BTreeMap<(usize, usize), Vec<usize>> = Default::default();
        for (k, route) in routes.iter().enumerate() {
            for pair in route.windows(2) {
                edges.entry((pair[0], pair[1])).or_default().push(k);
            }
        }
        for users in edges.values() {
            let load: f64 = users.iter().map(|&k| lengths[k] / periods[k]).sum();
            if load > UTILIZATION_CAP * CAPACITY {
                let heaviest = users
                    .iter()
                    .copied()
                    .max_by(|&a, &b| (lengths[a] / periods[a]).total_cmp(&(lengths[b] / periods[b])))
                    .expect("a hot edge has users");
                if hottest.map_or(true, |(l, _)| load > l) {
                    hottest = Some((load, heaviest));
                }
            }
        }
        match hottest {
            Some((_, flow)) => periods[flow] *= 2.0,
            None => break,
        }
    }

    for (k, jitter) in jitters.iter_mut().enumerate() {
        if rng.gen_bool(0.5) {
            *jitter = rng.gen_range(0.0..0.2 * periods[k]);
        }
    }

    let epsilon = [0.1, 0.5, 1.0][rng.gen_range(0..3)];
    let buffer = [8.0, 16.0, 32.0, 64.0, 128.0][rng.gen_range(0..5)];

    let names: Vec<String> = (0..n_routers).map(|i| format!("r{i}")).collect();
    let mut b = NetBuilder::new(CAPACITY, epsilon, buffer);
    for route in &routes {
        for pair in route.windows(2) {
            b = b.link(&names[pair[0]], &names[pair[1]]);
        }
    }
    for (k, route) in routes.iter().enumerate() {
        let stops: Vec<&str> = route.iter().map(|&i| names[i].as_str()).collect();
        b = b.flow(&format!("f{k}"), periods[k], lengths[k], &stops);
    }
    let (model, mut flows) = b.build();
    for (k, f) in flows.iter_mut().enumerate() {
        f.jitter = jitters[k];
        f.deadline = 2.0 * f.period;
    }

    let horizon = 4.0 * periods.iter().cloned().fold(0.0, f64::max);
    let sim = SimSettings {
        horizon,
        trials: 1,
        seed: seed.wrapping_mul(0x0100_0000_01b3).wrapping_add(0xcbf2_9ce4_8422_2325),
        flit_size: FLIT_SIZE,
        offsets: vec![0.0; flows.len()],
    };
    debug_assert!(crate::model::validate(&model, &flows).is_valid());
    ParsedInput { model, flows, sim: Some(sim) }
}
