//! Compact fixture construction for tests and examples: routers, links and
//! flows by name, with the port conventions the rest of the crate expects.
//!
//! A link `x -> y` creates output port `to_y` on `x` and input port `from_x`
//! on `y`. Every flow gets its own injection port (`src_<id>`) at its first
//! router and its own ejection port (`dst_<id>`) at its last, so two flows
//! only share an input buffer when they genuinely share the upstream link.

use crate::model::{Flow, Hop, Link, NetworkModel, Port, Router};

#[derive(Debug, Clone)]
pub struct NetBuilder {
    capacity: f64,
    epsilon: f64,
    buffer: f64,
    routers: Vec<Router>,
    links: Vec<Link>,
    flows: Vec<Flow>,
}

impl NetBuilder {
    pub fn new(capacity: f64, epsilon: f64, buffer: f64) -> NetBuilder {
        NetBuilder {
            capacity,
            epsilon,
            buffer,
            routers: Vec::new(),
            links: Vec::new(),
            flows: Vec::new(),
        }
    }

    fn router_idx(&mut self, name: &str) -> usize {
        if let Some(i) = self.routers.iter().position(|r| r.id == name) {
            return i;
        }
        self.routers.push(Router { id: name.to_string(), ports: Vec::new() });
        self.routers.len() - 1
    }

    fn port_idx(&mut self, router: usize, name: &str) -> usize {
        if let Some(i) = self.routers[router].ports.iter().position(|p| p.id == name) {
            return i;
        }
        self.routers[router].ports.push(Port { id: name.to_string(), buffer: None });
        self.routers[router].ports.len() - 1
    }

    fn find_port(&self, router: usize, name: &str) -> Option<usize> {
        self.routers[router].ports.iter().position(|p| p.id == name)
    }

    /// Add the link `from -> to` (and both routers) unless already present.
    pub fn link(mut self, from: &str, to: &str) -> NetBuilder {
        let fr = self.router_idx(from);
        let tr = self.router_idx(to);
        let out = self.port_idx(fr, &format!("to_{to}"));
        let inp = self.port_idx(tr, &format!("from_{from}"));
        let link = Link { from: (fr, out), to: (tr, inp) };
        if !self.links.contains(&link) {
            self.links.push(link);
        }
        self
    }

    /// Add links along consecutive router names.
    pub fn chain(mut self, names: &[&str]) -> NetBuilder {
        for pair in names.windows(2) {
            self = self.link(pair[0], pair[1]);
        }
        self
    }

    /// A chain plus the closing link back to the first router.
    pub fn ring(mut self, names: &[&str]) -> NetBuilder {
        self = self.chain(names);
        if names.len() > 1 {
            self = self.link(names[names.len() - 1], names[0]);
        }
        self
    }

    /// Add a flow along existing links, with deadline equal to the period
    /// and no jitter (adjust the returned structs for anything fancier).
    ///
    /// Panics if a link along the route is missing — fixtures should build
    /// their topology first.
    pub fn flow(mut self, id: &str, period: f64, length: f64, route: &[&str]) -> NetBuilder {
        assert!(!route.is_empty(), "flow {id} needs at least one router");
        let routers: Vec<usize> = route.iter().map(|n| self.router_idx(n)).collect();
        let mut path = Vec::with_capacity(routers.len());
        for (i, &router) in routers.iter().enumerate() {
            let in_port = if i == 0 {
                self.port_idx(router, &format!("src_{id}"))
            } else {
                self.find_port(router, &format!("from_{}", route[i - 1]))
                    .unwrap_or_else(|| panic!("flow {id}: no link {} -> {}", route[i - 1], route[i]))
            };
            let out_port = if i == routers.len() - 1 {
                self.port_idx(router, &format!("dst_{id}"))
            } else {
                self.find_port(router, &format!("to_{}", route[i + 1]))
                    .unwrap_or_else(|| panic!("flow {id}: no link {} -> {}", route[i], route[i + 1]))
            };
            path.push(Hop { router, in_port, out_port });
        }
        self.flows.push(Flow {
            id: id.to_string(),
            period,
            deadline: period,
            length,
            jitter: 0.0,
            path,
        });
        self
    }

    pub fn build(self) -> (NetworkModel, Vec<Flow>) {
        (
            NetworkModel {
                capacity: self.capacity,
                epsilon: self.epsilon,
                buffer: self.buffer,
                time_unit: "time units".to_string(),
                routers: self.routers,
                links: self.links,
            },
            self.flows,
        )
    }
}
