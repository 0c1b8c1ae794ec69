//! Exact s-t max-flow / min-cut for two-terminal networks.
//!
//! Dinic's algorithm on a residual graph with explicit source and sink
//! vertices. Terminal capacities shared by a node are cancelled up front
//! (the `min(to_source, to_sink)` part of every node is pushed directly),
//! which on GrabCut-style graphs removes most of the work.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Capacity used for hard seed constraints; far above any energy term.
pub const HARD: f64 = 1e9;

/// Residual capacities at or below this are treated as saturated.
const EPS: f64 = 1e-9;

/// Two-terminal network over `n_nodes` non-terminal nodes.
#[derive(Debug, Clone, Default)]
pub struct FlowNetwork {
    n_nodes: usize,
    /// `(cap_to_source, cap_to_sink)` per node.
    terminal: Vec<(f64, f64)>,
    edges: Vec<(usize, usize, f64, f64)>,
}

fn check_cap(c: f64) -> Result<()> {
    if c >= 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidCapacity(c))
    }
}

impl FlowNetwork {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            terminal: vec![(0.0, 0.0); n_nodes],
            edges: Vec::new(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    fn check_node(&self, i: usize) -> Result<()> {
        if i < self.n_nodes {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                index: i,
                n_nodes: self.n_nodes,
            })
        }
    }

    /// Sets the source->node and node->sink capacities of `node`.
    pub fn set_terminal(&mut self, node: usize, to_source: f64, to_sink: f64) -> Result<()> {
        self.check_node(node)?;
        check_cap(to_source)?;
        check_cap(to_sink)?;
        self.terminal[node] = (to_source, to_sink);
        Ok(())
    }

    pub fn terminal(&self, node: usize) -> (f64, f64) {
        self.terminal[node]
    }

    /// Adds the arc pair `u -> v` (capacity `cap_uv`) and `v -> u` (`cap_vu`).
    pub fn add_edge(&mut self, u: usize, v: usize, cap_uv: f64, cap_vu: f64) -> Result<()> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(Error::InvalidParam(format!("self-loop on node {u}")));
        }
        check_cap(cap_uv)?;
        check_cap(cap_vu)?;
        self.edges.push((u, v, cap_uv, cap_vu));
        Ok(())
    }

    pub fn edges(&self) -> &[(usize, usize, f64, f64)] {
        &self.edges
    }
}

/// Which terminal a node is attached to after the cut.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Sink,
}

#[derive(Debug, Clone)]
pub struct Cut {
    pub flow: f64,
    pub partition: Vec<Side>,
}

/// Capacity of the cut induced by `partition`.
pub fn cut_capacity(g: &FlowNetwork, partition: &[Side]) -> f64 {
    let mut total = 0.0;
    for (i, &(cs, ct)) in g.terminal.iter().enumerate() {
        total += match partition[i] {
            Side::Source => ct,
            Side::Sink => cs,
        };
    }
    for &(u, v, cuv, cvu) in &g.edges {
        match (partition[u], partition[v]) {
            (Side::Source, Side::Sink) => total += cuv,
            (Side::Sink, Side::Source) => total += cvu,
            _ => {}
        }
    }
    total
}

struct Residual {
    head: Vec<usize>,
    next: Vec<usize>,
    to: Vec<usize>,
    cap: Vec<f64>,
}

const NIL: usize = usize::MAX;

impl Residual {
    fn new(n: usize, m: usize) -> Self {
        Self {
            head: vec![NIL; n],
            next: Vec::with_capacity(2 * m),
            to: Vec::with_capacity(2 * m),
            cap: Vec::with_capacity(2 * m),
        }
    }

    // arcs are stored in pairs; `e ^ 1` is the reverse of `e`
    fn add(&mut self, u: usize, v: usize, cuv: f64, cvu: f64) {
        for (a, b, c) in [(u, v, cuv), (v, u, cvu)] {
            self.to.push(b);
            self.cap.push(c);
            self.next.push(self.head[a]);
            self.head[a] = self.to.len() - 1;
        }
    }

    fn bfs_levels(&self, s: usize, level: &mut [i32]) {
        level.iter_mut().for_each(|l| *l = -1);
        let mut queue = VecDeque::new();
        level[s] = 0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let mut e = self.head[u];
            while e != NIL {
                let v = self.to[e];
                if self.cap[e] > EPS && level[v] < 0 {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
                e = self.next[e];
            }
        }
    }

    /// Finds blocking flow on the level graph with an explicit stack.
    fn blocking_flow(&mut self, s: usize, t: usize, level: &[i32], iter: &mut [usize]) -> f64 {
        let mut total = 0.0;
        let mut path: Vec<usize> = Vec::new();
        loop {
            let u = match path.last() {
                Some(&e) => self.to[e],
                None => s,
            };
            if u == t {
                let bottleneck = path
                    .iter()
                    .map(|&e| self.cap[e])
                    .fold(f64::INFINITY, f64::min);
                for &e in &path {
                    self.cap[e] -= bottleneck;
                    self.cap[e ^ 1] += bottleneck;
                }
                total += bottleneck;
                // restart from the first saturated arc
                let cut = path
                    .iter()
                    .position(|&e| self.cap[e] <= EPS)
                    .unwrap_or(0);
                path.truncate(cut);
                continue;
            }
            let mut advanced = false;
            while iter[u] != NIL {
                let e = iter[u];
                let v = self.to[e];
                if self.cap[e] > EPS && level[v] == level[u] + 1 {
                    path.push(e);
                    advanced = true;
                    break;
                }
                iter[u] = self.next[e];
            }
            if !advanced {
                match path.pop() {
                    // dead end: drop the arc that led here
                    Some(e) => {
                        let prev = if path.is_empty() { s } else { self.to[*path.last().unwrap()] };
                        debug_assert_eq!(iter[prev], e);
                        iter[prev] = self.next[e];
                    }
                    None => return total,
                }
            }
        }
    }
}

/// Computes a maximum flow and the minimum cut whose source side is the set
/// of nodes reachable from the source in the final residual graph (the
/// unique minimal source set, so ties resolve toward the sink).
pub fn max_flow(g: &FlowNetwork) -> Cut {
    let n = g.n_nodes;
    let (s, t) = (n, n + 1);
    let mut res = Residual::new(n + 2, g.edges.len() + n);
    let mut flow = 0.0;
    for (i, &(cs, ct)) in g.terminal.iter().enumerate() {
        let shared = cs.min(ct);
        flow += shared;
        let (cs, ct) = (cs - shared, ct - shared);
        if cs > 0.0 {
            res.add(s, i, cs, 0.0);
        }
        if ct > 0.0 {
            res.add(i, t, ct, 0.0);
        }
    }
    for &(u, v, cuv, cvu) in &g.edges {
        res.add(u, v, cuv, cvu);
    }

    let mut level = vec![-1i32; n + 2];
    let mut iter = vec![NIL; n + 2];
    loop {
        res.bfs_levels(s, &mut level);
        if level[t] < 0 {
            break;
        }
        iter.copy_from_slice(&res.head);
        flow += res.blocking_flow(s, t, &level, &mut iter);
    }

    // level now holds residual reachability from the source
    let partition = (0..n)
        .map(|i| if level[i] >= 0 { Side::Source } else { Side::Sink })
        .collect();
    Cut { flow, partition }
}
