//! Susceptible-Infected cascades on undirected graphs.
//!
//! Every edge between an infected and a susceptible vertex transmits at a
//! constant rate, so the infection count `I(t)` is a point process whose rate
//! is the cut of the infected set. Simulation is first-passage percolation:
//! each edge carries one exponential clock, and a vertex is infected at the
//! earliest arrival over its infected neighbours.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
use crate::process::EventTimes;
use crate::seed::SimSeed;

/// Simple connected undirected graph in compressed adjacency form.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
    hub: Option<usize>,
}

impl Graph {
    /// Builds from an edge list over vertices `0..n`. Rejects self-loops,
    /// repeated edges and disconnected graphs.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let g = Self::from_edges_unchecked(n, edges)?;
        if !g.is_connected() {
            return Err(Error::Graph("graph is not connected".into()));
        }
        Ok(g)
    }

    /// Like [`Graph::from_edges`] without the connectivity requirement.
    pub fn from_edges_unchecked(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Graph("graph has no vertices".into()));
        }
        if n > u32::MAX as usize {
            return Err(Error::Graph(format!("too many vertices: {n}")));
        }
        let mut degree = vec![0usize; n];
        let mut seen = HashSet::with_capacity(edges.len());
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Graph(format!(
                    "edge ({u}, {v}) out of range for n={n}"
                )));
            }
            if u == v {
                return Err(Error::Graph(format!("self-loop at {u}")));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::Graph(format!("repeated edge ({u}, {v})")));
            }
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets.clone();
        let mut neighbors = vec![0u32; offsets[n]];
        for &(u, v) in edges {
            neighbors[fill[u]] = v as u32;
            fill[u] += 1;
            neighbors[fill[v]] = u as u32;
            fill[v] += 1;
        }
        Ok(Self {
            offsets,
            neighbors,
            hub: None,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn edge_count(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.vertex_count())
            .map(|v| self.degree(v))
            .max()
            .unwrap_or(0)
    }

    /// The designated hub, when built by [`build_tree_with_hub`].
    pub fn hub(&self) -> Option<usize> {
        self.hub
    }

    /// Vertices of degree at least `threshold`.
    pub fn high_degree(&self, threshold: usize) -> Vec<usize> {
        (0..self.vertex_count())
            .filter(|&v| self.degree(v) >= threshold)
            .collect()
    }

    /// Largest degree strictly below `threshold` (the low-degree cap).
    pub fn low_degree_cap(&self, threshold: usize) -> usize {
        (0..self.vertex_count())
            .map(|v| self.degree(v))
            .filter(|&d| d < threshold)
            .max()
            .unwrap_or(0)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.vertex_count()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .map(move |&v| (u, v as usize))
                .filter(|&(u, v)| u < v)
        })
    }

    pub fn is_connected(&self) -> bool {
        let n = self.vertex_count();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in self.neighbors(u) {
                let v = v as usize;
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    /// Reads a `u v` edge list (0-indexed, `#` comments allowed).
    pub fn read_edge_list(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut edges = Vec::new();
        let mut n = 0;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                message: format!("expected `u v`, got {line:?}"),
            };
            let mut it = line.split_whitespace();
            let u: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let v: usize = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if it.next().is_some() {
                return Err(bad());
            }
            n = n.max(u + 1).max(v + 1);
            edges.push((u, v));
        }
        Self::from_edges(n, &edges)
    }

    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (u, v) in self.edges() {
            out.push_str(&format!("{u} {v}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Complete binary tree of the given height (`2^(height+1) - 1` vertices,
/// heap-indexed so `v`'s children are `2v+1`, `2v+2`) plus `extra_leaves`
/// new leaves attached to the leftmost vertex at depth `height - 1`, which
/// becomes the hub.
pub fn build_tree_with_hub(height: u32, extra_leaves: usize) -> Result<Graph> {
    if height < 2 {
        return Err(Error::param(format!(
            "tree height must be at least 2, got {height}"
        )));
    }
    if height > 26 {
        return Err(Error::param(format!("tree height {height} is too large")));
    }
    let tree = (1usize << (height + 1)) - 1;
    let hub = (1usize << (height - 1)) - 1;
    let mut edges = Vec::with_capacity(tree - 1 + extra_leaves);
    for v in 1..tree {
        edges.push(((v - 1) / 2, v));
    }
    for i in 0..extra_leaves {
        edges.push((hub, tree + i));
    }
    let mut g = Graph::from_edges_unchecked(tree + extra_leaves, &edges)?;
    g.hub = Some(hub);
    Ok(g)
}

/// Infection time of every vertex in one SI run.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeTrace {
    pub infection_time: Vec<f64>,
    pub source: usize,
}

impl CascadeTrace {
    pub fn vertex_count(&self) -> usize {
        self.infection_time.len()
    }

    /// Vertices sorted by infection time.
    pub fn order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.infection_time.len()).collect();
        order.sort_by(|&a, &b| self.infection_time[a].total_cmp(&self.infection_time[b]));
        order
    }

    /// Checks the source is at time 0 and every other vertex has a neighbour
    /// infected strictly earlier.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        if self.infection_time.len() != g.vertex_count() {
            return Err(Error::InvalidData("trace and graph sizes differ".into()));
        }
        if self.infection_time[self.source] != 0.0 {
            return Err(Error::InvalidData(
                "source must be infected at time 0".into(),
            ));
        }
        for v in 0..g.vertex_count() {
            let t = self.infection_time[v];
            if !t.is_finite() {
                return Err(Error::InvalidData(format!("vertex {v} never infected")));
            }
            if v != self.source
                && !g
                    .neighbors(v)
                    .iter()
                    .any(|&u| self.infection_time[u as usize] < t)
            {
                return Err(Error::InvalidData(format!(
                    "vertex {v} has no neighbour infected before {t}"
                )));
            }
        }
        Ok(())
    }

    /// Reads a `vertex,time` CSV. The source is the vertex at time 0.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut pairs = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |m: String| Error::Parse {
                path: path.display().to_string(),
                line: i + 2,
                message: m,
            };
            if rec.len() != 2 {
                return Err(bad(format!("expected 2 fields, got {}", rec.len())));
            }
            let v: usize = rec[0]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad vertex {:?}", &rec[0])))?;
            let t: f64 = rec[1]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad time {:?}", &rec[1])))?;
            pairs.push((v, t));
        }
        let n = pairs.iter().map(|p| p.0 + 1).max().unwrap_or(0);
        let mut infection_time = vec![f64::NAN; n];
        for (v, t) in pairs {
            if !infection_time[v].is_nan() {
                return Err(Error::InvalidData(format!(
                    "{}: vertex {v} listed twice",
                    path.display()
                )));
            }
            infection_time[v] = t;
        }
        if let Some(v) = infection_time.iter().position(|t| t.is_nan()) {
            return Err(Error::InvalidData(format!(
                "{}: vertex {v} missing",
                path.display()
            )));
        }
        let source = infection_time
            .iter()
            .position(|&t| t == 0.0)
            .ok_or_else(|| {
                Error::InvalidData(format!("{}: no vertex at time 0", path.display()))
            })?;
        Ok(Self {
            infection_time,
            source,
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("vertex,time\n");
        for (v, t) in self.infection_time.iter().enumerate() {
            out.push_str(&format!("{v},{t}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    time: f64,
    vertex: u32,
}

impl Eq for Pending {}

impl Ord for Pending {
    // reversed: BinaryHeap pops the earliest time
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Per-edge exponential clocks, random-access by vertex pair so a given edge
/// draws the same clock regardless of processing order or of edges added
/// elsewhere in the graph.
struct EdgeClocks {
    rng: ChaCha8Rng,
    stride: u128,
}

impl EdgeClocks {
    fn new(seed: SimSeed, n: usize) -> Self {
        Self {
            rng: seed.rng(),
            stride: n as u128,
        }
    }

    fn draw(&mut self, u: usize, v: usize) -> f64 {
        let (a, b) = (u.min(v) as u128, u.max(v) as u128);
        // 64 words per pair leaves room for Exp1 rejection retries
        self.rng.set_word_pos((a * self.stride + b) * 64);
        self.rng.sample(Exp1)
    }
}

/// Runs one SI cascade from `source` with per-edge transmission rate `rate`.
pub fn simulate_si_with_rate(
    g: &Graph,
    source: usize,
    seed: SimSeed,
    rate: f64,
) -> Result<CascadeTrace> {
    let n = g.vertex_count();
    if source >= n {
        return Err(Error::param(format!(
            "source {source} out of range for n={n}"
        )));
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::param("infection rate must be positive"));
    }
    if !g.is_connected() {
        return Err(Error::Graph("graph is not connected".into()));
    }
    let mut clocks = EdgeClocks::new(seed, n);
    let mut time = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::with_capacity(n);
    time[source] = 0.0;
    heap.push(Pending {
        time: 0.0,
        vertex: source as u32,
    });
    while let Some(Pending { time: t, vertex }) = heap.pop() {
        let v = vertex as usize;
        if done[v] {
            continue;
        }
        done[v] = true;
        for &w in g.neighbors(v) {
            let w = w as usize;
            if done[w] {
                continue;
            }
            let arrival = t + clocks.draw(v, w) / rate;
            if arrival < time[w] {
                time[w] = arrival;
                heap.push(Pending {
                    time: arrival,
                    vertex: w as u32,
                });
            }
        }
    }
    Ok(CascadeTrace {
        infection_time: time,
        source,
    })
}

/// Runs one SI cascade with unit transmission rate.
pub fn simulate_si(g: &Graph, source: usize, seed: SimSeed) -> Result<CascadeTrace> {
    simulate_si_with_rate(g, source, seed, 1.0)
}

/// Sorted infection times (source included) as the counting process `I(t)`.
pub fn infection_count_process(trace: &CascadeTrace) -> EventTimes {
    let mut times = trace.infection_time.clone();
    times.sort_by(f64::total_cmp);
    let horizon = times.last().copied().unwrap_or(0.0);
    EventTimes::from_sorted_unchecked(times, horizon)
}

/// Number of edges with exactly one infected endpoint.
pub fn rate_at(g: &Graph, infected: &[bool]) -> usize {
    g.edges()
        .filter(|&(u, v)| infected[u] != infected[v])
        .count()
}

/// Change of the cut when `v` joins the infected set:
/// `deg(v) - 2 |N(v) ∩ infected|`.
pub fn jump_at_infection(g: &Graph, infected: &[bool], v: usize) -> Result<i64> {
    if v >= g.vertex_count() {
        return Err(Error::param(format!("vertex {v} out of range")));
    }
    if infected[v] {
        return Err(Error::param(format!("vertex {v} is already infected")));
    }
    let inf = g
        .neighbors(v)
        .iter()
        .filter(|&&u| infected[u as usize])
        .count();
    if inf == 0 {
        return Err(Error::param(format!(
            "vertex {v} has no infected neighbour"
        )));
    }
    Ok(g.degree(v) as i64 - 2 * inf as i64)
}
