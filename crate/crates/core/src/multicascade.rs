//! High-degree vertex estimation from several independent cascade traces.
//!
//! Each trace's infection-count process goes through the detector; vertices
//! infected within `w` of an estimated change time become that trace's
//! candidates, and the estimate is the intersection over all traces.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use crate::detector::{detect, DetectorConfig};
use crate::error::{Error, Result};
use crate::seed::SimSeed;
use crate::si::{infection_count_process, simulate_si, CascadeTrace, Graph};

const SOURCE_SALT: u64 = 1;

/// K traces over one vertex universe.
#[derive(Debug, Clone)]
pub struct CascadeBundle {
    traces: Vec<CascadeTrace>,
}

impl CascadeBundle {
    pub fn new(traces: Vec<CascadeTrace>) -> Result<Self> {
        let first = traces
            .first()
            .ok_or_else(|| Error::param("a cascade bundle needs at least one trace"))?;
        let n = first.vertex_count();
        if let Some(i) = traces.iter().position(|t| t.vertex_count() != n) {
            return Err(Error::InvalidData(format!(
                "trace {i} has {} vertices, trace 0 has {n}",
                traces[i].vertex_count()
            )));
        }
        Ok(Self { traces })
    }

    pub fn traces(&self) -> &[CascadeTrace] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Loads every `*.csv` in `dir` (sorted by file name) as a trace.
    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        let traces = paths
            .iter()
            .map(|p| CascadeTrace::read_csv(p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(traces)
    }
}

/// `cascades` independent SI cascades on `g`. Cascade `i` runs on stream `i`
/// of `seed`, from a source drawn uniformly from that stream's derived seed.
pub fn simulate_bundle(g: &Graph, cascades: usize, seed: u64) -> Result<CascadeBundle> {
    let traces = (0..cascades as u64)
        .into_par_iter()
        .map(|i| {
            let s = SimSeed::new(seed, i);
            let source = s
                .derive(SOURCE_SALT)
                .rng()
                .random_range(0..g.vertex_count());
            simulate_si(g, source, s)
        })
        .collect::<Result<Vec<_>>>()?;
    CascadeBundle::new(traces)
}

/// Vertices infected within `window` of some estimated change time.
pub fn candidate_vertices(trace: &CascadeTrace, estimates: &[f64], window: f64) -> BTreeSet<usize> {
    if estimates.is_empty() {
        return BTreeSet::new();
    }
    if window.is_infinite() {
        return (0..trace.vertex_count()).collect();
    }
    let order = trace.order();
    let times: Vec<f64> = order.iter().map(|&v| trace.infection_time[v]).collect();
    let mut out = BTreeSet::new();
    for &e in estimates {
        let lo = times.partition_point(|&t| t < e - window);
        let hi = times.partition_point(|&t| t <= e + window);
        out.extend(order[lo..hi].iter().copied());
    }
    out
}

/// Per-trace record kept for the provenance report.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeFinding {
    pub source: usize,
    pub estimates: Vec<f64>,
    pub candidates: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HighDegreeEstimate {
    pub vertices: BTreeSet<usize>,
    pub window: f64,
    pub per_cascade: Vec<CascadeFinding>,
}

impl HighDegreeEstimate {
    /// Newline-separated vertex ids.
    pub fn vertex_list(&self) -> String {
        self.vertices.iter().map(|v| format!("{v}\n")).collect()
    }

    pub fn provenance(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "window={}", self.window);
        let _ = writeln!(out, "cascades={}", self.per_cascade.len());
        for (i, c) in self.per_cascade.iter().enumerate() {
            let est: Vec<String> = c.estimates.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "cascade.{i}.source={}", c.source);
            let _ = writeln!(out, "cascade.{i}.t_hat={}", est.join(","));
            let _ = writeln!(out, "cascade.{i}.candidate_count={}", c.candidates.len());
            if c.candidates.len() <= 64 {
                let ids: Vec<String> = c.candidates.iter().map(usize::to_string).collect();
                let _ = writeln!(out, "cascade.{i}.candidates={}", ids.join(","));
            }
        }
        let ids: Vec<String> = self.vertices.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "estimate={}", ids.join(","));
        out
    }
}

/// Detects change points in every trace (in parallel) and intersects the
/// candidate sets. `window` defaults to `kδ` when `None`. The detector
/// horizon is replaced by each trace's last infection time.
pub fn estimate_high_degree(
    bundle: &CascadeBundle,
    config: &DetectorConfig,
    window: Option<f64>,
) -> Result<HighDegreeEstimate> {
    config.validate()?;
    let window = window.unwrap_or(config.order as f64 * config.delta);
    if !(window > 0.0) {
        return Err(Error::param("candidate window must be positive"));
    }
    let per_cascade = bundle
        .traces
        .par_iter()
        .map(|trace| {
            let process = infection_count_process(trace);
            let cfg = DetectorConfig {
                horizon: process.horizon(),
                ..config.clone()
            };
            let report = detect(&process, &cfg)?;
            let estimates = report.times();
            let candidates = candidate_vertices(trace, &estimates, window);
            Ok(CascadeFinding {
                source: trace.source,
                estimates,
                candidates,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let vertices = intersect(per_cascade.iter().map(|c| &c.candidates));
    Ok(HighDegreeEstimate {
        vertices,
        window,
        per_cascade,
    })
}

fn intersect<'a>(mut sets: impl Iterator<Item = &'a BTreeSet<usize>>) -> BTreeSet<usize> {
    let Some(first) = sets.next() else {
        return BTreeSet::new();
    };
    sets.fold(first.clone(), |acc, s| {
        acc.intersection(s).copied().collect()
    })
}
