//! Monte Carlo experiments over `(k, δ)` grids.
//!
//! Trial `i` of an experiment uses stream `i` of the base seed, and every
//! `(k, δ)` cell of that trial analyzes the same realized process (common
//! random numbers). Trials run on a worker pool; results are merged in trial
//! order, so output does not depend on scheduling or worker count.

use std::fmt::Write as _;
use std::fs;
use std::hash::Hasher;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector::{argmax_single, DEFAULT_GRID_FRACTION};
use crate::error::{Error, Result};
use crate::poisson::{simulate, simulate_binned};
use crate::process::{BinnedCounting, CountingFunction, EventTimes};
use crate::rate::RateSpec;
use crate::seed::SimSeed;
use crate::si::{build_tree_with_hub, infection_count_process, simulate_si, Graph};

const ONSET_SALT: u64 = 0x6f6e_7365_74;
const SOURCE_SALT: u64 = 0x736f_7572_6365;

/// Smooth background of a smooth-plus-jump scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Background {
    /// `B (1 + sin t)`
    #[default]
    Sinusoid,
    /// `B`
    Constant,
}

/// Where each SI cascade starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SourceChoice {
    #[default]
    Root,
    Vertex(usize),
    /// Uniform over all vertices, drawn per trial.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Scenario {
    /// Background plus `jump exp(-(t - t0)) 1(t >= t0)`, `t0 ~ U[onset]`.
    SmoothJump {
        base: f64,
        jump: f64,
        onset: (f64, f64),
        horizon: f64,
        #[serde(default)]
        background: Background,
    },
    /// SI cascade on the binary tree with one hub; truth is the hub's infection time.
    SiTree {
        height: u32,
        hub_degree: usize,
        #[serde(default)]
        source: SourceChoice,
    },
    /// Constant rate, no jump; truth drawn from `U[onset]` and unrelated to
    /// the data. Only `[onset]` is scanned, so the estimate behaves like a
    /// uniform guess on the same interval.
    ConstNull {
        base: f64,
        onset: (f64, f64),
        horizon: f64,
    },
    /// Deterministic events at `t0 + (i + 1/2)/slope`: rate steps from 0 to `slope` at `t0`.
    Ramp {
        slope: f64,
        onset: (f64, f64),
        horizon: f64,
    },
}

impl Scenario {
    fn onset_range(&self) -> Option<(f64, f64)> {
        match self {
            Scenario::SmoothJump { onset, .. }
            | Scenario::ConstNull { onset, .. }
            | Scenario::Ramp { onset, .. } => Some(*onset),
            Scenario::SiTree { .. } => None,
        }
    }

    fn horizon(&self) -> Option<f64> {
        match self {
            Scenario::SmoothJump { horizon, .. }
            | Scenario::ConstNull { horizon, .. }
            | Scenario::Ramp { horizon, .. } => Some(*horizon),
            Scenario::SiTree { .. } => None,
        }
    }
}

/// How simulated events are held in memory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EventStorage {
    #[default]
    Full,
    /// Counts at `resolution`; stencil points snap down to bin edges.
    Binned { resolution: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: Scenario,
    pub orders: Vec<usize>,
    pub deltas: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    /// Grid step as a fraction of δ.
    #[serde(default = "default_grid_fraction")]
    pub grid_fraction: f64,
    #[serde(default)]
    pub storage: EventStorage,
}

fn default_grid_fraction() -> f64 {
    DEFAULT_GRID_FRACTION
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.orders.is_empty() || self.deltas.is_empty() {
            return Err(Error::param("order and delta grids must be non-empty"));
        }
        if self.trials == 0 {
            return Err(Error::param("trials must be at least 1"));
        }
        if self
            .orders
            .iter()
            .any(|&k| k == 0 || k > crate::derivative::MAX_ORDER)
        {
            return Err(Error::param("orders must be in 1..=20"));
        }
        if self.deltas.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::param("delta must be positive"));
        }
        if !(self.grid_fraction > 0.0 && self.grid_fraction <= 1.0) {
            return Err(Error::param("grid fraction must be in (0, 1]"));
        }
        if let EventStorage::Binned { resolution } = self.storage {
            if !(resolution > 0.0) {
                return Err(Error::param("binned storage resolution must be positive"));
            }
        }
        if let (Some((lo, hi)), Some(horizon)) =
            (self.scenario.onset_range(), self.scenario.horizon())
        {
            let kmax = *self.orders.iter().max().unwrap() as f64;
            let dmax = self.deltas.iter().copied().fold(0.0, f64::max);
            let margin_lo = (kmax - 1.0) * dmax;
            if !(lo <= hi) || lo < margin_lo || hi > horizon - dmax {
                return Err(Error::param(format!(
                    "onset range [{lo}, {hi}] must lie inside [{margin_lo}, {}] so every stencil can reach it",
                    horizon - dmax
                )));
            }
        }
        match &self.scenario {
            Scenario::SmoothJump { base, jump, .. } if !(*base > 0.0 && *jump > 0.0) => {
                Err(Error::param("base and jump rates must be positive"))
            }
            Scenario::ConstNull { base, .. } if !(*base > 0.0) => {
                Err(Error::param("base rate must be positive"))
            }
            Scenario::Ramp { slope, .. } if !(*slope > 0.0) => {
                Err(Error::param("slope must be positive"))
            }
            Scenario::SiTree { height, .. } if *height < 2 => {
                Err(Error::param("tree height must be at least 2"))
            }
            _ => Ok(()),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self =
            toml::from_str(text).map_err(|e| Error::param(format!("bad experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Built-in experiment presets; see [`PRESET_NAMES`].
    pub fn preset(name: &str) -> Result<Self> {
        let jump_deltas = linspace(0.05, 0.5, 24);
        let si_deltas = linspace(0.1, 2.0, 20);
        let smooth = |base: f64, jump: f64| Scenario::SmoothJump {
            base,
            jump,
            onset: (5.0, 15.0),
            horizon: 20.0,
            background: Background::Sinusoid,
        };
        let spec = match name {
            "single-jump" => Self {
                name: name.into(),
                scenario: Scenario::SmoothJump {
                    base: 1e6,
                    jump: 4e4,
                    onset: (9.0, 9.0),
                    horizon: 20.0,
                    background: Background::Sinusoid,
                },
                orders: vec![1, 2, 3, 4],
                deltas: vec![0.2],
                trials: 1,
                seed: 1,
                grid_fraction: DEFAULT_GRID_FRACTION,
                storage: EventStorage::Full,
            },
            "smooth-jump-scaled" => Self {
                name: name.into(),
                scenario: smooth(1e4, 8e3),
                orders: (1..=6).collect(),
                deltas: jump_deltas,
                trials: 100,
                seed: 2,
                grid_fraction: DEFAULT_GRID_FRACTION,
                storage: EventStorage::Full,
            },
            "smooth-jump-full" => Self {
                name: name.into(),
                scenario: smooth(1e6, 8e4),
                orders: (1..=10).collect(),
                deltas: jump_deltas,
                trials: 100,
                seed: 2,
                grid_fraction: DEFAULT_GRID_FRACTION,
                storage: EventStorage::Binned { resolution: 1e-4 },
            },
            "hub-tree-trace" => Self {
                name: name.into(),
                scenario: Scenario::SiTree {
                    height: 18,
                    hub_degree: 3000,
                    source: SourceChoice::Root,
                },
                orders: vec![1, 2, 3],
                deltas: vec![0.4],
                trials: 1,
                seed: 4,
                grid_fraction: DEFAULT_GRID_FRACTION,
                storage: EventStorage::Full,
            },
            "hub-tree" => Self {
                name: name.into(),
                scenario: Scenario::SiTree {
                    height: 18,
                    hub_degree: 8000,
                    source: SourceChoice::Root,
                },
                orders: (1..=5).collect(),
                deltas: si_deltas,
                trials: 200,
                seed: 5,
                grid_fraction: DEFAULT_GRID_FRACTION,
                storage: EventStorage::Full,
            },
            other => {
                return Err(Error::param(format!(
                    "unknown experiment preset {other:?} (expected one of {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Experiment presets accepted by [`ExperimentSpec::preset`].
pub const PRESET_NAMES: &[&str] = &[
    "single-jump",
    "smooth-jump-scaled",
    "smooth-jump-full",
    "hub-tree-trace",
    "hub-tree",
];

/// One realized process plus the truth it is scored against.
pub struct Realization {
    pub process: RealizedProcess,
    pub truth: f64,
    /// Time window the estimator scans.
    pub scan: (f64, f64),
    pub checksum: u64,
}

pub enum RealizedProcess {
    Events(EventTimes),
    Binned(BinnedCounting),
}

impl CountingFunction for RealizedProcess {
    fn count(&self, t: f64) -> f64 {
        match self {
            RealizedProcess::Events(e) => e.count(t),
            RealizedProcess::Binned(b) => b.count(t),
        }
    }
    fn horizon(&self) -> f64 {
        match self {
            RealizedProcess::Events(e) => CountingFunction::horizon(e),
            RealizedProcess::Binned(b) => b.horizon(),
        }
    }
}

fn checksum_events(times: &[f64]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    h.write_usize(times.len());
    for t in times {
        h.write_u64(t.to_bits());
    }
    h.finish()
}

fn checksum_counts(counts: &[u64]) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    h.write_usize(counts.len());
    for c in counts {
        h.write_u64(*c);
    }
    h.finish()
}

/// Scenario plus per-experiment shared state (the SI graph is built once).
pub struct ScenarioInstance {
    scenario: Scenario,
    storage: EventStorage,
    graph: Option<Graph>,
}

impl ScenarioInstance {
    pub fn new(scenario: &Scenario, storage: EventStorage) -> Result<Self> {
        let graph = match scenario {
            Scenario::SiTree {
                height, hub_degree, ..
            } => Some(build_tree_with_hub(*height, *hub_degree)?),
            _ => None,
        };
        Ok(Self {
            scenario: scenario.clone(),
            storage,
            graph,
        })
    }

    pub fn graph(&self) -> Option<&Graph> {
        self.graph.as_ref()
    }

    /// Draws trial `trial`'s process and truth from `SimSeed(seed, trial)`.
    pub fn realize(&self, seed: u64, trial: u64) -> Result<Realization> {
        let sim_seed = SimSeed::new(seed, trial);
        let mut aux = sim_seed.derive(ONSET_SALT).rng();
        let mut draw_onset = |(lo, hi): (f64, f64)| {
            if hi > lo {
                aux.random_range(lo..=hi)
            } else {
                lo
            }
        };
        let store = |spec: &RateSpec, horizon: f64| -> Result<(RealizedProcess, u64)> {
            Ok(match self.storage {
                EventStorage::Full => {
                    let e = simulate(spec, horizon, sim_seed)?;
                    let c = checksum_events(e.times());
                    (RealizedProcess::Events(e), c)
                }
                EventStorage::Binned { resolution } => {
                    let b = simulate_binned(spec, horizon, sim_seed, resolution)?;
                    let c = checksum_counts(b.counts());
                    (RealizedProcess::Binned(b.to_counting()), c)
                }
            })
        };
        match &self.scenario {
            Scenario::SmoothJump {
                base,
                jump,
                onset,
                horizon,
                background,
            } => {
                let t0 = draw_onset(*onset);
                let spec = match background {
                    Background::Sinusoid => RateSpec::sin_plus_exp(*base, *jump, t0)?,
                    Background::Constant => RateSpec::const_plus_exp(*base, *jump, t0)?,
                };
                let (process, checksum) = store(&spec, *horizon)?;
                Ok(Realization {
                    process,
                    truth: t0,
                    scan: (0.0, *horizon),
                    checksum,
                })
            }
            Scenario::ConstNull {
                base,
                onset,
                horizon,
            } => {
                let t0 = draw_onset(*onset);
                let (process, checksum) = store(&RateSpec::constant(*base)?, *horizon)?;
                Ok(Realization {
                    process,
                    truth: t0,
                    scan: *onset,
                    checksum,
                })
            }
            Scenario::Ramp {
                slope,
                onset,
                horizon,
            } => {
                let t0 = draw_onset(*onset);
                let times: Vec<f64> = (0..)
                    .map(|i| t0 + (i as f64 + 0.5) / slope)
                    .take_while(|&t| t <= *horizon)
                    .collect();
                let checksum = checksum_events(&times);
                Ok(Realization {
                    process: RealizedProcess::Events(EventTimes::new(times, *horizon)?),
                    truth: t0,
                    scan: (0.0, *horizon),
                    checksum,
                })
            }
            Scenario::SiTree { source, .. } => {
                let g = self.graph.as_ref().expect("graph built for SI scenarios");
                let src = match source {
                    SourceChoice::Root => 0,
                    SourceChoice::Vertex(v) => *v,
                    SourceChoice::Random => sim_seed
                        .derive(SOURCE_SALT)
                        .rng()
                        .random_range(0..g.vertex_count()),
                };
                let trace = simulate_si(g, src, sim_seed)?;
                let hub = g.hub().expect("tree has a hub");
                let truth = trace.infection_time[hub];
                let process = infection_count_process(&trace);
                let checksum = checksum_events(process.times());
                Ok(Realization {
                    scan: (0.0, process.horizon()),
                    process: RealizedProcess::Events(process),
                    truth,
                    checksum,
                })
            }
        }
    }
}

/// `|t̂ - truth|` for argmax detection of order `k` and step `δ` over the
/// realization's scan window.
pub fn evaluate_cell(
    realization: &Realization,
    order: usize,
    delta: f64,
    grid_fraction: f64,
) -> Result<f64> {
    let p = &realization.process;
    let t_hat = argmax_single(p, order, delta, delta * grid_fraction, realization.scan)?;
    Ok((t_hat - realization.truth).abs())
}

/// One simulated trial analyzed with a single `(k, δ)`.
pub fn run_trial(
    scenario: &ScenarioInstance,
    order: usize,
    delta: f64,
    seed: u64,
    trial: u64,
) -> Result<f64> {
    let r = scenario.realize(seed, trial)?;
    evaluate_cell(&r, order, delta, DEFAULT_GRID_FRACTION)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub order: usize,
    pub delta: f64,
    pub trial: usize,
    pub error: f64,
}

/// Mean errors over a `(k, δ)` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapResult {
    pub spec: ExperimentSpec,
    pub orders: Vec<usize>,
    pub deltas: Vec<f64>,
    /// `errors[i][j]` is the mean error for `orders[i]`, `deltas[j]`;
    /// NaN when any trial of the cell failed.
    pub errors: Vec<Vec<f64>>,
    /// Number of trials averaged in each cell.
    pub counts: Vec<Vec<usize>>,
    pub records: Vec<TrialRecord>,
    /// Realization checksum per trial; every cell in a trial saw this realization.
    pub checksums: Vec<u64>,
    pub diagnostics: Vec<String>,
    pub wall_time_secs: f64,
}

/// A `(k, δ)` cell with its mean error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub order: usize,
    pub delta: f64,
    pub error: f64,
}

impl HeatmapResult {
    /// Smallest finite mean error; first in `(k, δ)` order on ties.
    pub fn argmin(&self) -> Option<Cell> {
        self.argmin_where(|_| true)
    }

    /// Smallest finite mean error among rows whose order satisfies `keep`.
    pub fn argmin_where(&self, keep: impl Fn(usize) -> bool) -> Option<Cell> {
        let mut best: Option<Cell> = None;
        for (i, &k) in self.orders.iter().enumerate() {
            if !keep(k) {
                continue;
            }
            for (j, &d) in self.deltas.iter().enumerate() {
                let e = self.errors[i][j];
                if e.is_finite() && best.is_none_or(|b| e < b.error) {
                    best = Some(Cell {
                        order: k,
                        delta: d,
                        error: e,
                    });
                }
            }
        }
        best
    }

    pub fn cell(&self, order: usize, delta: f64) -> Option<f64> {
        let i = self.orders.iter().position(|&k| k == order)?;
        let j = self
            .deltas
            .iter()
            .position(|&d| (d - delta).abs() <= 1e-9 * delta.max(1.0))?;
        Some(self.errors[i][j])
    }

    /// Matrix CSV: header `k,<δ...>`, one row per order.
    pub fn matrix_csv(&self) -> String {
        let mut out = String::from("k");
        for d in &self.deltas {
            let _ = write!(out, ",{d}");
        }
        out.push('\n');
        for (i, k) in self.orders.iter().enumerate() {
            let _ = write!(out, "{k}");
            for e in &self.errors[i] {
                let _ = write!(out, ",{e}");
            }
            out.push('\n');
        }
        out
    }

    /// Long-format CSV `k,delta,trial,error`.
    pub fn long_csv(&self) -> String {
        let mut out = String::from("k,delta,trial,error\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{},{},{}", r.order, r.delta, r.trial, r.error);
        }
        out
    }

    /// `key=value` metadata. Wall time is only included when asked for, so
    /// reproducibility checks can compare the rest byte for byte.
    pub fn metadata(&self, include_wall_time: bool) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "name={}", self.spec.name);
        let _ = writeln!(out, "seed={}", self.spec.seed);
        let _ = writeln!(out, "trials={}", self.spec.trials);
        let _ = writeln!(out, "grid_fraction={}", self.spec.grid_fraction);
        let _ = writeln!(out, "orders={}", join(&self.orders));
        let _ = writeln!(out, "deltas={}", join(&self.deltas));
        if let Some(c) = self.argmin() {
            let _ = writeln!(out, "k_min={}", c.order);
            let _ = writeln!(out, "delta_min={}", c.delta);
            let _ = writeln!(out, "error_min={}", c.error);
        }
        let _ = writeln!(out, "trial_checksums={}", join(&self.checksums));
        for d in &self.diagnostics {
            let _ = writeln!(out, "diagnostic={d}");
        }
        if include_wall_time {
            let _ = writeln!(out, "wall_time_secs={:.3}", self.wall_time_secs);
        }
        out
    }

    /// Writes `heatmap.csv`, `heatmap.meta.txt`, `experiment.toml` and
    /// optionally `heatmap_long.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path, long_format: bool) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let put = |name: &str, body: String| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| Error::io(p, e))
        };
        put("heatmap.csv", self.matrix_csv())?;
        put("heatmap.meta.txt", self.metadata(true))?;
        put("experiment.toml", self.spec.to_toml())?;
        if long_format {
            put("heatmap_long.csv", self.long_csv())?;
        }
        Ok(())
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// Runs `f` on a pool of `workers` threads, or on the global pool for `None`.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::param(format!("cannot build worker pool: {e}")))?
            .install(f)),
        None => Ok(f()),
    }
}

/// Runs every trial and fills the heatmap. `workers = None` uses the global pool.
pub fn run_heatmap(spec: &ExperimentSpec, workers: Option<usize>) -> Result<HeatmapResult> {
    spec.validate()?;
    let started = Instant::now();
    let instance = ScenarioInstance::new(&spec.scenario, spec.storage)?;
    let cells: Vec<(usize, f64)> = spec
        .orders
        .iter()
        .flat_map(|&k| spec.deltas.iter().map(move |&d| (k, d)))
        .collect();

    let run_trial = |trial: usize| -> (u64, std::result::Result<Vec<Result<f64>>, String>) {
        match instance.realize(spec.seed, trial as u64) {
            Ok(r) => (
                r.checksum,
                Ok(cells
                    .iter()
                    .map(|&(k, d)| evaluate_cell(&r, k, d, spec.grid_fraction))
                    .collect()),
            ),
            Err(e) => (0, Err(e.to_string())),
        }
    };
    let outcomes: Vec<_> = with_workers(workers, || {
        (0..spec.trials).into_par_iter().map(run_trial).collect()
    })?;

    let (nk, nd) = (spec.orders.len(), spec.deltas.len());
    let mut sums = vec![vec![0.0; nd]; nk];
    let mut counts = vec![vec![0usize; nd]; nk];
    let mut failed = vec![vec![false; nd]; nk];
    let mut records = Vec::with_capacity(spec.trials * cells.len());
    let mut checksums = Vec::with_capacity(spec.trials);
    let mut diagnostics = Vec::new();
    for (trial, (checksum, outcome)) in outcomes.into_iter().enumerate() {
        checksums.push(checksum);
        match outcome {
            Err(msg) => {
                diagnostics.push(format!("trial {trial}: simulation failed: {msg}"));
                failed.iter_mut().flatten().for_each(|f| *f = true);
            }
            Ok(errs) => {
                for (c, res) in errs.into_iter().enumerate() {
                    let (i, j) = (c / nd, c % nd);
                    let (order, delta) = cells[c];
                    match res {
                        Ok(error) => {
                            sums[i][j] += error;
                            counts[i][j] += 1;
                            records.push(TrialRecord {
                                order,
                                delta,
                                trial,
                                error,
                            });
                        }
                        Err(e) => {
                            if !failed[i][j] {
                                diagnostics.push(format!(
                                    "cell k={order} delta={delta} trial {trial}: {e}"
                                ));
                            }
                            failed[i][j] = true;
                        }
                    }
                }
            }
        }
    }
    let errors = (0..nk)
        .map(|i| {
            (0..nd)
                .map(|j| {
                    if failed[i][j] || counts[i][j] == 0 {
                        f64::NAN
                    } else {
                        sums[i][j] / counts[i][j] as f64
                    }
                })
                .collect()
        })
        .collect();
    Ok(HeatmapResult {
        spec: spec.clone(),
        orders: spec.orders.clone(),
        deltas: spec.deltas.clone(),
        errors,
        counts,
        records,
        checksums,
        diagnostics,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

/// Best first-derivative, second-derivative and higher-order cells.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSummary {
    pub first: Option<Cell>,
    pub second: Option<Cell>,
    pub higher: Option<Cell>,
}

impl BaselineSummary {
    pub fn from_heatmap(h: &HeatmapResult) -> Self {
        Self {
            first: h.argmin_where(|k| k == 1),
            second: h.argmin_where(|k| k == 2),
            higher: h.argmin_where(|k| k >= 3),
        }
    }

    pub fn table(&self) -> String {
        let mut out = String::from("estimator,k,delta,error\n");
        for (name, c) in [
            ("first-derivative", self.first),
            ("second-derivative", self.second),
            ("best-higher-order", self.higher),
        ] {
            match c {
                Some(c) => {
                    let _ = writeln!(out, "{name},{},{},{}", c.order, c.delta, c.error);
                }
                None => {
                    let _ = writeln!(out, "{name},,,");
                }
            }
        }
        out
    }
}

/// Heatmap over orders `1..=max_order` and `deltas`, summarized per estimator family.
pub fn run_baselines(
    scenario: &Scenario,
    deltas: &[f64],
    max_order: usize,
    trials: usize,
    seed: u64,
    workers: Option<usize>,
) -> Result<(BaselineSummary, HeatmapResult)> {
    if max_order < 3 {
        return Err(Error::param("baselines need orders up to at least 3"));
    }
    let spec = ExperimentSpec {
        name: "baselines".into(),
        scenario: scenario.clone(),
        orders: (1..=max_order).collect(),
        deltas: deltas.to_vec(),
        trials,
        seed,
        grid_fraction: DEFAULT_GRID_FRACTION,
        storage: EventStorage::Full,
    };
    let h = run_heatmap(&spec, workers)?;
    Ok((BaselineSummary::from_heatmap(&h), h))
}

/// Mean `|U - t0|` for a guess `U ~ U[lo, hi]` with `t0 ~ U[lo, hi]`, by simulation.
pub fn naive_uniform_error(lo: f64, hi: f64, trials: usize, seed: u64) -> f64 {
    let mut rng = SimSeed::new(seed, 0).rng();
    let total: f64 = (0..trials)
        .map(|_| {
            let guess: f64 = rng.random_range(lo..=hi);
            let truth: f64 = rng.random_range(lo..=hi);
            (guess - truth).abs()
        })
        .sum();
    total / trials.max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_spec(orders: Vec<usize>, deltas: Vec<f64>, onset: (f64, f64)) -> ExperimentSpec {
        ExperimentSpec {
            name: "ramp".into(),
            scenario: Scenario::Ramp {
                slope: 100.0,
                onset,
                horizon: 20.0,
            },
            orders,
            deltas,
            trials: 3,
            seed: 11,
            grid_fraction: 0.1,
            storage: EventStorage::Full,
        }
    }

    #[test]
    fn linspace_endpoints() {
        let v = linspace(0.05, 0.5, 24);
        assert_eq!(v.len(), 24);
        assert_eq!(v[0], 0.05);
        assert!((v[23] - 0.5).abs() < 1e-15);
        assert_eq!(linspace(1.0, 2.0, 1), vec![1.0]);
    }

    #[test]
    fn spec_validation() {
        let mut s = ramp_spec(vec![2], vec![0.5], (5.0, 15.0));
        assert!(s.validate().is_ok());
        s.trials = 0;
        assert!(s.validate().is_err());
        let s = ramp_spec(vec![], vec![0.5], (5.0, 15.0));
        assert!(s.validate().is_err());
        // onset too close to the start for k=10, δ=0.6
        let s = ramp_spec(vec![10], vec![0.6], (5.0, 15.0));
        assert!(s.validate().is_err());
        let s = ramp_spec(vec![2], vec![0.5], (5.0, 19.8));
        assert!(s.validate().is_err());
    }

    #[test]
    fn presets_roundtrip_through_toml() {
        for name in PRESET_NAMES {
            let s = ExperimentSpec::preset(name).unwrap();
            let back = ExperimentSpec::from_toml(&s.to_toml()).unwrap();
            assert_eq!(back, s, "{name}");
        }
        assert!(ExperimentSpec::preset("no-such-preset").is_err());
    }

    #[test]
    fn one_by_one_grid_equals_run_trial() {
        let spec = ExperimentSpec {
            trials: 1,
            ..ramp_spec(vec![2], vec![0.5], (5.0, 15.0))
        };
        let h = run_heatmap(&spec, Some(1)).unwrap();
        let inst = ScenarioInstance::new(&spec.scenario, spec.storage).unwrap();
        let e = run_trial(&inst, 2, 0.5, spec.seed, 0).unwrap();
        assert_eq!(h.errors, vec![vec![e]]);
        assert_eq!(h.counts, vec![vec![1]]);
    }

    #[test]
    fn ramp_second_order_error_below_grid_step() {
        let spec = ramp_spec(vec![2], vec![0.3, 0.5], (5.0, 15.0));
        let h = run_heatmap(&spec, None).unwrap();
        for r in &h.records {
            assert!(r.error <= 0.5 * r.delta * 0.1 + 1e-9, "{r:?}");
        }
    }

    #[test]
    fn ramp_argmax_bias_is_binomial_midpoint() {
        // onset on the grid; the ramp's order-k response at t0 + mδ is the
        // (k-2)-th row of alternating binomials, peaking at m = floor((k-2)/2)
        let spec = ramp_spec((2..=6).collect(), vec![0.5], (10.0, 10.0));
        let h = run_heatmap(&spec, Some(2)).unwrap();
        for (i, &k) in h.orders.iter().enumerate() {
            let expected = ((k - 2) / 2) as f64 * 0.5;
            assert!(
                (h.errors[i][0] - expected).abs() < 1e-9,
                "k={k}: {}",
                h.errors[i][0]
            );
        }
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let spec = ExperimentSpec {
            name: "small".into(),
            scenario: Scenario::SmoothJump {
                base: 500.0,
                jump: 400.0,
                onset: (3.0, 5.0),
                horizon: 8.0,
                background: Background::Sinusoid,
            },
            orders: vec![1, 2, 3],
            deltas: vec![0.2, 0.4],
            trials: 6,
            seed: 3,
            grid_fraction: 0.1,
            storage: EventStorage::Full,
        };
        let a = run_heatmap(&spec, Some(1)).unwrap();
        let b = run_heatmap(&spec, Some(4)).unwrap();
        assert_eq!(a.matrix_csv(), b.matrix_csv());
        assert_eq!(a.long_csv(), b.long_csv());
        assert_eq!(a.metadata(false), b.metadata(false));
        assert_eq!(a.records.len(), 6 * 6);
        // re-realizing a trial reproduces its checksum
        let inst = ScenarioInstance::new(&spec.scenario, spec.storage).unwrap();
        assert_eq!(inst.realize(spec.seed, 4).unwrap().checksum, a.checksums[4]);
        assert!(a.records.iter().all(|r| r.error >= 0.0 && r.error <= 8.0));
    }

    #[test]
    fn failing_cells_are_recorded_not_fatal() {
        // SI horizons vary per run; k=5 with δ=3 on a tiny tree may leave no valid grid
        let spec = ExperimentSpec {
            name: "tiny-si".into(),
            scenario: Scenario::SiTree {
                height: 2,
                hub_degree: 1,
                source: SourceChoice::Root,
            },
            orders: vec![1, 5],
            deltas: vec![0.05, 3.0],
            trials: 4,
            seed: 1,
            grid_fraction: 0.1,
            storage: EventStorage::Full,
        };
        let h = run_heatmap(&spec, None).unwrap();
        assert!(h.cell(1, 0.05).unwrap().is_finite());
        assert!(h.cell(5, 3.0).unwrap().is_nan());
        assert!(!h.diagnostics.is_empty());
    }

    #[test]
    fn baseline_summary_picks_row_minima() {
        let spec = ramp_spec(vec![1, 2, 3], vec![0.3, 0.5], (5.0, 15.0));
        let mut h = run_heatmap(&spec, None).unwrap();
        h.errors = vec![vec![3.0, 2.0], vec![1.0, 4.0], vec![0.5, 0.7]];
        let s = BaselineSummary::from_heatmap(&h);
        assert_eq!(s.first.unwrap().delta, 0.5);
        assert_eq!(s.second.unwrap().error, 1.0);
        assert_eq!((s.higher.unwrap().order, s.higher.unwrap().error), (3, 0.5));
        assert_eq!(h.argmin().unwrap().error, 0.5);
        assert!(s.table().starts_with("estimator,k,delta,error\n"));
    }

    #[test]
    fn naive_guess_error_is_a_third_of_the_span() {
        let e = naive_uniform_error(5.0, 15.0, 20_000, 9);
        assert!((e - 10.0 / 3.0).abs() < 0.1, "{e}");
    }

    #[test]
    fn null_scenario_error_matches_uniform_guess() {
        let spec = ExperimentSpec {
            name: "null".into(),
            scenario: Scenario::ConstNull {
                base: 1e4,
                onset: (5.0, 15.0),
                horizon: 20.0,
            },
            orders: vec![2],
            deltas: vec![0.2],
            trials: 300,
            seed: 21,
            grid_fraction: 0.1,
            storage: EventStorage::Full,
        };
        let h = run_heatmap(&spec, None).unwrap();
        // |U - V| for independent U, V ~ U[5, 15]: mean 10/3, sd ≈ 2.36
        let e = h.errors[0][0];
        assert!((e - 10.0 / 3.0).abs() < 3.5 * 2.36 / (300f64).sqrt(), "{e}");
    }

    #[test]
    fn binned_storage_tracks_full_storage() {
        let base = ExperimentSpec {
            name: "b".into(),
            scenario: Scenario::SmoothJump {
                base: 2000.0,
                jump: 3000.0,
                onset: (4.0, 6.0),
                horizon: 10.0,
                background: Background::Sinusoid,
            },
            orders: vec![2, 3],
            deltas: vec![0.2],
            trials: 4,
            seed: 5,
            grid_fraction: 0.1,
            storage: EventStorage::Full,
        };
        let full = run_heatmap(&base, None).unwrap();
        let binned = run_heatmap(
            &ExperimentSpec {
                storage: EventStorage::Binned { resolution: 1e-5 },
                ..base
            },
            None,
        )
        .unwrap();
        for i in 0..2 {
            assert!((full.errors[i][0] - binned.errors[i][0]).abs() < 0.05);
        }
    }
}
