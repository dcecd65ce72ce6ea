//! Abrupt-change detection in point-process rates using higher-order
//! discrete derivatives of the counting function.
//!
//! The detector ([`detect`], [`argmax_single`]) works on anything that
//! implements [`CountingFunction`]: raw event times, binned counts, or an
//! SI cascade's infection-count process. Simulators for inhomogeneous
//! Poisson processes and SI epidemics, a multi-cascade high-degree vertex
//! estimator and a Monte Carlo harness are built on top.

pub mod derivative;
pub mod detector;
pub mod error;
pub mod harness;
pub mod ingest;
pub mod multicascade;
pub mod poisson;
pub mod process;
pub mod rate;
pub mod seed;
pub mod si;

pub use derivative::{
    derivative_profile, discrete_derivative, DerivativeProfile, DerivativeStencil, MAX_ORDER,
};
pub use detector::{
    argmax_single, d_max, detect, maximum_packing, min_order_for, sep, suggest_delta,
    ChangePointReport, DetectionMode, DetectorConfig, ScoredTime, DEFAULT_GRID_FRACTION,
};
pub use error::{Error, Result};
pub use harness::{
    run_baselines, run_heatmap, BaselineSummary, ExperimentSpec, HeatmapResult, Scenario,
};
pub use ingest::{
    analyze_binned, load_daily_csv, BinnedAnalysis, BinnedAnalysisSpec, CountMode, LoadOptions,
    RegionSeries,
};
pub use multicascade::{estimate_high_degree, CascadeBundle, HighDegreeEstimate};
pub use poisson::{simulate, simulate_binned};
pub use process::{BinnedCounting, BinnedSeries, CountingFunction, EventTimes};
pub use rate::{JumpComponent, RateSpec, SmoothShape};
pub use seed::SimSeed;
pub use si::{build_tree_with_hub, infection_count_process, simulate_si, CascadeTrace, Graph};
