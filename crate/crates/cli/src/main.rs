//! `ratejump`: simulate point processes and SI cascades, detect abrupt rate
//! changes, and run the Monte Carlo experiments.
//!
//! Exit status: 0 on success, 2 on usage errors, 1 on runtime errors.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "ratejump",
    version,
    about = "Abrupt-change detection in point-process rates"
)]
struct Cli {
    /// Log verbosity (-v info, -vv debug); RUST_LOG overrides
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate an inhomogeneous Poisson process by thinning
    SimulatePoisson(SimulatePoissonArgs),
    /// Simulate one SI cascade on the tree-with-hub or an edge-list graph
    SimulateSi(SimulateSiArgs),
    /// Run the change-point detector on events or binned counts
    Detect(DetectArgs),
    /// Report the single largest-magnitude derivative time
    Argmax(ArgmaxArgs),
    /// Mean estimation error over a (k, δ) grid
    Heatmap(HeatmapArgs),
    /// Best first-order, second-order and higher-order estimators
    Baselines(BaselinesArgs),
    /// Identify high-degree vertices from several cascade traces
    Multicascade(MulticascadeArgs),
    /// Day-resolution derivative analysis of daily counts
    AnalyzeBinned(AnalyzeBinnedArgs),
    /// Print or write the preset parameter files
    Presets(PresetsArgs),
}

#[derive(Args, Debug, Clone)]
pub struct OutputArgs {
    /// Output directory (created if missing)
    #[arg(long, env = "RATEJUMP_OUT_DIR", default_value = ".")]
    pub out: PathBuf,
}

fn positive(name: &'static str) -> impl Fn(&str) -> Result<f64, String> + Clone {
    move |s: &str| {
        let v: f64 = s.parse().map_err(|_| format!("{name} must be a number"))?;
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(format!("{name} must be positive"))
        }
    }
}

fn order(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(k) if (1..=ratejump::MAX_ORDER).contains(&k) => Ok(k),
        _ => Err(format!(
            "k must be an integer in 1..={}",
            ratejump::MAX_ORDER
        )),
    }
}

#[derive(Args, Debug, Clone)]
pub struct SimulatePoissonArgs {
    /// Rate specification file, one component per line
    #[arg(long, conflicts_with = "preset")]
    pub rate_spec: Option<PathBuf>,
    /// Named rate: sin-plus-exp or const-plus-exp
    #[arg(long, default_value = "const-plus-exp")]
    pub preset: String,
    /// Observation horizon T (time units)
    #[arg(long, default_value_t = 20.0, value_parser = positive("horizon"), allow_negative_numbers = true)]
    pub horizon: f64,
    /// Store counts in bins of this width (time units) instead of event times
    #[arg(long, value_parser = positive("bin width"), allow_negative_numbers = true)]
    pub bin_width: Option<f64>,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random stream within the seed
    #[arg(long, default_value_t = 0)]
    pub stream: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateSiArgs {
    /// Binary tree height (root at depth 0)
    #[arg(long, default_value_t = 18, conflicts_with = "graph")]
    pub height: u32,
    /// Extra leaves attached to the hub
    #[arg(long, default_value_t = 3000, conflicts_with = "graph")]
    pub hub_degree: usize,
    /// Edge-list file (`u v` per line, 0-indexed) instead of the tree
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Source vertex id
    #[arg(long, default_value_t = 0)]
    pub source: usize,
    /// Per-edge infection rate (1/time unit)
    #[arg(long, default_value_t = 1.0, value_parser = positive("rate"), allow_negative_numbers = true)]
    pub rate: f64,
    /// Random seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
#[group(id = "input", required = true, multiple = false)]
pub struct InputFile {
    /// Event-time file: one time per line, optional `# horizon=T`
    #[arg(long)]
    pub events: Option<PathBuf>,
    /// Binned-count CSV with header `bin_start,count`
    #[arg(long)]
    pub binned: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ProcessInput {
    #[command(flatten)]
    pub file: InputFile,
    /// Observation horizon T (time units); defaults to the input's horizon
    #[arg(long, value_parser = positive("horizon"), allow_negative_numbers = true)]
    pub horizon: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct StencilArgs {
    /// Derivative order k
    #[arg(long, value_parser = order)]
    pub k: usize,
    /// Stencil step δ (time units)
    #[arg(long, value_parser = positive("delta"), allow_negative_numbers = true)]
    pub delta: f64,
    /// Grid spacing (time units); default δ/10
    #[arg(long, value_parser = positive("grid step"), allow_negative_numbers = true)]
    pub grid_step: Option<f64>,
    /// Scan only t >= this time (time units)
    #[arg(long, allow_negative_numbers = true)]
    pub window_lo: Option<f64>,
    /// Scan only t <= this time (time units)
    #[arg(long, allow_negative_numbers = true)]
    pub window_hi: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: ProcessInput,
    #[command(flatten)]
    pub stencil: StencilArgs,
    /// Jump size A (events per time unit); grid times with |Δ|/δ >= A/2 are candidates
    #[arg(long, value_parser = positive("threshold"), allow_negative_numbers = true,
          conflicts_with = "argmax_single", required_unless_present = "argmax_single")]
    pub threshold: Option<f64>,
    /// Report only the single largest-magnitude time
    #[arg(long)]
    pub argmax_single: bool,
    /// Also write the derivative profile as `profile.csv`
    #[arg(long)]
    pub dump_profile: bool,
    /// Accepted for uniformity; detection is deterministic
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct ArgmaxArgs {
    #[command(flatten)]
    pub input: ProcessInput,
    #[command(flatten)]
    pub stencil: StencilArgs,
    /// Accepted for uniformity; the argmax is deterministic
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
#[group(id = "experiment", required = true, multiple = false)]
pub struct ExperimentSource {
    /// Built-in experiment: single-jump, smooth-jump-scaled, smooth-jump-full, hub-tree-trace, hub-tree
    #[arg(long, group = "experiment")]
    pub preset: Option<String>,
    /// Experiment TOML file (see `ratejump presets`)
    #[arg(long, group = "experiment")]
    pub spec: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub source: ExperimentSource,
    /// Override the number of trials per cell
    #[arg(long)]
    pub trials: Option<usize>,
    /// Override the experiment's base seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; default is the available parallelism
    #[arg(long)]
    pub workers: Option<usize>,
    /// Also write per-trial errors as `heatmap_long.csv`
    #[arg(long)]
    pub long: bool,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct BaselinesArgs {
    #[command(flatten)]
    pub source: ExperimentSource,
    /// Largest order evaluated (at least 3)
    #[arg(long, default_value_t = 5, value_parser = order)]
    pub max_order: usize,
    /// Override the number of trials per cell
    #[arg(long)]
    pub trials: Option<usize>,
    /// Override the experiment's base seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; default is the available parallelism
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct MulticascadeArgs {
    /// Directory of trace CSVs (`vertex,time`); without it, cascades are simulated
    #[arg(long, conflicts_with_all = ["height", "hub_degree", "cascades"])]
    pub traces: Option<PathBuf>,
    /// Tree height for simulated cascades
    #[arg(long, default_value_t = 18)]
    pub height: u32,
    /// Extra hub leaves for simulated cascades
    #[arg(long, default_value_t = 8000)]
    pub hub_degree: usize,
    /// Number of simulated cascades K (uniformly random sources)
    #[arg(long, default_value_t = 3)]
    pub cascades: usize,
    /// Derivative order k
    #[arg(long, default_value_t = 2, value_parser = order)]
    pub k: usize,
    /// Stencil step δ (time units)
    #[arg(long, default_value_t = 0.1, value_parser = positive("delta"), allow_negative_numbers = true)]
    pub delta: f64,
    /// Jump size A (infections per time unit), e.g. the hub degree
    #[arg(long, value_parser = positive("threshold"), allow_negative_numbers = true)]
    pub threshold: f64,
    /// Candidate window w (time units); default kδ
    #[arg(long, value_parser = positive("window"), allow_negative_numbers = true)]
    pub window: Option<f64>,
    /// Random seed for simulated cascades
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; default is the available parallelism
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct AnalyzeBinnedArgs {
    /// CSV with `date` and `cases` columns, optional `region`
    #[arg(long)]
    pub input: PathBuf,
    /// Analysis TOML (see `ratejump presets sd-covid-style`); flags override it
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Derivative order k (default 2)
    #[arg(long, value_parser = order)]
    pub k: Option<usize>,
    /// Stencil step in whole days (default 1)
    #[arg(long)]
    pub delta_days: Option<usize>,
    /// Whether `cases` holds daily or cumulative counts (default daily)
    #[arg(long, value_parser = ["daily", "cumulative"])]
    pub mode: Option<String>,
    /// Keep only rows with this region value
    #[arg(long)]
    pub region: Option<String>,
    /// Accepted for uniformity; the analysis is deterministic
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Args, Debug, Clone)]
pub struct PresetsArgs {
    /// Preset to print; lists all presets when omitted
    pub name: Option<String>,
    /// Write every preset file into the output directory
    #[arg(long)]
    pub write: bool,
    /// Accepted for uniformity; presets are fixed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    log::debug!("{:?}", cli.command);

    let result = match cli.command {
        Command::SimulatePoisson(a) => commands::simulate_poisson(&a),
        Command::SimulateSi(a) => commands::simulate_si(&a),
        Command::Detect(a) => commands::detect(&a),
        Command::Argmax(a) => commands::argmax(&a),
        Command::Heatmap(a) => commands::heatmap(&a),
        Command::Baselines(a) => commands::baselines(&a),
        Command::Multicascade(a) => commands::multicascade(&a),
        Command::AnalyzeBinned(a) => commands::analyze_binned(&a),
        Command::Presets(a) => commands::presets(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if commands::is_usage_error(&e) {
                eprintln!("\nFor more information, try '--help'.");
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn threshold_and_argmax_conflict() {
        let r = Cli::try_parse_from([
            "ratejump",
            "detect",
            "--events",
            "e.txt",
            "--k",
            "2",
            "--delta",
            "0.1",
            "--threshold",
            "5",
            "--argmax-single",
        ]);
        assert!(r.is_err());
        let ok = Cli::try_parse_from([
            "ratejump",
            "detect",
            "--events",
            "e.txt",
            "--k",
            "2",
            "--delta",
            "0.1",
            "--argmax-single",
        ]);
        assert!(ok.is_ok());
    }

    #[test]
    fn negative_delta_is_rejected_with_message() {
        let e = Cli::try_parse_from([
            "ratejump",
            "detect",
            "--events",
            "e",
            "--k",
            "2",
            "--delta",
            "-1",
            "--threshold",
            "3",
        ])
        .unwrap_err();
        assert!(e.to_string().contains("delta must be positive"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }
}
