use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ratejump::detector::detection_profile;
use ratejump::harness::{with_workers, PRESET_NAMES};
use ratejump::multicascade::simulate_bundle;
use ratejump::si::simulate_si_with_rate;
use ratejump::{
    analyze_binned as analyze_series, argmax_single, build_tree_with_hub, detect as run_detector,
    discrete_derivative, estimate_high_degree, infection_count_process, load_daily_csv,
    run_baselines, run_heatmap, simulate, simulate_binned, BaselineSummary, BinnedAnalysisSpec,
    BinnedSeries, CascadeBundle, CountMode, CountingFunction, DetectorConfig, EventTimes,
    ExperimentSpec, Graph, LoadOptions, RateSpec, SimSeed, DEFAULT_GRID_FRACTION,
};

use crate::manifest::Manifest;
use crate::{
    AnalyzeBinnedArgs, ArgmaxArgs, BaselinesArgs, DetectArgs, ExperimentSource, HeatmapArgs,
    MulticascadeArgs, OutputArgs, PresetsArgs, ProcessInput, SimulatePoissonArgs, SimulateSiArgs,
    StencilArgs,
};

/// Bad invocation detected after parsing; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn is_usage_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<UsageError>()
            || matches!(
                c.downcast_ref::<ratejump::Error>(),
                Some(ratejump::Error::InvalidParameter(_))
            )
    })
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn require_file(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(usage(format!("input not found: {}", path.display())))
    }
}

fn prepare(out: &OutputArgs) -> Result<PathBuf> {
    fs::create_dir_all(&out.out)
        .with_context(|| format!("cannot create output directory {}", out.out.display()))?;
    Ok(out.out.clone())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn simulate_poisson(a: &SimulatePoissonArgs) -> Result<()> {
    let mut m = Manifest::new("simulate-poisson");
    let spec = match &a.rate_spec {
        Some(p) => {
            require_file(p)?;
            m.param("rate-spec", p.display());
            RateSpec::read(p).context("rate")?
        }
        None => {
            m.param("preset", &a.preset);
            RateSpec::preset(&a.preset).context("rate")?
        }
    };
    m.param("horizon", a.horizon)
        .opt_param("bin-width", a.bin_width)
        .param("seed", a.seed)
        .param("stream", a.stream);
    let dir = prepare(&a.output)?;
    let seed = SimSeed::new(a.seed, a.stream);
    let count = match a.bin_width {
        Some(w) => {
            let b = simulate_binned(&spec, a.horizon, seed, w).context("poisson")?;
            let p = dir.join("binned.csv");
            b.write_csv(&p).context("process")?;
            m.output(&p);
            b.counts().iter().sum::<u64>() as usize
        }
        None => {
            let e = simulate(&spec, a.horizon, seed).context("poisson")?;
            let p = dir.join("events.txt");
            e.write(&p).context("process")?;
            m.output(&p);
            e.len()
        }
    };
    let rp = dir.join("rate.txt");
    write_text(&rp, &spec.to_string())?;
    m.output(&rp).note("event_count", count);
    m.write(&dir)?;
    println!("simulated {count} events on [0, {}]", a.horizon);
    Ok(())
}

pub fn simulate_si(a: &SimulateSiArgs) -> Result<()> {
    let mut m = Manifest::new("simulate-si");
    let g = match &a.graph {
        Some(p) => {
            require_file(p)?;
            m.param("graph", p.display());
            Graph::read_edge_list(p).context("si")?
        }
        None => {
            m.param("height", a.height)
                .param("hub-degree", a.hub_degree);
            build_tree_with_hub(a.height, a.hub_degree).context("si")?
        }
    };
    m.param("source", a.source)
        .param("rate", a.rate)
        .param("seed", a.seed);
    let dir = prepare(&a.output)?;
    let trace =
        simulate_si_with_rate(&g, a.source, SimSeed::new(a.seed, 0), a.rate).context("si")?;
    let tp = dir.join("trace.csv");
    trace.write_csv(&tp).context("si")?;
    let counts = infection_count_process(&trace);
    let cp = dir.join("infections.txt");
    counts.write(&cp).context("process")?;
    m.output(&tp).output(&cp);
    m.note("vertex_count", g.vertex_count())
        .note("last_infection", counts.horizon());
    if let Some(hub) = g.hub() {
        m.note("hub", hub)
            .note("hub_degree_total", g.degree(hub))
            .note("hub_infection_time", trace.infection_time[hub]);
        println!(
            "{} vertices infected by t={:.4}; hub {hub} (degree {}) infected at t={:.4}",
            g.vertex_count(),
            counts.horizon(),
            g.degree(hub),
            trace.infection_time[hub]
        );
    } else {
        println!(
            "{} vertices infected by t={:.4}",
            g.vertex_count(),
            counts.horizon()
        );
    }
    m.write(&dir)?;
    Ok(())
}

fn load_process(input: &ProcessInput, m: &mut Manifest) -> Result<Box<dyn CountingFunction>> {
    if let Some(p) = &input.file.events {
        require_file(p)?;
        m.param("events", p.display());
        Ok(Box::new(
            EventTimes::read(p, input.horizon).context("process")?,
        ))
    } else if let Some(p) = &input.file.binned {
        require_file(p)?;
        m.param("binned", p.display());
        Ok(Box::new(
            BinnedSeries::read_csv(p).context("process")?.to_counting(),
        ))
    } else {
        Err(usage("one of --events or --binned is required"))
    }
}

fn record_stencil(s: &StencilArgs, m: &mut Manifest) -> (f64, (f64, f64)) {
    let grid_step = s.grid_step.unwrap_or(s.delta * DEFAULT_GRID_FRACTION);
    m.param("k", s.k)
        .param("delta", s.delta)
        .param("grid-step", grid_step);
    m.opt_param("window-lo", s.window_lo)
        .opt_param("window-hi", s.window_hi);
    (
        grid_step,
        (
            s.window_lo.unwrap_or(f64::NEG_INFINITY),
            s.window_hi.unwrap_or(f64::INFINITY),
        ),
    )
}

pub fn detect(a: &DetectArgs) -> Result<()> {
    let mut m = Manifest::new("detect");
    let n = load_process(&a.input, &mut m)?;
    let horizon = a.input.horizon.unwrap_or_else(|| n.horizon());
    m.param("horizon", horizon);
    let (grid_step, (lo, hi)) = record_stencil(&a.stencil, &mut m);
    let base = match a.threshold {
        Some(t) => {
            m.param("threshold", t);
            DetectorConfig::threshold(a.stencil.k, a.stencil.delta, t, horizon)
        }
        None => DetectorConfig::argmax(a.stencil.k, a.stencil.delta, horizon),
    }
    .context("detector")?;
    m.switch("argmax-single", a.argmax_single)
        .switch("dump-profile", a.dump_profile)
        .param("seed", a.seed);
    let mut config = base.with_grid_step(grid_step).context("detector")?;
    if a.stencil.window_lo.is_some() || a.stencil.window_hi.is_some() {
        config = config.with_window(lo, hi).context("detector")?;
    }
    let dir = prepare(&a.output)?;
    let report = run_detector(n.as_ref(), &config).context("detector")?;
    let rp = dir.join("report.csv");
    report.write_csv(&rp).context("detector")?;
    let mp = dir.join("report.meta.txt");
    write_text(&mp, &report.metadata(&[]))?;
    m.output(&rp).output(&mp);
    if a.dump_profile {
        let pp = dir.join("profile.csv");
        detection_profile(n.as_ref(), &config)
            .context("derivative")?
            .write_csv(&pp)
            .context("derivative")?;
        m.output(&pp);
    }
    m.note("estimate_count", report.estimates.len());
    m.write(&dir)?;
    println!("{} change point(s)", report.estimates.len());
    for e in &report.estimates {
        println!("t_hat={} score={}", e.time, e.score);
    }
    Ok(())
}

pub fn argmax(a: &ArgmaxArgs) -> Result<()> {
    let mut m = Manifest::new("argmax");
    let n = load_process(&a.input, &mut m)?;
    let horizon = a.input.horizon.unwrap_or_else(|| n.horizon());
    m.param("horizon", horizon);
    let (grid_step, (lo, hi)) = record_stencil(&a.stencil, &mut m);
    m.param("seed", a.seed);
    let (k, delta) = (a.stencil.k, a.stencil.delta);
    if grid_step > delta {
        return Err(usage("grid step must not exceed delta"));
    }
    let dir = prepare(&a.output)?;
    let t_hat = argmax_single(
        n.as_ref(),
        k,
        delta,
        grid_step,
        (lo, hi.min(horizon - delta)),
    )
    .context("detector")?;
    let value = discrete_derivative(n.as_ref(), k, delta, t_hat).context("derivative")?;
    let p = dir.join("argmax.txt");
    write_text(
        &p,
        &format!(
            "t_hat={t_hat}\nvalue={value}\nscore={}\n",
            value.abs() / delta
        ),
    )?;
    m.output(&p).note("t_hat", t_hat);
    m.write(&dir)?;
    println!("t_hat={t_hat} value={value}");
    Ok(())
}

fn load_experiment(src: &ExperimentSource, m: &mut Manifest) -> Result<ExperimentSpec> {
    if let Some(name) = &src.preset {
        m.param("preset", name);
        ExperimentSpec::preset(name).context("harness")
    } else if let Some(p) = &src.spec {
        require_file(p)?;
        m.param("spec", p.display());
        ExperimentSpec::read(p).context("harness")
    } else {
        Err(usage("one of --preset or --spec is required"))
    }
}

pub fn heatmap(a: &HeatmapArgs) -> Result<()> {
    let mut m = Manifest::new("heatmap");
    let mut spec = load_experiment(&a.source, &mut m)?;
    spec.trials = a.trials.unwrap_or(spec.trials);
    spec.seed = a.seed.unwrap_or(spec.seed);
    spec.validate().context("harness")?;
    m.param("trials", spec.trials)
        .param("seed", spec.seed)
        .opt_param("workers", a.workers);
    m.switch("long", a.long);
    let dir = prepare(&a.output)?;
    let h = run_heatmap(&spec, a.workers).context("harness")?;
    h.write_dir(&dir, a.long).context("harness")?;
    for f in ["heatmap.csv", "heatmap.meta.txt", "experiment.toml"] {
        m.output(&dir.join(f));
    }
    if a.long {
        m.output(&dir.join("heatmap_long.csv"));
    }
    match h.argmin() {
        Some(c) => {
            m.note("k_min", c.order)
                .note("delta_min", c.delta)
                .note("error_min", c.error);
            println!(
                "argmin k={} delta={} mean error={:.4}",
                c.order, c.delta, c.error
            );
        }
        None => println!("no cell produced a finite error"),
    }
    if !h.diagnostics.is_empty() {
        eprintln!(
            "{} cell diagnostic(s); see heatmap.meta.txt",
            h.diagnostics.len()
        );
    }
    m.write(&dir)?;
    Ok(())
}

pub fn baselines(a: &BaselinesArgs) -> Result<()> {
    let mut m = Manifest::new("baselines");
    let mut spec = load_experiment(&a.source, &mut m)?;
    spec.trials = a.trials.unwrap_or(spec.trials);
    spec.seed = a.seed.unwrap_or(spec.seed);
    if a.max_order < 3 {
        return Err(usage("--max-order must be at least 3"));
    }
    m.param("max-order", a.max_order)
        .param("trials", spec.trials)
        .param("seed", spec.seed)
        .opt_param("workers", a.workers);
    let dir = prepare(&a.output)?;
    let (summary, h): (BaselineSummary, _) = run_baselines(
        &spec.scenario,
        &spec.deltas,
        a.max_order,
        spec.trials,
        spec.seed,
        a.workers,
    )
    .context("harness")?;
    let bp = dir.join("baselines.csv");
    write_text(&bp, &summary.table())?;
    h.write_dir(&dir, false).context("harness")?;
    m.output(&bp).output(&dir.join("heatmap.csv"));
    m.write(&dir)?;
    print!("{}", summary.table());
    Ok(())
}

pub fn multicascade(a: &MulticascadeArgs) -> Result<()> {
    let mut m = Manifest::new("multicascade");
    let (bundle, hub) = match &a.traces {
        Some(dir) => {
            require_file(dir)?;
            m.param("traces", dir.display());
            (CascadeBundle::read_dir(dir).context("multicascade")?, None)
        }
        None => {
            if a.cascades == 0 {
                return Err(usage("--cascades must be at least 1"));
            }
            m.param("height", a.height)
                .param("hub-degree", a.hub_degree)
                .param("cascades", a.cascades);
            let g = build_tree_with_hub(a.height, a.hub_degree).context("si")?;
            let bundle = with_workers(a.workers, || simulate_bundle(&g, a.cascades, a.seed))
                .context("si")?
                .context("si")?;
            (bundle, g.hub())
        }
    };
    let window = a.window.unwrap_or(a.k as f64 * a.delta);
    m.param("k", a.k)
        .param("delta", a.delta)
        .param("threshold", a.threshold)
        .param("window", window)
        .param("seed", a.seed)
        .opt_param("workers", a.workers);
    let config = DetectorConfig::threshold(a.k, a.delta, a.threshold, 0.0).context("detector")?;
    let dir = prepare(&a.output)?;
    let est = with_workers(a.workers, || {
        estimate_high_degree(&bundle, &config, Some(window))
    })
    .context("multicascade")?
    .context("multicascade")?;
    let vp = dir.join("high_degree.txt");
    write_text(&vp, &est.vertex_list())?;
    let pp = dir.join("provenance.txt");
    write_text(&pp, &est.provenance())?;
    m.output(&vp)
        .output(&pp)
        .note("estimate_size", est.vertices.len());
    if let Some(h) = hub {
        m.note("hub", h)
            .note("hub_found", est.vertices.contains(&h));
    }
    m.write(&dir)?;
    let ids: Vec<String> = est.vertices.iter().map(usize::to_string).collect();
    println!("{} vertex(es): {}", ids.len(), ids.join(" "));
    Ok(())
}

pub fn analyze_binned(a: &AnalyzeBinnedArgs) -> Result<()> {
    let mut m = Manifest::new("analyze-binned");
    require_file(&a.input)?;
    let base = match &a.spec {
        Some(p) => {
            require_file(p)?;
            BinnedAnalysisSpec::read(p).context("ingest")?
        }
        None => BinnedAnalysisSpec::preset("sd-covid-style").context("ingest")?,
    };
    let k = a.k.unwrap_or(base.k);
    let delta_days = a.delta_days.unwrap_or(base.delta_days);
    let mode: CountMode = match &a.mode {
        Some(s) => s.parse().context("ingest")?,
        None => base.mode,
    };
    let region = a.region.clone().or(base.region);
    if delta_days == 0 {
        return Err(usage("delta-days must be positive"));
    }
    let mode_name = match mode {
        CountMode::Daily => "daily",
        CountMode::Cumulative => "cumulative",
    };
    m.param("input", a.input.display())
        .param("k", k)
        .param("delta-days", delta_days)
        .param("mode", mode_name)
        .opt_param("region", region.as_ref())
        .param("seed", a.seed);
    let opts = LoadOptions {
        mode,
        region,
        ..LoadOptions::default()
    };
    let series = load_daily_csv(&a.input, &opts).context("ingest")?;
    let analysis = analyze_series(&series, k, delta_days).context("ingest")?;
    let dir = prepare(&a.output)?;
    let pp = dir.join("profile.csv");
    analysis.write_csv(&pp).context("ingest")?;
    let sp = dir.join("series.csv");
    series.write_csv(&sp).context("ingest")?;
    let summary = analysis.summary(&series);
    m.output(&pp).output(&sp).note("summary", &summary);
    if !series.adjustments.is_empty() {
        m.note("adjusted_days", series.adjustments.len());
    }
    m.write(&dir)?;
    println!("{summary}");
    Ok(())
}

struct PresetFile {
    name: &'static str,
    file: String,
    body: String,
}

fn preset_files() -> Result<Vec<PresetFile>> {
    let mut out = Vec::new();
    for &name in PRESET_NAMES {
        out.push(PresetFile {
            name,
            file: format!("{name}.toml"),
            body: ExperimentSpec::preset(name)?.to_toml(),
        });
    }
    out.push(PresetFile {
        name: "sd-covid-style",
        file: "sd-covid-style.toml".into(),
        body: BinnedAnalysisSpec::preset("sd-covid-style")?.to_toml(),
    });
    for name in ["sin-plus-exp", "const-plus-exp"] {
        out.push(PresetFile {
            name,
            file: format!("{name}.rate"),
            body: format!("{}\n", RateSpec::preset(name)?),
        });
    }
    Ok(out)
}

pub fn presets(a: &PresetsArgs) -> Result<()> {
    let files = preset_files().context("harness")?;
    let selected: Vec<&PresetFile> = match &a.name {
        Some(n) => {
            let f = files
                .iter()
                .find(|f| f.name == n.as_str())
                .ok_or_else(|| usage(format!("unknown preset {n:?}")))?;
            vec![f]
        }
        None => files.iter().collect(),
    };
    if a.write {
        let mut m = Manifest::new("presets");
        if let Some(n) = &a.name {
            m.param("name", n);
        }
        m.switch("write", true).param("seed", a.seed);
        let dir = prepare(&a.output)?;
        for f in &selected {
            let p = dir.join(&f.file);
            write_text(&p, &f.body)?;
            m.output(&p);
            println!("wrote {}", p.display());
        }
        m.write(&dir)?;
    } else if a.name.is_some() {
        print!("{}", selected[0].body);
    } else {
        for f in &selected {
            println!("{:<16} {}", f.name, f.file);
        }
    }
    Ok(())
}
