use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ratejump"));
    c.env_remove("RATEJUMP_OUT_DIR");
    c
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn read(p: impl AsRef<Path>) -> String {
    fs::read_to_string(p.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", p.as_ref().display()))
}

fn manifest_value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing"))
        .to_string()
}

/// A short event file with a jump of 600 events per unit time at t=3.
fn write_events(dir: &Path) {
    let mut text = String::from("# horizon=6\n");
    let mut times: Vec<f64> = (0..600).map(|i| (i as f64 + 0.5) / 100.0).collect();
    times.extend((0..1800).map(|i| 3.0 + (i as f64 + 0.5) / 600.0));
    times.sort_by(f64::total_cmp);
    for t in times {
        text.push_str(&format!("{t}\n"));
    }
    fs::write(dir.join("events.txt"), text).unwrap();
}

#[test]
fn detect_writes_report_and_manifest() {
    let tmp = TempDir::new().unwrap();
    write_events(tmp.path());
    let args = [
        "detect",
        "--events",
        "events.txt",
        "--k",
        "2",
        "--delta",
        "0.2",
    ];
    let stdout = ok(&run_in(
        tmp.path(),
        &[
            &args[..],
            &["--threshold", "400", "--dump-profile", "--out", "d"],
        ]
        .concat(),
    ));
    assert!(stdout.starts_with("1 change point(s)"), "{stdout}");
    let report = read(tmp.path().join("d/report.csv"));
    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("t_hat,score"));
    let t: f64 = lines
        .next()
        .unwrap()
        .split(',')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((t - 3.0).abs() <= 0.2 + 1e-9, "{t}");
    assert!(tmp.path().join("d/profile.csv").exists());
    let m = read(tmp.path().join("d/manifest.txt"));
    assert_eq!(manifest_value(&m, "param.k"), "2");
    assert_eq!(manifest_value(&m, "param.threshold"), "400");
    assert_eq!(manifest_value(&m, "param.window-lo"), "unset");
    assert!(manifest_value(&m, "command").contains("--dump-profile"));
}

#[test]
fn negative_delta_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    write_events(tmp.path());
    let out = run_in(
        tmp.path(),
        &[
            "detect",
            "--events",
            "events.txt",
            "--k",
            "2",
            "--delta",
            "-1",
            "--threshold",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(
        stderr(&out).contains("delta must be positive"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn conflicting_flags_are_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    write_events(tmp.path());
    let out = run_in(
        tmp.path(),
        &[
            "detect",
            "--events",
            "events.txt",
            "--binned",
            "b.csv",
            "--k",
            "2",
            "--delta",
            "1",
            "--threshold",
            "1",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    let out = run_in(
        tmp.path(),
        &["heatmap", "--preset", "single-jump", "--spec", "x.toml"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_input_is_a_usage_error() {
    let tmp = TempDir::new().unwrap();
    let out = run_in(
        tmp.path(),
        &[
            "argmax",
            "--events",
            "absent.txt",
            "--k",
            "2",
            "--delta",
            "0.5",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("absent.txt"));
}

#[test]
fn runtime_failure_exits_one_and_names_the_module() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("daily.csv"),
        "date,region,cases\n2020-03-01,a,1\n2020-03-02,a,2\n",
    )
    .unwrap();
    let out = run_in(
        tmp.path(),
        &["analyze-binned", "--input", "daily.csv", "--region", "b"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).starts_with("error: ingest:"),
        "{}",
        stderr(&out)
    );

    fs::write(tmp.path().join("bad.txt"), "0.5\nnot-a-number\n").unwrap();
    let out = run_in(
        tmp.path(),
        &[
            "argmax",
            "--events",
            "bad.txt",
            "--horizon",
            "2",
            "--k",
            "1",
            "--delta",
            "0.5",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr(&out).starts_with("error: process:"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn manifest_command_replays_byte_identical_outputs() {
    let tmp = TempDir::new().unwrap();
    ok(&run_in(
        tmp.path(),
        &[
            "simulate-poisson",
            "--preset",
            "const-plus-exp",
            "--horizon",
            "3",
            "--seed",
            "9",
            "--out",
            "a",
        ],
    ));
    let first = read(tmp.path().join("a/events.txt"));
    let cmd = manifest_value(&read(tmp.path().join("a/manifest.txt")), "command");
    let args: Vec<&str> = cmd.split(' ').skip(1).collect();
    let last = args.len() - 1;
    let mut replay = args.clone();
    replay[last] = "b";
    ok(&run_in(tmp.path(), &replay));
    assert_eq!(first, read(tmp.path().join("b/events.txt")));

    write_events(tmp.path());
    let detect = [
        "detect",
        "--events",
        "events.txt",
        "--k",
        "3",
        "--delta",
        "0.3",
        "--argmax-single",
        "--out",
        "c",
    ];
    ok(&run_in(tmp.path(), &detect));
    let cmd = manifest_value(&read(tmp.path().join("c/manifest.txt")), "command");
    let mut replay: Vec<&str> = cmd.split(' ').skip(1).collect();
    let last = replay.len() - 1;
    replay[last] = "e";
    ok(&run_in(tmp.path(), &replay));
    assert_eq!(
        read(tmp.path().join("c/report.csv")),
        read(tmp.path().join("e/report.csv"))
    );
}

#[test]
fn simulators_are_deterministic_under_seed() {
    let tmp = TempDir::new().unwrap();
    for (dir, seed) in [("s1", "4"), ("s2", "4"), ("s3", "5")] {
        ok(&run_in(
            tmp.path(),
            &[
                "simulate-si",
                "--height",
                "5",
                "--hub-degree",
                "20",
                "--seed",
                seed,
                "--out",
                dir,
            ],
        ));
        ok(&run_in(
            tmp.path(),
            &[
                "simulate-poisson",
                "--preset",
                "const-plus-exp",
                "--horizon",
                "2",
                "--bin-width",
                "0.01",
                "--seed",
                seed,
                "--out",
                dir,
            ],
        ));
    }
    for f in ["trace.csv", "infections.txt", "binned.csv"] {
        let a = read(tmp.path().join("s1").join(f));
        assert_eq!(a, read(tmp.path().join("s2").join(f)), "{f}");
        assert_ne!(a, read(tmp.path().join("s3").join(f)), "{f}");
    }
    let m = read(tmp.path().join("s1/manifest.txt"));
    assert!(m.contains("param.seed=4\n"));
}

#[test]
fn si_manifest_reports_hub() {
    let tmp = TempDir::new().unwrap();
    ok(&run_in(
        tmp.path(),
        &[
            "simulate-si",
            "--height",
            "4",
            "--hub-degree",
            "10",
            "--out",
            "o",
        ],
    ));
    let m = read(tmp.path().join("o/manifest.txt"));
    assert_eq!(manifest_value(&m, "hub"), "7");
    assert_eq!(manifest_value(&m, "hub_degree_total"), "13");
    assert_eq!(manifest_value(&m, "vertex_count"), "41");
}

#[test]
fn presets_list_show_and_write() {
    let tmp = TempDir::new().unwrap();
    let list = ok(&run_in(tmp.path(), &["presets"]));
    for name in [
        "single-jump",
        "smooth-jump-scaled",
        "hub-tree",
        "sd-covid-style",
        "sin-plus-exp",
    ] {
        assert!(list.contains(name), "{name}");
    }
    let shown = ok(&run_in(tmp.path(), &["presets", "smooth-jump-scaled"]));
    assert!(shown.contains("name = \"smooth-jump-scaled\""));
    ok(&run_in(tmp.path(), &["presets", "--write", "--out", "p"]));
    assert_eq!(read(tmp.path().join("p/smooth-jump-scaled.toml")), shown);
    let out = run_in(tmp.path(), &["presets", "nonesuch"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn small_heatmap_from_spec_file() {
    let tmp = TempDir::new().unwrap();
    let spec = r#"
name = "tiny"
orders = [1, 2]
deltas = [0.1, 0.2]
trials = 3
seed = 5

[scenario]
kind = "smooth-jump"
base = 1000.0
jump = 800.0
onset = [5.0, 15.0]
horizon = 20.0
"#;
    fs::write(tmp.path().join("tiny.toml"), spec).unwrap();
    let stdout = ok(&run_in(
        tmp.path(),
        &["heatmap", "--spec", "tiny.toml", "--long", "--out", "h"],
    ));
    assert!(stdout.starts_with("argmin k=2"), "{stdout}");
    let matrix = read(tmp.path().join("h/heatmap.csv"));
    assert_eq!(matrix.lines().count(), 3);
    assert_eq!(
        read(tmp.path().join("h/heatmap_long.csv")).lines().count(),
        1 + 2 * 2 * 3
    );
    // the resolved spec round-trips through the written copy
    let again = ok(&run_in(
        tmp.path(),
        &["heatmap", "--spec", "h/experiment.toml", "--out", "h2"],
    ));
    assert_eq!(stdout, again);
    assert_eq!(matrix, read(tmp.path().join("h2/heatmap.csv")));
}

#[test]
fn analyze_binned_finds_step_day() {
    let tmp = TempDir::new().unwrap();
    let mut csv = String::from("date,cases\n");
    for d in 0..60 {
        csv.push_str(&format!("{d},{}\n", if d < 30 { 5 } else { 200 }));
    }
    fs::write(tmp.path().join("daily.csv"), csv).unwrap();
    let stdout = ok(&run_in(
        tmp.path(),
        &["analyze-binned", "--input", "daily.csv", "--out", "a"],
    ));
    assert!(stdout.contains("day=30"), "{stdout}");
    assert!(tmp.path().join("a/profile.csv").exists());
}

#[test]
fn out_dir_defaults_from_environment() {
    let tmp = TempDir::new().unwrap();
    let target = tmp.path().join("from-env");
    let out = bin()
        .current_dir(tmp.path())
        .env("RATEJUMP_OUT_DIR", &target)
        .args([
            "simulate-poisson",
            "--preset",
            "const-plus-exp",
            "--horizon",
            "1",
        ])
        .output()
        .unwrap();
    ok(&out);
    assert!(target.join("events.txt").exists());
    assert!(target.join("manifest.txt").exists());
}
