//! `manifest.txt`: every resolved parameter of a run plus the command line
//! that reproduces it.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};

pub const MANIFEST_FILE: &str = "manifest.txt";

pub struct Manifest {
    subcommand: &'static str,
    args: Vec<String>,
    params: Vec<(String, String)>,
    outputs: Vec<PathBuf>,
    notes: Vec<(String, String)>,
    started: Instant,
}

fn quote(s: &str) -> String {
    if !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || "-_./=:,+".contains(c))
    {
        s.to_string()
    } else {
        format!("'{}'", s.replace('\'', r"'\''"))
    }
}

impl Manifest {
    pub fn new(subcommand: &'static str) -> Self {
        Self {
            subcommand,
            args: Vec::new(),
            params: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
            started: Instant::now(),
        }
    }

    /// Records `--flag value`, both as a parameter and in the replay command.
    pub fn param(&mut self, flag: &str, value: impl Display) -> &mut Self {
        let value = value.to_string();
        self.args.push(format!("--{flag}"));
        self.args.push(quote(&value));
        self.params.push((flag.to_string(), value));
        self
    }

    pub fn opt_param<T: Display>(&mut self, flag: &str, value: Option<T>) -> &mut Self {
        match value {
            Some(v) => self.param(flag, v),
            None => {
                self.params.push((flag.to_string(), "unset".into()));
                self
            }
        }
    }

    /// Records a boolean switch; only `true` appears in the replay command.
    pub fn switch(&mut self, flag: &str, on: bool) -> &mut Self {
        if on {
            self.args.push(format!("--{flag}"));
        }
        self.params.push((flag.to_string(), on.to_string()));
        self
    }

    /// A derived value that is reported but not replayed.
    pub fn note(&mut self, key: &str, value: impl Display) -> &mut Self {
        self.notes.push((key.to_string(), value.to_string()));
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    pub fn command_line(&self, out_dir: &Path) -> String {
        let mut parts = vec!["ratejump".to_string(), self.subcommand.to_string()];
        parts.extend(self.args.iter().cloned());
        parts.push("--out".into());
        parts.push(quote(&out_dir.display().to_string()));
        parts.join(" ")
    }

    pub fn render(&self, out_dir: &Path) -> String {
        let mut out = format!(
            "tool=ratejump {}\nsubcommand={}\ncommand={}\n",
            env!("CARGO_PKG_VERSION"),
            self.subcommand,
            self.command_line(out_dir)
        );
        for (k, v) in &self.params {
            out.push_str(&format!("param.{k}={v}\n"));
        }
        for (k, v) in &self.notes {
            out.push_str(&format!("{k}={v}\n"));
        }
        for p in &self.outputs {
            out.push_str(&format!("output={}\n", p.display()));
        }
        out.push_str(&format!(
            "wall_time_secs={:.3}\n",
            self.started.elapsed().as_secs_f64()
        ));
        out
    }

    pub fn write(&self, out_dir: &Path) -> Result<PathBuf> {
        let path = out_dir.join(MANIFEST_FILE);
        fs::write(&path, self.render(out_dir))
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}
