//! Deterministic smooth-plus-jump rate functions
//! `Λ(t) = Σ_i A_i x_i(t - t_i) 1(t >= t_i)`.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Samples per unit time when checking non-negativity.
const POSITIVITY_SAMPLES_PER_UNIT: f64 = 1000.0;

/// Smooth profile `x(s)` of one component, `s` measured from its onset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum SmoothShape {
    Constant,
    /// `offset + sin(omega * s + phase)`
    Sinusoid {
        offset: f64,
        omega: f64,
        phase: f64,
    },
    /// `exp(-rate * s)`
    ExpDecay {
        rate: f64,
    },
    /// `Σ c_i s^i`, ascending coefficients.
    Polynomial {
        coefficients: Vec<f64>,
    },
}

impl SmoothShape {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            SmoothShape::Constant => 1.0,
            SmoothShape::Sinusoid {
                offset,
                omega,
                phase,
            } => offset + (omega * s + phase).sin(),
            SmoothShape::ExpDecay { rate } => (-rate * s).exp(),
            SmoothShape::Polynomial { coefficients } => {
                crate::derivative::eval_poly(coefficients, s)
            }
        }
    }

    /// Upper bound of `x(s)` for `s` in `[lo, hi]`.
    pub fn upper_bound(&self, lo: f64, hi: f64) -> f64 {
        match self {
            SmoothShape::Constant => 1.0,
            SmoothShape::Sinusoid { offset, .. } => offset + 1.0,
            SmoothShape::ExpDecay { rate } => {
                if *rate >= 0.0 {
                    (-rate * lo).exp()
                } else {
                    (-rate * hi).exp()
                }
            }
            SmoothShape::Polynomial { coefficients } => {
                let m = lo.abs().max(hi.abs());
                coefficients
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.abs() * m.powi(i as i32))
                    .sum()
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            SmoothShape::Constant => "constant",
            SmoothShape::Sinusoid { .. } => "sinusoid",
            SmoothShape::ExpDecay { .. } => "exp-decay",
            SmoothShape::Polynomial { .. } => "polynomial",
        }
    }

    fn params(&self) -> Vec<f64> {
        match self {
            SmoothShape::Constant => vec![],
            SmoothShape::Sinusoid {
                offset,
                omega,
                phase,
            } => vec![*offset, *omega, *phase],
            SmoothShape::ExpDecay { rate } => vec![*rate],
            SmoothShape::Polynomial { coefficients } => coefficients.clone(),
        }
    }

    fn from_parts(name: &str, params: &[f64]) -> std::result::Result<Self, String> {
        let want = |n: usize| {
            if params.len() == n {
                Ok(())
            } else {
                Err(format!(
                    "shape {name} takes {n} params, got {}",
                    params.len()
                ))
            }
        };
        match name {
            "constant" => want(0).map(|_| SmoothShape::Constant),
            "sinusoid" => want(3).map(|_| SmoothShape::Sinusoid {
                offset: params[0],
                omega: params[1],
                phase: params[2],
            }),
            "exp-decay" => want(1).map(|_| SmoothShape::ExpDecay { rate: params[0] }),
            "polynomial" if !params.is_empty() => Ok(SmoothShape::Polynomial {
                coefficients: params.to_vec(),
            }),
            "polynomial" => Err("polynomial needs at least one coefficient".into()),
            other => Err(format!(
                "unknown shape {other:?} (expected constant, sinusoid, exp-decay, polynomial)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpComponent {
    pub amplitude: f64,
    pub onset: f64,
    pub shape: SmoothShape,
}

impl JumpComponent {
    pub fn new(amplitude: f64, onset: f64, shape: SmoothShape) -> Self {
        Self {
            amplitude,
            onset,
            shape,
        }
    }

    /// Contribution at absolute time `t`, zero before the onset.
    pub fn eval(&self, t: f64) -> f64 {
        if t >= self.onset {
            self.amplitude * self.shape.eval(t - self.onset)
        } else {
            0.0
        }
    }
}

impl fmt::Display for JumpComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self.shape.params().iter().map(f64::to_string).collect();
        write!(
            f,
            "A={} t0={} shape={} params={}",
            self.amplitude,
            self.onset,
            self.shape.name(),
            params.join(",")
        )
    }
}

/// A validated sum of jump components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSpec {
    components: Vec<JumpComponent>,
}

impl RateSpec {
    /// Checks amplitudes, onsets and that every delayed component starts positive.
    pub fn new(components: Vec<JumpComponent>) -> Result<Self> {
        for (i, c) in components.iter().enumerate() {
            if !(c.amplitude > 0.0) || !c.amplitude.is_finite() {
                return Err(Error::param(format!(
                    "component {i}: amplitude must be positive, got {}",
                    c.amplitude
                )));
            }
            if !(c.onset >= 0.0) || !c.onset.is_finite() {
                return Err(Error::param(format!(
                    "component {i}: onset must be non-negative, got {}",
                    c.onset
                )));
            }
            if c.shape.params().iter().any(|p| !p.is_finite()) {
                return Err(Error::param(format!(
                    "component {i}: non-finite shape parameter"
                )));
            }
            if c.onset > 0.0 && !(c.shape.eval(0.0) > 0.0) {
                return Err(Error::param(format!(
                    "component {i}: shape must be positive at its onset (negative jumps are not supported)"
                )));
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[JumpComponent] {
        &self.components
    }

    /// `Λ(t)`; right-continuous at every onset.
    pub fn eval_rate(&self, t: f64) -> f64 {
        self.components.iter().map(|c| c.eval(t)).sum()
    }

    /// Bound `M >= sup Λ` on `[a, b]` from per-shape analytic bounds.
    pub fn rate_upper_bound(&self, a: f64, b: f64) -> f64 {
        self.components
            .iter()
            .filter(|c| c.onset <= b)
            .map(|c| {
                let lo = a.max(c.onset) - c.onset;
                let hi = b - c.onset;
                c.amplitude * c.shape.upper_bound(lo, hi)
            })
            .sum::<f64>()
            .max(0.0)
    }

    /// Dense-sampling check that `Λ >= 0` on `[0, horizon]`.
    pub fn validate_on(&self, horizon: f64) -> Result<()> {
        let n = (horizon * POSITIVITY_SAMPLES_PER_UNIT).ceil().max(1.0) as usize;
        let probes = (0..=n)
            .map(|i| horizon * i as f64 / n as f64)
            .chain(self.components.iter().map(|c| c.onset));
        for t in probes {
            let v = self.eval_rate(t);
            if !(v >= 0.0) {
                return Err(Error::param(format!("rate is negative ({v}) at t={t}")));
            }
        }
        Ok(())
    }

    /// Onsets of components starting after time 0, i.e. the jump times.
    pub fn jump_times(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .components
            .iter()
            .filter(|c| c.onset > 0.0)
            .map(|c| c.onset)
            .collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    /// `base (1 + sin t) + jump exp(-(t - t0)) 1(t >= t0)`.
    pub fn sin_plus_exp(base: f64, jump: f64, t0: f64) -> Result<Self> {
        Self::new(vec![
            JumpComponent::new(
                base,
                0.0,
                SmoothShape::Sinusoid {
                    offset: 1.0,
                    omega: 1.0,
                    phase: 0.0,
                },
            ),
            JumpComponent::new(jump, t0, SmoothShape::ExpDecay { rate: 1.0 }),
        ])
    }

    /// `base + jump exp(-(t - t0)) 1(t >= t0)`.
    pub fn const_plus_exp(base: f64, jump: f64, t0: f64) -> Result<Self> {
        Self::new(vec![
            JumpComponent::new(base, 0.0, SmoothShape::Constant),
            JumpComponent::new(jump, t0, SmoothShape::ExpDecay { rate: 1.0 }),
        ])
    }

    pub fn constant(rate: f64) -> Result<Self> {
        Self::new(vec![JumpComponent::new(rate, 0.0, SmoothShape::Constant)])
    }

    /// Named presets: `sin-plus-exp` and `const-plus-exp`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "sin-plus-exp" => Self::sin_plus_exp(1e6, 4e4, 9.0),
            "const-plus-exp" => Self::const_plus_exp(1e4, 8e3, 1.0),
            other => Err(Error::param(format!(
                "unknown rate preset {other:?} (expected sin-plus-exp or const-plus-exp)"
            ))),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        text.parse().map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.display().to_string(),
                line,
                message,
            },
            other => other,
        })
    }
}

impl fmt::Display for RateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.components {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

impl FromStr for RateSpec {
    type Err = Error;

    /// One component per line: `A=<real> t0=<real> shape=<name> params=<comma list>`.
    fn from_str(text: &str) -> Result<Self> {
        let mut components = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: "<rate spec>".into(),
                line: i + 1,
                message,
            };
            let mut amplitude = None;
            let mut onset = None;
            let mut shape = None;
            let mut params: Vec<f64> = Vec::new();
            for tok in line.split_whitespace() {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| err(format!("expected key=value, got {tok:?}")))?;
                let num = |v: &str| {
                    v.parse::<f64>()
                        .map_err(|_| err(format!("bad number {v:?} for {k}")))
                };
                match k {
                    "A" => amplitude = Some(num(v)?),
                    "t0" => onset = Some(num(v)?),
                    "shape" => shape = Some(v.to_string()),
                    "params" => {
                        params = v
                            .split(',')
                            .filter(|s| !s.is_empty())
                            .map(num)
                            .collect::<Result<_>>()?
                    }
                    other => return Err(err(format!("unknown key {other:?}"))),
                }
            }
            let shape = shape.ok_or_else(|| err("missing shape=".into()))?;
            let shape = SmoothShape::from_parts(&shape, &params).map_err(err)?;
            components.push(JumpComponent::new(
                amplitude.ok_or_else(|| err("missing A=".into()))?,
                onset.unwrap_or(0.0),
                shape,
            ));
        }
        Self::new(components)
    }
}
