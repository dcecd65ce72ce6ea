//! Change-point extraction from derivative profiles.
//!
//! [`detect`] thresholds `|Δ^(k) N(t)| / δ` at `A/2` over a grid and keeps a
//! maximum-size packing of the super-threshold times with separation `2kδ`.
//! [`argmax_single`] is the single-change variant.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::derivative::{derivative_profile, DerivativeProfile, DerivativeStencil};
use crate::error::{Error, Result};
use crate::process::CountingFunction;

/// Default grid step as a fraction of δ.
pub const DEFAULT_GRID_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectionMode {
    /// Keep times whose score is at least `A/2`, then pack.
    Threshold(f64),
    /// Report only the largest-magnitude grid point.
    ArgmaxSingle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Number of derivatives `k` (stencil order).
    pub order: usize,
    pub delta: f64,
    pub mode: DetectionMode,
    pub grid_step: f64,
    /// Analysis horizon `T`; the grid never reaches past `T - δ`.
    pub horizon: f64,
    /// Optional sub-window `[lo, hi]` of `[0, T]` to scan.
    pub window: Option<(f64, f64)>,
}

impl DetectorConfig {
    /// Threshold-mode config with the default grid step `δ/10`.
    pub fn threshold(order: usize, delta: f64, threshold: f64, horizon: f64) -> Result<Self> {
        let cfg = Self {
            order,
            delta,
            mode: DetectionMode::Threshold(threshold),
            grid_step: delta * DEFAULT_GRID_FRACTION,
            horizon,
            window: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Argmax-mode config with the default grid step `δ/10`.
    pub fn argmax(order: usize, delta: f64, horizon: f64) -> Result<Self> {
        let cfg = Self {
            order,
            delta,
            mode: DetectionMode::ArgmaxSingle,
            grid_step: delta * DEFAULT_GRID_FRACTION,
            horizon,
            window: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_grid_step(mut self, grid_step: f64) -> Result<Self> {
        self.grid_step = grid_step;
        self.validate()?;
        Ok(self)
    }

    pub fn with_window(mut self, lo: f64, hi: f64) -> Result<Self> {
        self.window = Some((lo, hi));
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::param("order k must be at least 1"));
        }
        if !(self.delta > 0.0) || !self.delta.is_finite() {
            return Err(Error::param("delta must be positive"));
        }
        if !(self.grid_step > 0.0) || self.grid_step > self.delta * (1.0 + 1e-12) {
            return Err(Error::param(format!(
                "grid step must be in (0, δ], got {} with δ={}",
                self.grid_step, self.delta
            )));
        }
        if let DetectionMode::Threshold(a) = self.mode {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::param("threshold must be positive"));
            }
        }
        if !self.horizon.is_finite() {
            return Err(Error::param("horizon must be finite"));
        }
        if let Some((lo, hi)) = self.window {
            if !(lo <= hi) {
                return Err(Error::param(format!("empty window [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Minimum separation between reported estimates, `2kδ`.
    pub fn min_separation(&self) -> f64 {
        2.0 * self.order as f64 * self.delta
    }

    fn scan_window(&self) -> (f64, f64) {
        let (lo, hi) = self.window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        (lo, hi.min(self.horizon - self.delta))
    }
}

/// A grid time with its score `|Δ|/δ` and the raw stencil value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredTime {
    pub time: f64,
    pub score: f64,
    pub raw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChangePointReport {
    pub estimates: Vec<ScoredTime>,
    pub config: DetectorConfig,
    pub candidate_count: usize,
    pub grid_points: usize,
    /// First and last grid times actually scanned.
    pub grid_span: Option<(f64, f64)>,
}

impl ChangePointReport {
    pub fn times(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.time).collect()
    }

    /// Writes `t_hat,score` CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t_hat,score\n");
        for e in &self.estimates {
            let _ = writeln!(out, "{},{}", e.time, e.score);
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    /// `key=value` metadata lines describing the run; `extra` is appended verbatim.
    pub fn metadata(&self, extra: &[(String, String)]) -> String {
        let c = &self.config;
        let mut out = String::new();
        let _ = writeln!(out, "order={}", c.order);
        let _ = writeln!(out, "delta={}", c.delta);
        match c.mode {
            DetectionMode::Threshold(a) => {
                let _ = writeln!(out, "mode=threshold");
                let _ = writeln!(out, "threshold={a}");
            }
            DetectionMode::ArgmaxSingle => {
                let _ = writeln!(out, "mode=argmax-single");
            }
        }
        let _ = writeln!(out, "grid_step={}", c.grid_step);
        let _ = writeln!(out, "horizon={}", c.horizon);
        let _ = writeln!(out, "min_separation={}", c.min_separation());
        if let Some((lo, hi)) = self.grid_span {
            let _ = writeln!(out, "grid_first={lo}");
            let _ = writeln!(out, "grid_last={hi}");
        }
        let _ = writeln!(out, "grid_points={}", self.grid_points);
        let _ = writeln!(out, "candidate_count={}", self.candidate_count);
        let _ = writeln!(out, "estimate_count={}", self.estimates.len());
        for (k, v) in extra {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }
}

/// Grid points with `|value|/δ >= A/2`, in time order.
pub fn threshold_candidates(
    profile: &DerivativeProfile,
    delta: f64,
    threshold: f64,
) -> Vec<ScoredTime> {
    profile
        .points
        .iter()
        .filter_map(|&(time, raw)| {
            let score = raw.abs() / delta;
            (score >= threshold / 2.0).then_some(ScoredTime { time, score, raw })
        })
        .collect()
}

/// Maximum-cardinality packing: a subset of `candidates` (sorted by time)
/// with pairwise gaps `> min_sep` and as many points as possible. Gaps within
/// a relative `1e-9` of `min_sep` count as equal to it, so grid points exactly
/// `2kδ` apart are treated the same wherever the grid sits. Among
/// maximum packings the one with the largest total score wins, earliest on
/// exact ties. Any maximum packing is also maximal.
pub fn maximum_packing(candidates: &[ScoredTime], min_sep: f64) -> Vec<ScoredTime> {
    let n = candidates.len();
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(candidates.windows(2).all(|w| w[0].time <= w[1].time));
    // next[i]: first index whose time is strictly more than min_sep after i
    let reach = min_sep * (1.0 + 1e-9);
    let next: Vec<usize> = (0..n)
        .map(|i| {
            let limit = candidates[i].time + reach;
            i + 1 + candidates[i + 1..].partition_point(|c| c.time <= limit)
        })
        .collect();
    // best[i] = (count, score sum) of the best packing within candidates[i..]
    let mut best = vec![(0usize, 0.0f64); n + 1];
    let mut take = vec![false; n];
    for i in (0..n).rev() {
        let skip = best[i + 1];
        let with = (1 + best[next[i]].0, candidates[i].score + best[next[i]].1);
        if with.0 > skip.0 || (with.0 == skip.0 && with.1 >= skip.1) {
            best[i] = with;
            take[i] = true;
        } else {
            best[i] = skip;
        }
    }
    let mut out = Vec::with_capacity(best[0].0);
    let mut i = 0;
    while i < n {
        if take[i] {
            out.push(candidates[i]);
            i = next[i];
        } else {
            i += 1;
        }
    }
    out
}

/// The derivative profile `detect` scans for `config`.
pub fn detection_profile<N: CountingFunction + ?Sized>(
    n: &N,
    config: &DetectorConfig,
) -> Result<DerivativeProfile> {
    config.validate()?;
    if n.horizon() + 1e-9 < config.horizon {
        return Err(Error::param(format!(
            "process horizon {} is shorter than the detector horizon {}",
            n.horizon(),
            config.horizon
        )));
    }
    let stencil = DerivativeStencil::new(config.order, config.delta)?;
    derivative_profile(n, &stencil, config.grid_step, config.scan_window())
}

/// Runs the full detector: profile, threshold, packing with separation `2kδ`.
/// In argmax mode the report carries the single largest-magnitude point.
pub fn detect<N: CountingFunction + ?Sized>(
    n: &N,
    config: &DetectorConfig,
) -> Result<ChangePointReport> {
    let profile = detection_profile(n, config)?;
    let grid_span = profile
        .points
        .first()
        .zip(profile.points.last())
        .map(|(a, b)| (a.0, b.0));
    let (estimates, candidate_count) = match config.mode {
        DetectionMode::Threshold(a) => {
            let candidates = threshold_candidates(&profile, config.delta, a);
            let count = candidates.len();
            (maximum_packing(&candidates, config.min_separation()), count)
        }
        DetectionMode::ArgmaxSingle => match profile_argmax(&profile) {
            Some((time, raw)) => (
                vec![ScoredTime {
                    time,
                    score: raw.abs() / config.delta,
                    raw,
                }],
                1,
            ),
            None => (Vec::new(), 0),
        },
    };
    Ok(ChangePointReport {
        estimates,
        config: config.clone(),
        candidate_count,
        grid_points: profile.len(),
        grid_span,
    })
}

/// Largest `|value|` in a profile, earliest on ties.
pub fn profile_argmax(profile: &DerivativeProfile) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &(t, v) in &profile.points {
        match best {
            Some((_, b)) if v.abs() <= b.abs() => {}
            _ => best = Some((t, v)),
        }
    }
    best
}

/// Grid time maximizing `|Δ^(k) N(t)|` over `window` (clipped to the valid range).
pub fn argmax_single<N: CountingFunction + ?Sized>(
    n: &N,
    order: usize,
    delta: f64,
    grid_step: f64,
    window: (f64, f64),
) -> Result<f64> {
    let stencil = DerivativeStencil::new(order, delta)?;
    let profile = derivative_profile(n, &stencil, grid_step, window)?;
    profile_argmax(&profile)
        .map(|p| p.0)
        .ok_or(Error::EmptyWindow)
}

/// Largest gap between order-matched elements of two equal-size time sets.
pub fn d_max(s: &[f64], t: &[f64]) -> Result<f64> {
    if s.len() != t.len() {
        return Err(Error::SizeMismatch {
            left: s.len(),
            right: t.len(),
        });
    }
    let mut a = s.to_vec();
    let mut b = t.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// Minimum pairwise gap; `+∞` when there is no pair.
pub fn sep(s: &[f64]) -> f64 {
    let mut a = s.to_vec();
    a.sort_by(f64::total_cmp);
    a.windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
}

/// Step `δ = S^(-1/(2ℓ+1))` for smoothness scale `S > 1`.
pub fn suggest_delta(smoothness: f64, ell: usize) -> Result<f64> {
    if !(smoothness > 1.0) || !smoothness.is_finite() {
        return Err(Error::param(format!(
            "smoothness scale must exceed 1, got {smoothness}"
        )));
    }
    if ell == 0 {
        return Err(Error::param("ℓ must be at least 1"));
    }
    Ok(smoothness.powf(-1.0 / (2 * ell + 1) as f64))
}

/// Smallest `ℓ >= 1` with `(ℓ+1)/(2ℓ+1) < θ`. The detector order is `ℓ+1`.
pub fn min_order_for(theta: f64) -> Result<usize> {
    if !(theta > 0.5) {
        return Err(Error::param(format!(
            "θ={theta} <= 1/2: jumps below the square-root fluctuation scale are undetectable for every order"
        )));
    }
    if !(theta < 1.0) {
        return Err(Error::param(format!("θ must be below 1, got {theta}")));
    }
    // (ℓ+1)/(2ℓ+1) < θ  ⇔  ℓ > (1-θ)/(2θ-1); start near the bound and step
    let guess = ((1.0 - theta) / (2.0 * theta - 1.0)).floor().max(1.0) as usize;
    let ok = |l: usize| ((l + 1) as f64) < theta * (2 * l + 1) as f64;
    let mut ell = guess.saturating_sub(1).max(1);
    while !ok(ell) {
        ell += 1;
    }
    Ok(ell)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::derivative::DerivativeProfile;
    use crate::process::EventTimes;

    fn st(time: f64, score: f64) -> ScoredTime {
        ScoredTime {
            time,
            score,
            raw: score,
        }
    }

    fn profile(points: Vec<(f64, f64)>, delta: f64) -> DerivativeProfile {
        DerivativeProfile {
            order: 2,
            delta,
            grid_step: delta / 10.0,
            points,
            empty_window: false,
        }
    }

    #[test]
    fn threshold_examples() {
        let d = 0.5;
        let p = profile(vec![(1.0, 0.0), (2.0, 0.0)], d);
        assert!(threshold_candidates(&p, d, 1.0).is_empty());
        let p = profile(vec![(1.0, 6.0 * d), (2.0, d)], d);
        let c = threshold_candidates(&p, d, 10.0);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].time, 1.0);
        assert!((c[0].score - 6.0).abs() < 1e-12);
        let p = profile(vec![(1.0, -0.3), (2.0, 0.2), (3.0, 0.0)], d);
        assert_eq!(threshold_candidates(&p, d, 0.001).len(), 2);
    }

    #[test]
    fn packing_examples() {
        let out = maximum_packing(&[st(1.0, 1.0), st(1.1, 2.0), st(5.0, 1.0)], 0.5);
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].time, 5.0);
        assert!(out[0].time == 1.0 || out[0].time == 1.1);

        assert_eq!(maximum_packing(&[st(3.0, 1.0)], 0.5), vec![st(3.0, 1.0)]);

        let out = maximum_packing(&[st(1.0, 1.0), st(1.2, 5.0), st(1.3, 2.0)], 0.5);
        assert_eq!(out, vec![st(1.2, 5.0)]);

        // greedy-by-score would stop at {0.4}
        let out = maximum_packing(&[st(0.0, 1.0), st(0.4, 9.0), st(0.8, 1.0)], 0.5);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn d_max_and_sep_examples() {
        assert_eq!(d_max(&[], &[]).unwrap(), 0.0);
        assert_eq!(d_max(&[1.0, 3.0], &[2.5, 1.5]).unwrap(), 0.5);
        assert_eq!(d_max(&[2.0], &[2.0]).unwrap(), 0.0);
        assert!(matches!(
            d_max(&[1.0], &[]),
            Err(Error::SizeMismatch { left: 1, right: 0 })
        ));
        assert_eq!(sep(&[]), f64::INFINITY);
        assert_eq!(sep(&[5.0]), f64::INFINITY);
        assert_eq!(sep(&[6.0, 1.0, 4.0]), 2.0);
    }

    #[test]
    fn tuning_helpers() {
        assert!((suggest_delta(1e6, 2).unwrap() - 10f64.powf(-1.2)).abs() < 1e-12);
        assert!((suggest_delta(1e6, 2).unwrap() - 0.0631).abs() < 1e-4);
        assert!((suggest_delta(1e6, 1).unwrap() - 0.01).abs() < 1e-12);
        let mut prev = 0.0;
        for ell in 1..50 {
            let d = suggest_delta(1e6, ell).unwrap();
            assert!(d > prev && d < 1.0);
            prev = d;
        }
        assert!(suggest_delta(1.0, 2).is_err());
        assert!(suggest_delta(0.5, 2).is_err());

        assert_eq!(min_order_for(0.75).unwrap(), 1);
        assert_eq!(min_order_for(0.6).unwrap(), 3);
        assert!(min_order_for(0.5).is_err());
        assert!(min_order_for(0.3).is_err());
        // brute-force enumeration oracle
        for i in 1..400 {
            let theta = 0.5 + i as f64 * 0.00124;
            let brute = (1..)
                .find(|&l: &usize| ((l + 1) as f64) < theta * (2 * l + 1) as f64)
                .unwrap();
            assert_eq!(min_order_for(theta).unwrap(), brute, "θ={theta}");
        }
        // ℓ grows like 1/(θ-1/2)
        let eps = 1e-3;
        let l = min_order_for(0.5 + eps).unwrap() as f64;
        assert!(l * eps > 0.2 && l * eps < 0.3, "{l}");
    }

    #[test]
    fn argmax_ties_go_to_earliest() {
        let p = profile(vec![(1.0, 2.0), (3.0, -5.0), (7.0, 5.0), (9.0, 1.0)], 1.0);
        assert_eq!(profile_argmax(&p).unwrap().0, 3.0);
        let p = profile(vec![(9.1, 4.0), (9.0, 1.0)], 1.0);
        assert_eq!(profile_argmax(&p).unwrap().0, 9.1);
        assert!(profile_argmax(&profile(vec![], 1.0)).is_none());
    }

    #[test]
    fn argmax_empty_window_errors() {
        let e = EventTimes::new(vec![0.1], 1.0).unwrap();
        assert!(matches!(
            argmax_single(&e, 4, 0.5, 0.05, (0.0, 1.0)),
            Err(Error::EmptyWindow)
        ));
    }

    #[test]
    fn ramp_detected_within_delta() {
        // events at 5 + (i + 0.5)/100: rate 0 before t=5, 100 after
        let times: Vec<f64> = (0..500).map(|i| 5.0 + (i as f64 + 0.5) / 100.0).collect();
        let e = EventTimes::new(times, 10.0).unwrap();
        let cfg = DetectorConfig::threshold(2, 0.5, 100.0, 10.0).unwrap();
        let r = detect(&e, &cfg).unwrap();
        assert_eq!(r.estimates.len(), 1, "{:?}", r.estimates);
        assert!((r.estimates[0].time - 5.0).abs() <= 0.5);
        for est in &r.estimates {
            assert!(est.score >= 50.0);
        }
    }

    #[test]
    fn config_validation() {
        assert!(DetectorConfig::threshold(0, 0.5, 1.0, 10.0).is_err());
        assert!(DetectorConfig::threshold(2, -0.5, 1.0, 10.0).is_err());
        assert!(DetectorConfig::threshold(2, 0.5, 0.0, 10.0).is_err());
        let c = DetectorConfig::argmax(2, 0.5, 10.0).unwrap();
        assert!(c.clone().with_grid_step(0.6).is_err());
        assert!(c.with_grid_step(0.5).is_ok());
    }

    #[test]
    fn detect_rejects_short_process() {
        let e = EventTimes::new(vec![1.0], 5.0).unwrap();
        let cfg = DetectorConfig::threshold(2, 0.5, 1.0, 10.0).unwrap();
        assert!(detect(&e, &cfg).is_err());
    }
}
