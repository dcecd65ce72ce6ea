//! Daily count ingestion and day-resolution derivative analysis.
//!
//! Input CSVs carry a `date` column (ISO `YYYY-MM-DD` or an integer day
//! index), a `cases` column holding daily or cumulative counts, and an
//! optional region column for filtering multi-region files. Stencils run on
//! the cumulative curve with δ restricted to whole days, so every evaluation
//! point is a day boundary where the cumulative count is exact.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::derivative::DerivativeStencil;
use crate::error::{Error, Result};
use crate::process::{BinnedSeries, CountingFunction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CountMode {
    #[default]
    Daily,
    Cumulative,
}

impl std::str::FromStr for CountMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "daily" => Ok(CountMode::Daily),
            "cumulative" => Ok(CountMode::Cumulative),
            other => Err(Error::param(format!(
                "mode must be daily or cumulative, got {other:?}"
            ))),
        }
    }
}

/// Parameters of a day-resolution analysis, as stored in preset files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinnedAnalysisSpec {
    pub k: usize,
    pub delta_days: usize,
    pub mode: CountMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
}

impl BinnedAnalysisSpec {
    /// `sd-covid-style`: second difference of the cumulative curve at one-day steps.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "sd-covid-style" => Ok(Self {
                k: 2,
                delta_days: 1,
                mode: CountMode::Daily,
                region: None,
            }),
            other => Err(Error::param(format!(
                "unknown binned-analysis preset {other:?}"
            ))),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("binned analysis spec serializes")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::param(format!("bad analysis spec {}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadOptions {
    pub mode: CountMode,
    /// Keep only rows whose region column equals this value.
    pub region: Option<String>,
    pub region_column: String,
    pub date_column: String,
    pub cases_column: String,
    /// Largest cumulative decrease tolerated (as a fraction of the running
    /// maximum) before the file is rejected; smaller decreases are clamped.
    pub correction_tolerance: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            mode: CountMode::Daily,
            region: None,
            region_column: "region".into(),
            date_column: "date".into(),
            cases_column: "cases".into(),
            correction_tolerance: 0.05,
        }
    }
}

/// Why a day's count differs from the raw input.
#[derive(Debug, Clone, PartialEq)]
pub enum Adjustment {
    /// Missing from the input, filled with zero.
    GapFilled { day: i64 },
    /// Negative daily value (or cumulative decrease) clamped to zero.
    Clamped { day: i64, raw: i64 },
}

/// Gap-free daily counts for one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionSeries {
    pub label: String,
    /// Calendar date of `first_day`, when the input used ISO dates.
    pub start_date: Option<NaiveDate>,
    pub first_day: i64,
    pub counts: Vec<u64>,
    pub adjustments: Vec<Adjustment>,
}

impl RegionSeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Day indices, consecutive from `first_day`.
    pub fn days(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.counts.len() as i64).map(move |i| self.first_day + i)
    }

    pub fn has_gaps(&self) -> bool {
        self.adjustments
            .iter()
            .any(|a| matches!(a, Adjustment::GapFilled { .. }))
    }

    /// Label for `day`: ISO date when known, otherwise the index.
    pub fn day_label(&self, day: i64) -> String {
        match self.start_date {
            Some(d) => (d + chrono::Duration::days(day - self.first_day)).to_string(),
            None => day.to_string(),
        }
    }

    /// Bins of width one day, starting at `first_day`.
    pub fn to_binned(&self) -> BinnedSeries {
        BinnedSeries::new(self.first_day as f64, 1.0, self.counts.clone())
            .expect("unit bin width is valid")
    }

    /// Writes `region,date,cases` with daily counts.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("region,date,cases\n");
        for (day, c) in self.days().zip(&self.counts) {
            let _ = writeln!(out, "{},{},{c}", self.label, self.day_label(day));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

fn parse_day(s: &str) -> Option<(i64, Option<NaiveDate>)> {
    let s = s.trim();
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        let epoch = NaiveDate::from_ymd_opt(1970, 1, 1).unwrap();
        return Some(((d - epoch).num_days(), Some(d)));
    }
    s.parse::<i64>().ok().map(|d| (d, None))
}

/// Loads one region's daily series, normalizing gaps and corrections.
pub fn load_daily_csv(path: &Path, opts: &LoadOptions) -> Result<RegionSeries> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let missing = |name: &str| Error::Parse {
        path: path.display().to_string(),
        line: 1,
        message: format!("missing column `{name}`"),
    };
    let date_col = col(&opts.date_column).ok_or_else(|| missing(&opts.date_column))?;
    let cases_col = col(&opts.cases_column).ok_or_else(|| missing(&opts.cases_column))?;
    let region_col = col(&opts.region_column);
    if opts.region.is_some() && region_col.is_none() {
        return Err(missing(&opts.region_column));
    }

    let mut rows: Vec<(usize, i64, Option<NaiveDate>, i64)> = Vec::new();
    let mut label = opts.region.clone();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |message: String| Error::Parse {
            path: path.display().to_string(),
            line,
            message,
        };
        if let (Some(want), Some(c)) = (&opts.region, region_col) {
            if rec.get(c).map(str::trim) != Some(want.as_str()) {
                continue;
            }
        }
        if label.is_none() {
            label = region_col
                .and_then(|c| rec.get(c))
                .map(|s| s.trim().to_string());
        }
        let raw_date = rec.get(date_col).unwrap_or("");
        let (day, date) =
            parse_day(raw_date).ok_or_else(|| bad(format!("unparseable date {raw_date:?}")))?;
        let raw_cases = rec.get(cases_col).unwrap_or("").trim();
        let cases = raw_cases
            .parse::<f64>()
            .ok()
            .filter(|c| c.is_finite() && c.fract() == 0.0)
            .ok_or_else(|| bad(format!("bad case count {raw_cases:?}")))?
            as i64;
        if let Some(&(_, prev, _, _)) = rows.last() {
            if day <= prev {
                return Err(bad(format!(
                    "dates must be strictly increasing ({raw_date})"
                )));
            }
        }
        rows.push((line, day, date, cases));
    }
    let Some(&(_, first_day, start_date, _)) = rows.first() else {
        return Err(Error::InvalidData(format!(
            "{}: no rows{}",
            path.display(),
            opts.region
                .as_ref()
                .map(|r| format!(" for region {r:?}"))
                .unwrap_or_default()
        )));
    };

    let span = (rows.last().unwrap().1 - first_day + 1) as usize;
    let mut counts = vec![0u64; span];
    let mut present = vec![false; span];
    let mut adjustments = Vec::new();
    let mut running_max: i64 = 0;
    for &(line, day, _, raw) in &rows {
        let idx = (day - first_day) as usize;
        present[idx] = true;
        let daily = match opts.mode {
            CountMode::Daily => raw,
            CountMode::Cumulative => {
                let drop = running_max - raw;
                if drop > 0 && drop as f64 > opts.correction_tolerance * running_max.max(1) as f64 {
                    return Err(Error::Parse {
                        path: path.display().to_string(),
                        line,
                        message: format!(
                            "cumulative count falls from {running_max} to {raw}, beyond tolerance"
                        ),
                    });
                }
                let d = raw - running_max;
                running_max = running_max.max(raw);
                d
            }
        };
        if daily < 0 {
            log::warn!(
                "{}:{line}: negative daily count {daily} on day {day} clamped to 0",
                path.display()
            );
            adjustments.push(Adjustment::Clamped { day, raw: daily });
        }
        counts[idx] = daily.max(0) as u64;
    }
    for (idx, p) in present.iter().enumerate() {
        if !p {
            let day = first_day + idx as i64;
            log::warn!("{}: day {day} missing, filled with 0", path.display());
            adjustments.push(Adjustment::GapFilled { day });
        }
    }
    adjustments.sort_by_key(|a| match a {
        Adjustment::GapFilled { day } | Adjustment::Clamped { day, .. } => *day,
    });
    Ok(RegionSeries {
        label: label.unwrap_or_default(),
        start_date,
        first_day,
        counts,
        adjustments,
    })
}

/// Day-resolution derivative profile with its argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedAnalysis {
    pub order: usize,
    pub delta_days: usize,
    /// `(day, Δ^(k) N)` where `day` indexes the boundary at the start of that day.
    pub profile: Vec<(i64, i64)>,
    pub argmax_day: i64,
    pub argmax_value: i64,
}

impl BinnedAnalysis {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("day,value\n");
        for (d, v) in &self.profile {
            let _ = writeln!(out, "{d},{v}");
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn summary(&self, series: &RegionSeries) -> String {
        format!(
            "argmax day={} date={} value={} k={} delta_days={}",
            self.argmax_day,
            series.day_label(self.argmax_day),
            self.argmax_value,
            self.order,
            self.delta_days
        )
    }
}

/// Evaluates `Δ^(k)` of the cumulative curve at every valid day boundary.
/// Ties in magnitude resolve to the earliest day.
pub fn analyze_binned(
    series: &RegionSeries,
    order: usize,
    delta_days: usize,
) -> Result<BinnedAnalysis> {
    if delta_days == 0 {
        return Err(Error::param("delta_days must be positive"));
    }
    let stencil = DerivativeStencil::new(order, delta_days as f64)?;
    let needed = (order + 1) * delta_days;
    if series.len() < needed {
        return Err(Error::TooShort {
            needed,
            got: series.len(),
        });
    }
    let n = series.to_binned().to_counting();
    let first = (order - 1) * delta_days;
    let last = series.len() - delta_days;
    let profile: Vec<(i64, i64)> = (first..=last)
        .map(|i| {
            let t = n.origin() + i as f64;
            (
                series.first_day + i as i64,
                stencil.apply_unchecked(&n, t) as i64,
            )
        })
        .collect();
    let (argmax_day, argmax_value) = profile
        .iter()
        .copied()
        .reduce(|best, p| if p.1.abs() > best.1.abs() { p } else { best })
        .expect("profile is non-empty when the series is long enough");
    Ok(BinnedAnalysis {
        order,
        delta_days,
        profile,
        argmax_day,
        argmax_value,
    })
}

/// Lists the distinct regions in a file, in first-seen order.
pub fn list_regions(path: &Path, region_column: &str) -> Result<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let Some(c) = headers.iter().position(|h| h.trim() == region_column) else {
        return Ok(Vec::new());
    };
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if let Some(r) = rec.get(c) {
            if seen.insert(r.to_string(), ()).is_none() {
                out.push(r.to_string());
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, body).unwrap();
        p
    }

    fn series(counts: &[u64]) -> RegionSeries {
        RegionSeries {
            label: "x".into(),
            start_date: None,
            first_day: 0,
            counts: counts.to_vec(),
            adjustments: vec![],
        }
    }

    #[test]
    fn analysis_spec_roundtrip() {
        let spec = BinnedAnalysisSpec::preset("sd-covid-style").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.toml");
        fs::write(&p, spec.to_toml()).unwrap();
        assert_eq!(BinnedAnalysisSpec::read(&p).unwrap(), spec);
        assert!(BinnedAnalysisSpec::preset("nyc").is_err());
    }

    #[test]
    fn load_daily_and_cumulative() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "d.csv",
            "date,cases\n2020-08-01,2\n2020-08-02,3\n2020-08-03,5\n",
        );
        let s = load_daily_csv(&p, &LoadOptions::default()).unwrap();
        assert_eq!(s.counts, vec![2, 3, 5]);
        assert_eq!(s.start_date, NaiveDate::from_ymd_opt(2020, 8, 1));
        assert!(!s.has_gaps());

        let p = write(
            &dir,
            "c.csv",
            "date,cases\n2020-08-01,2\n2020-08-02,5\n2020-08-03,10\n",
        );
        let opts = LoadOptions {
            mode: CountMode::Cumulative,
            ..Default::default()
        };
        assert_eq!(load_daily_csv(&p, &opts).unwrap().counts, vec![2, 3, 5]);
    }

    #[test]
    fn gaps_are_zero_filled_and_flagged() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "g.csv", "date,cases\n2020-08-01,2\n2020-08-03,5\n");
        let s = load_daily_csv(&p, &LoadOptions::default()).unwrap();
        assert_eq!(s.counts, vec![2, 0, 5]);
        assert!(s.has_gaps());
        assert_eq!(s.adjustments.len(), 1);
        assert_eq!(s.day_label(s.first_day + 1), "2020-08-02");
    }

    #[test]
    fn corrections_clamped_or_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let opts = LoadOptions {
            mode: CountMode::Cumulative,
            ..Default::default()
        };
        let p = write(&dir, "s.csv", "date,cases\n1,100\n2,98\n3,110\n");
        let s = load_daily_csv(&p, &opts).unwrap();
        assert_eq!(s.counts, vec![100, 0, 10]);
        assert!(matches!(
            s.adjustments[0],
            Adjustment::Clamped { day: 2, raw: -2 }
        ));

        let p = write(&dir, "b.csv", "date,cases\n1,100\n2,50\n");
        let err = load_daily_csv(&p, &opts).unwrap_err().to_string();
        assert!(err.contains(":3:"), "{err}");

        let p = write(&dir, "n.csv", "date,cases\n1,4\n2,-3\n");
        let s = load_daily_csv(&p, &LoadOptions::default()).unwrap();
        assert_eq!(s.counts, vec![4, 0]);
    }

    #[test]
    fn load_errors_carry_row_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "e.csv", "date,cases\n2020-01-01,1\n2020-13-45,2\n");
        let err = load_daily_csv(&p, &LoadOptions::default())
            .unwrap_err()
            .to_string();
        assert!(err.contains(":3:") && err.contains("date"), "{err}");
        let p = write(&dir, "m.csv", "day,cases\n1,1\n");
        assert!(load_daily_csv(&p, &LoadOptions::default())
            .unwrap_err()
            .to_string()
            .contains("date"));
        let p = write(&dir, "o.csv", "date,cases\n2,1\n1,1\n");
        assert!(load_daily_csv(&p, &LoadOptions::default()).is_err());
    }

    #[test]
    fn region_filter() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "r.csv",
            "date,region,cases\n1,Meade,1\n1,Lawrence,7\n2,Meade,2\n2,Lawrence,8\n",
        );
        let opts = LoadOptions {
            region: Some("Lawrence".into()),
            ..Default::default()
        };
        let s = load_daily_csv(&p, &opts).unwrap();
        assert_eq!(s.counts, vec![7, 8]);
        assert_eq!(s.label, "Lawrence");
        assert_eq!(
            list_regions(&p, "region").unwrap(),
            vec!["Meade", "Lawrence"]
        );
        let opts = LoadOptions {
            region: Some("Nowhere".into()),
            ..Default::default()
        };
        assert!(load_daily_csv(&p, &opts).is_err());
    }

    #[test]
    fn export_reload_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "d.csv",
            "region,date,cases\nA,2020-08-01,2\nA,2020-08-02,0\nA,2020-08-03,5\n",
        );
        let opts = LoadOptions {
            region: Some("A".into()),
            ..Default::default()
        };
        let s = load_daily_csv(&p, &opts).unwrap();
        let out = dir.path().join("out.csv");
        s.write_csv(&out).unwrap();
        assert_eq!(load_daily_csv(&out, &opts).unwrap(), s);
    }

    #[test]
    fn constant_counts_have_zero_higher_derivatives() {
        let s = series(&[7; 30]);
        for k in 2..=5 {
            let a = analyze_binned(&s, k, 1).unwrap();
            assert!(a.profile.iter().all(|&(_, v)| v == 0), "k={k}");
        }
        let a = analyze_binned(&s, 1, 2).unwrap();
        assert!(a.profile.iter().all(|&(_, v)| v == 14));
    }

    #[test]
    fn spike_gives_adjacent_extremes() {
        let mut c = vec![10u64; 20];
        c[8] += 6;
        let a = analyze_binned(&series(&c), 2, 1).unwrap();
        let at = |d: i64| a.profile.iter().find(|p| p.0 == d).unwrap().1;
        // boundary d sees counts[d] - counts[d-1]
        assert_eq!(at(8), 6);
        assert_eq!(at(9), -6);
        assert!(a.profile.iter().filter(|p| p.1 != 0).count() == 2);
        assert_eq!((a.argmax_day, a.argmax_value), (8, 6));
    }

    #[test]
    fn level_shift_profiles() {
        let c: Vec<u64> = (0..30).map(|i| if i < 15 { 10 } else { 25 }).collect();
        let a2 = analyze_binned(&series(&c), 2, 1).unwrap();
        let nz: Vec<_> = a2.profile.iter().filter(|p| p.1 != 0).copied().collect();
        assert_eq!(nz, vec![(15, 15)]);
        let a3 = analyze_binned(&series(&c), 3, 1).unwrap();
        let nz: Vec<_> = a3.profile.iter().filter(|p| p.1 != 0).copied().collect();
        assert_eq!(nz, vec![(15, 15), (16, -15)]);
    }

    #[test]
    fn too_short_names_minimum() {
        let err = analyze_binned(&series(&[1, 2, 3]), 3, 1).unwrap_err();
        assert!(matches!(err, Error::TooShort { needed: 4, got: 3 }));
        assert!(analyze_binned(&series(&[1; 10]), 2, 0).is_err());
    }
}
