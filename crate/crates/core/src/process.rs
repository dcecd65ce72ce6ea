//! Observed point-process data: raw event times, the counting function
//! `N(t)`, and binned count series.
//!
//! `N(t)` counts events at times `<= t` (right-closed). Discrete-derivative
//! values evaluated exactly at an event time depend on this convention.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Relative slack used when snapping query times onto bin edges.
const EDGE_EPS: f64 = 1e-9;

/// A cumulative counting function observed on `[origin, horizon]`.
pub trait CountingFunction {
    /// Value of the counting function at `t`.
    fn count(&self, t: f64) -> f64;

    /// End of the observation window.
    fn horizon(&self) -> f64;

    /// Start of the observation window.
    fn origin(&self) -> f64 {
        0.0
    }
}

impl<C: CountingFunction + ?Sized> CountingFunction for &C {
    fn count(&self, t: f64) -> f64 {
        (**self).count(t)
    }
    fn horizon(&self) -> f64 {
        (**self).horizon()
    }
    fn origin(&self) -> f64 {
        (**self).origin()
    }
}

/// Sorted event timestamps of one sample path, observed on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTimes {
    times: Vec<f64>,
    horizon: f64,
}

impl EventTimes {
    /// Builds from already-sorted times. Duplicates are allowed.
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self> {
        if !horizon.is_finite() || horizon < 0.0 {
            return Err(Error::param(format!(
                "horizon must be finite and non-negative, got {horizon}"
            )));
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 || t > horizon {
                return Err(Error::InvalidData(format!(
                    "event {i} at {t} lies outside [0, {horizon}]"
                )));
            }
            if i > 0 && times[i - 1] > t {
                return Err(Error::InvalidData(format!(
                    "event times not sorted at index {i} ({} > {t})",
                    times[i - 1]
                )));
            }
        }
        Ok(Self { times, horizon })
    }

    /// Sorts `times` before validating.
    pub fn from_unsorted(mut times: Vec<f64>, horizon: f64) -> Result<Self> {
        if times.iter().any(|t| t.is_nan()) {
            return Err(Error::InvalidData("NaN event time".into()));
        }
        times.sort_by(f64::total_cmp);
        Self::new(times, horizon)
    }

    pub(crate) fn from_sorted_unchecked(times: Vec<f64>, horizon: f64) -> Self {
        debug_assert!(times.windows(2).all(|w| w[0] <= w[1]));
        Self { times, horizon }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of events at or before `t`. O(log n).
    pub fn count_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t)
    }

    /// Shifts every event and the horizon by `c`, which must keep all times non-negative.
    pub fn shifted(&self, c: f64) -> Result<Self> {
        Self::new(self.times.iter().map(|t| t + c).collect(), self.horizon + c)
    }

    /// Counts events into `nbins` bins of width `bin_width` starting at `start`.
    /// Events outside the binned range are dropped; an event exactly on an
    /// interior edge goes to the later bin (bins are half-open).
    pub fn bin(&self, start: f64, bin_width: f64, nbins: usize) -> Result<BinnedSeries> {
        let mut counts = vec![0u64; nbins];
        for &t in &self.times {
            let x = (t - start) / bin_width;
            if x < 0.0 {
                continue;
            }
            let i = x.floor() as usize;
            if i < nbins {
                counts[i] += 1;
            }
        }
        BinnedSeries::new(start, bin_width, counts)
    }

    /// Reads one timestamp per line; blank lines and `#` comments are skipped.
    /// Without an explicit horizon, a `# horizon=<T>` comment is honoured,
    /// falling back to the last event time.
    pub fn read(path: &Path, horizon: Option<f64>) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut times = Vec::new();
        let mut declared = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("horizon=") {
                    declared = v.trim().parse::<f64>().ok();
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let t: f64 = line.parse().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                message: format!("not a timestamp: {line:?}"),
            })?;
            times.push(t);
        }
        let horizon = horizon
            .or(declared)
            .unwrap_or_else(|| times.iter().copied().fold(0.0, f64::max));
        Self::new(times, horizon)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::with_capacity(self.times.len() * 20 + 32);
        out.push_str(&format!("# horizon={}\n", self.horizon));
        for t in &self.times {
            out.push_str(&format!("{t}\n"));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

impl CountingFunction for EventTimes {
    fn count(&self, t: f64) -> f64 {
        self.count_at(t) as f64
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Event counts aggregated into contiguous, equal-width bins.
///
/// `counts[i]` is the number of events in
/// `[start_time + i*bin_width, start_time + (i+1)*bin_width)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedSeries {
    start_time: f64,
    bin_width: f64,
    counts: Vec<u64>,
}

impl BinnedSeries {
    pub fn new(start_time: f64, bin_width: f64, counts: Vec<u64>) -> Result<Self> {
        if !(bin_width > 0.0) || !bin_width.is_finite() {
            return Err(Error::param(format!(
                "bin width must be positive, got {bin_width}"
            )));
        }
        if !start_time.is_finite() {
            return Err(Error::param("bin start time must be finite"));
        }
        Ok(Self {
            start_time,
            bin_width,
            counts,
        })
    }

    /// Accepts signed counts, rejecting any negative entry.
    pub fn from_signed(start_time: f64, bin_width: f64, counts: &[i64]) -> Result<Self> {
        let counts = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                u64::try_from(c)
                    .map_err(|_| Error::InvalidData(format!("bin {i} has negative count {c}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(start_time, bin_width, counts)
    }

    pub fn start_time(&self) -> f64 {
        self.start_time
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// End of the last bin.
    pub fn end_time(&self) -> f64 {
        self.start_time + self.counts.len() as f64 * self.bin_width
    }

    /// Prefix sums of the counts.
    pub fn cumulative(&self) -> Vec<u64> {
        self.counts
            .iter()
            .scan(0u64, |acc, &c| {
                *acc += c;
                Some(*acc)
            })
            .collect()
    }

    /// Step counting function with every bin's events attributed to its right edge.
    pub fn to_counting(&self) -> BinnedCounting {
        BinnedCounting {
            start_time: self.start_time,
            bin_width: self.bin_width,
            cumulative: self.cumulative(),
        }
    }

    /// Reads a CSV with header `bin_start,count`. Bins must be contiguous and uniform.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Parse {
                    path: path.display().to_string(),
                    line: 1,
                    message: format!("missing column `{name}`"),
                })
        };
        let (start_col, count_col) = (col("bin_start")?, col("count")?);
        let mut starts = Vec::new();
        let mut counts = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let bad = |message: String| Error::Parse {
                path: path.display().to_string(),
                line,
                message,
            };
            let s: f64 = rec[start_col]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad bin_start {:?}", &rec[start_col])))?;
            let c: i64 = rec[count_col]
                .trim()
                .parse()
                .map_err(|_| bad(format!("bad count {:?}", &rec[count_col])))?;
            if c < 0 {
                return Err(bad(format!("negative count {c}")));
            }
            starts.push(s);
            counts.push(c as u64);
        }
        if starts.len() < 2 {
            return Err(Error::InvalidData(format!(
                "{}: need at least two bins to infer the bin width",
                path.display()
            )));
        }
        let width = starts[1] - starts[0];
        if !(width > 0.0) {
            return Err(Error::InvalidData(format!(
                "{}: bin starts must be increasing",
                path.display()
            )));
        }
        for (i, pair) in starts.windows(2).enumerate() {
            let w = pair[1] - pair[0];
            if (w - width).abs() > 1e-6 * width.max(1.0) {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 3,
                    message: format!("bins not contiguous/uniform: width {w} vs {width}"),
                });
            }
        }
        Self::new(starts[0], width, counts)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = String::from("bin_start,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!(
                "{},{c}\n",
                self.start_time + i as f64 * self.bin_width
            ));
        }
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Counting function built from a [`BinnedSeries`]; constant between bin edges.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCounting {
    start_time: f64,
    bin_width: f64,
    cumulative: Vec<u64>,
}

impl BinnedCounting {
    /// Number of bins whose right edge is at or before `t`.
    fn complete_bins(&self, t: f64) -> usize {
        let x = (t - self.start_time) / self.bin_width;
        if x < 1.0 - EDGE_EPS {
            return 0;
        }
        ((x + EDGE_EPS).floor() as usize).min(self.cumulative.len())
    }

    pub fn count_at(&self, t: f64) -> u64 {
        match self.complete_bins(t) {
            0 => 0,
            m => self.cumulative[m - 1],
        }
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }
}

impl CountingFunction for BinnedCounting {
    fn count(&self, t: f64) -> f64 {
        self.count_at(t) as f64
    }

    fn horizon(&self) -> f64 {
        self.start_time + self.cumulative.len() as f64 * self.bin_width
    }

    fn origin(&self) -> f64 {
        self.start_time
    }
}

/// Adapts a plain function of time to [`CountingFunction`] with an unbounded window.
/// Used to apply stencils to smooth test functions.
pub struct SampledFunction<F>(pub F);

impl<F: Fn(f64) -> f64> CountingFunction for SampledFunction<F> {
    fn count(&self, t: f64) -> f64 {
        (self.0)(t)
    }
    fn horizon(&self) -> f64 {
        f64::INFINITY
    }
    fn origin(&self) -> f64 {
        f64::NEG_INFINITY
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(times: &[f64], horizon: f64) -> EventTimes {
        EventTimes::new(times.to_vec(), horizon).unwrap()
    }

    #[test]
    fn count_at_examples() {
        assert_eq!(ev(&[], 10.0).count_at(5.0), 0);
        let e = ev(&[1.0, 2.0, 3.0], 4.0);
        assert_eq!(e.count_at(2.5), 2);
        assert_eq!(e.count_at(3.0), 3);
        assert_eq!(e.count_at(0.5), 0);
        assert_eq!(e.count_at(-1.0), 0);
        assert_eq!(e.count_at(100.0), 3);
        assert_eq!(e.count_at(e.horizon()), e.len());
    }

    #[test]
    fn rejects_unsorted_and_out_of_window() {
        assert!(EventTimes::new(vec![2.0, 1.0], 3.0).is_err());
        assert!(EventTimes::new(vec![1.0, 4.0], 3.0).is_err());
        assert!(EventTimes::new(vec![-0.1], 3.0).is_err());
        assert!(EventTimes::new(vec![1.0, 1.0], 3.0).is_ok());
        let e = EventTimes::from_unsorted(vec![3.0, 1.0, 2.0], 3.0).unwrap();
        assert_eq!(e.times(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn cumulative_examples() {
        let s = |c: &[u64]| {
            BinnedSeries::new(0.0, 1.0, c.to_vec())
                .unwrap()
                .cumulative()
        };
        assert_eq!(s(&[1, 1, 1]), vec![1, 2, 3]);
        assert_eq!(s(&[]), Vec::<u64>::new());
        assert_eq!(s(&[0, 4, 0, 2]), vec![0, 4, 4, 6]);
    }

    #[test]
    fn from_binned_examples() {
        let n = BinnedSeries::new(0.0, 1.0, vec![0, 0, 0])
            .unwrap()
            .to_counting();
        for t in [-1.0, 0.0, 0.5, 1.0, 2.5, 3.0, 9.0] {
            assert_eq!(n.count_at(t), 0);
        }
        let n = BinnedSeries::new(0.0, 1.0, vec![2, 3])
            .unwrap()
            .to_counting();
        assert_eq!(n.count_at(1.0), 2);
        assert_eq!(n.count_at(2.0), 5);
        assert_eq!(n.count_at(1.5), 2);
        let n = BinnedSeries::new(0.0, 1.0, vec![5]).unwrap().to_counting();
        assert_eq!(n.count_at(0.5), 0);
        assert_eq!(n.count_at(1.0), 5);
    }

    #[test]
    fn negative_counts_rejected() {
        let err = BinnedSeries::from_signed(0.0, 1.0, &[1, -2, 3]).unwrap_err();
        assert!(err.to_string().contains("bin 1"), "{err}");
    }

    #[test]
    fn binning_agrees_with_count_at_on_right_edges() {
        let e = ev(&[0.1, 0.5, 0.5, 1.2, 2.9, 3.0, 3.7], 4.0);
        let b = e.bin(0.0, 0.5, 8).unwrap();
        let n = b.to_counting();
        for i in 1..=8 {
            let edge = i as f64 * 0.5;
            // right-closed N vs half-open bins only disagree for events exactly on an edge
            let events_before_edge = e.times().iter().filter(|&&t| t < edge).count() as u64;
            assert_eq!(n.count_at(edge), events_before_edge, "edge {edge}");
        }
    }

    #[test]
    fn binned_csv_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let s = BinnedSeries::new(2.0, 0.5, vec![3, 0, 7]).unwrap();
        s.write_csv(&p).unwrap();
        assert_eq!(BinnedSeries::read_csv(&p).unwrap(), s);

        fs::write(&p, "bin_start,count\n0,1\n1,2\n3,4\n").unwrap();
        let err = BinnedSeries::read_csv(&p).unwrap_err().to_string();
        assert!(err.contains("contiguous"), "{err}");
        fs::write(&p, "bin_start,count\n0,1\n1,-2\n").unwrap();
        assert!(BinnedSeries::read_csv(&p).is_err());
    }

    #[test]
    fn event_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.txt");
        fs::write(&p, "# comment\n0.5\n\n1.25\n# another\n3\n").unwrap();
        let e = EventTimes::read(&p, Some(4.0)).unwrap();
        assert_eq!(e.times(), &[0.5, 1.25, 3.0]);
        e.write(&p).unwrap();
        assert_eq!(EventTimes::read(&p, Some(4.0)).unwrap(), e);
        fs::write(&p, "1.0\nabc\n").unwrap();
        let err = EventTimes::read(&p, None).unwrap_err().to_string();
        assert!(err.contains(":2:"), "{err}");
    }
}
