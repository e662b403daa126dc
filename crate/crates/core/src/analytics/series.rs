use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    #[default]
    Good,
    Bad,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Epoch milliseconds, UTC.
    pub timestamp_ms: i64,
    pub value: f64,
    #[serde(default)]
    pub quality: Quality,
}

impl Sample {
    pub fn good(timestamp_ms: i64, value: f64) -> Self {
        Self {
            timestamp_ms,
            value,
            quality: Quality::Good,
        }
    }

    pub fn bad(timestamp_ms: i64, value: f64) -> Self {
        Self {
            timestamp_ms,
            value,
            quality: Quality::Bad,
        }
    }

    pub fn is_good(&self) -> bool {
        self.quality == Quality::Good && self.value.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SeriesError {
    #[error("series `{data_point}`: timestamp {timestamp_ms} is not after its predecessor")]
    Unordered { data_point: String, timestamp_ms: i64 },
    #[error("series `{data_point}`: negative timestamp {timestamp_ms}")]
    NegativeTimestamp { data_point: String, timestamp_ms: i64 },
}

/// Samples of one data point, strictly ascending by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    data_point: String,
    samples: Vec<Sample>,
}

impl TimeSeries {
    pub fn new(data_point: impl Into<String>, samples: Vec<Sample>) -> Result<Self, SeriesError> {
        let data_point = data_point.into();
        for (i, s) in samples.iter().enumerate() {
            if s.timestamp_ms < 0 {
                return Err(SeriesError::NegativeTimestamp {
                    data_point,
                    timestamp_ms: s.timestamp_ms,
                });
            }
            if i > 0 && samples[i - 1].timestamp_ms >= s.timestamp_ms {
                return Err(SeriesError::Unordered {
                    data_point,
                    timestamp_ms: s.timestamp_ms,
                });
            }
        }
        Ok(Self {
            data_point,
            samples,
        })
    }

    /// Stable-sorts by timestamp and keeps the first sample of each
    /// timestamp; negative timestamps are discarded. Returns the series and
    /// the number of samples dropped.
    pub fn from_unordered(data_point: impl Into<String>, mut samples: Vec<Sample>) -> (Self, usize) {
        let before = samples.len();
        samples.retain(|s| s.timestamp_ms >= 0);
        samples.sort_by_key(|s| s.timestamp_ms);
        samples.dedup_by_key(|s| s.timestamp_ms);
        let dropped = before - samples.len();
        (
            Self {
                data_point: data_point.into(),
                samples,
            },
            dropped,
        )
    }

    pub fn data_point(&self) -> &str {
        &self.data_point
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn first_timestamp(&self) -> Option<i64> {
        self.samples.first().map(|s| s.timestamp_ms)
    }

    pub fn last_timestamp(&self) -> Option<i64> {
        self.samples.last().map(|s| s.timestamp_ms)
    }

    /// Samples with `start <= t < end`.
    pub fn slice(&self, window: Window) -> TimeSeries {
        let lo = self.samples.partition_point(|s| s.timestamp_ms < window.start_ms);
        let hi = self.samples.partition_point(|s| s.timestamp_ms < window.end_ms);
        TimeSeries {
            data_point: self.data_point.clone(),
            samples: self.samples[lo..hi].to_vec(),
        }
    }

    /// Last good sample strictly before `t`.
    pub fn last_good_before(&self, t: i64) -> Option<Sample> {
        let idx = self.samples.partition_point(|s| s.timestamp_ms < t);
        self.samples[..idx].iter().rev().find(|s| s.is_good()).copied()
    }

    pub fn last_good(&self) -> Option<Sample> {
        self.samples.iter().rev().find(|s| s.is_good()).copied()
    }

    pub fn bad_count(&self) -> usize {
        self.samples.iter().filter(|s| !s.is_good()).count()
    }
}

/// Half-open interval `[start_ms, end_ms)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Window {
    pub start_ms: i64,
    pub end_ms: i64,
}

impl Window {
    pub fn new(start_ms: i64, end_ms: i64) -> Self {
        Self { start_ms, end_ms }
    }

    pub fn length_ms(&self) -> i64 {
        self.end_ms - self.start_ms
    }

    pub fn length_s(&self) -> f64 {
        self.length_ms() as f64 / 1000.0
    }

    pub fn contains(&self, t: i64) -> bool {
        t >= self.start_ms && t < self.end_ms
    }
}

/// Immutable view of all data points over one window.
///
/// `series` holds only in-window samples. `carry_in` holds, per data point,
/// the last good sample before the window; it supplies the held value at
/// `start` under zero-order hold.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSnapshot {
    pub window: Window,
    pub series: BTreeMap<String, TimeSeries>,
    pub carry_in: BTreeMap<String, Sample>,
    /// Closed early (shutdown) rather than by data or timeout.
    pub partial: bool,
}

impl WindowSnapshot {
    pub fn new(window: Window) -> Self {
        Self {
            window,
            series: BTreeMap::new(),
            carry_in: BTreeMap::new(),
            partial: false,
        }
    }

    /// Slices complete per-point histories down to `window`.
    pub fn from_history(history: &BTreeMap<String, TimeSeries>, window: Window) -> Self {
        let mut snap = Self::new(window);
        for (dp, ts) in history {
            let slice = ts.slice(window);
            if !slice.is_empty() {
                snap.series.insert(dp.clone(), slice);
            }
            if let Some(c) = ts.last_good_before(window.start_ms) {
                snap.carry_in.insert(dp.clone(), c);
            }
        }
        snap
    }

    pub fn series(&self, data_point: &str) -> Option<&TimeSeries> {
        self.series.get(data_point)
    }

    pub fn carry(&self, data_point: &str) -> Option<&Sample> {
        self.carry_in.get(data_point)
    }

    pub fn bad_samples(&self, data_point: &str) -> usize {
        self.series(data_point).map_or(0, TimeSeries::bad_count)
    }

    pub fn sample_count(&self) -> usize {
        self.series.values().map(TimeSeries::len).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strict_ordering_enforced() {
        assert!(TimeSeries::new("p", vec![Sample::good(0, 1.0), Sample::good(0, 2.0)]).is_err());
        assert!(TimeSeries::new("p", vec![Sample::good(-1, 1.0)]).is_err());
        assert!(TimeSeries::new("p", vec![Sample::good(0, 1.0), Sample::good(1, 2.0)]).is_ok());
    }

    #[test]
    fn unordered_input_sorted_first_duplicate_kept() {
        let (ts, dropped) = TimeSeries::from_unordered(
            "p",
            vec![Sample::good(20, 2.0), Sample::good(10, 1.0), Sample::good(20, 3.0)],
        );
        assert_eq!(dropped, 1);
        assert_eq!(ts.samples(), &[Sample::good(10, 1.0), Sample::good(20, 2.0)]);
    }

    #[test]
    fn half_open_slice() {
        let ts = TimeSeries::new("p", (0..5).map(|i| Sample::good(i * 10, i as f64)).collect()).unwrap();
        let s = ts.slice(Window::new(10, 30));
        assert_eq!(s.samples().iter().map(|s| s.timestamp_ms).collect::<Vec<_>>(), vec![10, 20]);
    }

    #[test]
    fn carry_skips_bad_samples() {
        let ts = TimeSeries::new("p", vec![Sample::good(0, 1.0), Sample::bad(5, 9.0), Sample::good(10, 2.0)]).unwrap();
        assert_eq!(ts.last_good_before(10), Some(Sample::good(0, 1.0)));
        assert_eq!(ts.last_good_before(0), None);
    }
}
