use std::fmt;

use crate::ruledsl::AggregateFn;

use super::{Sample, TimeSeries, Window};

/// Why an aggregate or EnPI has no value for a window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NoData {
    /// No good sample in the window and no carried-in value.
    NoSamples { data_point: String },
    DivisionByZero,
    /// An analyzer declined to produce a value.
    Analyzer { name: String },
    UnknownAnalyzer { name: String },
    NonFinite,
}

impl fmt::Display for NoData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoData::NoSamples { data_point } => write!(f, "no good samples for `{data_point}`"),
            NoData::DivisionByZero => f.write_str("division by zero"),
            NoData::Analyzer { name } => write!(f, "analyzer `{name}` produced no value"),
            NoData::UnknownAnalyzer { name } => write!(f, "analyzer `{name}` is not registered"),
            NoData::NonFinite => f.write_str("non-finite result"),
        }
    }
}

/// Value held over `[from_ms, to_ms)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeldSegment {
    pub from_ms: i64,
    pub to_ms: i64,
    pub value: f64,
}

impl HeldSegment {
    pub fn duration_ms(&self) -> i64 {
        self.to_ms - self.from_ms
    }
}

/// Good samples of one data point under zero-order hold, clipped to a
/// window. A carried-in value occupies `[start, first sample)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldSignal {
    pub segments: Vec<HeldSegment>,
    /// Value in force just before the window, if any.
    pub baseline: Option<f64>,
}

impl HeldSignal {
    pub fn build(series: Option<&TimeSeries>, carry_in: Option<&Sample>, window: Window) -> Self {
        let mut points: Vec<(i64, f64)> = Vec::new();
        let good: Vec<&Sample> = series
            .map(|s| s.samples())
            .unwrap_or(&[])
            .iter()
            .filter(|s| s.is_good() && window.contains(s.timestamp_ms))
            .collect();
        let carry = carry_in.filter(|c| c.is_good() && c.timestamp_ms < window.start_ms);
        if let Some(c) = carry {
            if good.first().is_none_or(|s| s.timestamp_ms > window.start_ms) {
                points.push((window.start_ms, c.value));
            }
        }
        points.extend(good.iter().map(|s| (s.timestamp_ms, s.value)));
        let segments = points
            .iter()
            .enumerate()
            .map(|(i, &(t, v))| HeldSegment {
                from_ms: t,
                to_ms: points.get(i + 1).map_or(window.end_ms, |p| p.0),
                value: v,
            })
            .collect();
        Self {
            segments,
            baseline: carry.map(|c| c.value),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Value times seconds.
    pub fn integral(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.value * s.duration_ms() as f64)
            .sum::<f64>()
            / 1000.0
    }

    pub fn covered_ms(&self) -> i64 {
        self.segments.iter().map(HeldSegment::duration_ms).sum()
    }

    /// Seconds during which `pred(value)` holds.
    pub fn duration_where(&self, pred: impl Fn(f64) -> bool) -> f64 {
        let ms: i64 = self
            .segments
            .iter()
            .filter(|s| pred(s.value))
            .map(HeldSegment::duration_ms)
            .sum();
        ms as f64 / 1000.0
    }
}

/// Evaluates one built-in aggregate over `window` with zero-order hold.
///
/// `custom` is resolved by the analyzer registry, not here.
pub fn aggregate(
    func: AggregateFn,
    series: Option<&TimeSeries>,
    carry_in: Option<&Sample>,
    window: Window,
    threshold: Option<f64>,
) -> Result<f64, NoData> {
    if func == AggregateFn::WindowLength {
        return Ok(window.length_s());
    }
    let signal = HeldSignal::build(series, carry_in, window);
    if signal.is_empty() {
        return Err(NoData::NoSamples {
            data_point: series.map(|s| s.data_point().to_string()).unwrap_or_default(),
        });
    }
    let values = || signal.segments.iter().map(|s| s.value);
    let th = threshold.unwrap_or(0.0);
    let value = match func {
        AggregateFn::Mean => {
            let covered = signal.covered_ms();
            if covered == 0 {
                return Err(NoData::DivisionByZero);
            }
            signal.integral() * 1000.0 / covered as f64
        }
        AggregateFn::Min => values().fold(f64::INFINITY, f64::min),
        AggregateFn::Max => values().fold(f64::NEG_INFINITY, f64::max),
        AggregateFn::Last => values().next_back().unwrap_or(f64::NAN),
        AggregateFn::SumDelta => {
            let first = signal.baseline.or_else(|| values().next()).unwrap_or(0.0);
            let last = values().next_back().unwrap_or(first);
            (last - first).max(0.0)
        }
        AggregateFn::Integral => signal.integral(),
        AggregateFn::DurationBelow => signal.duration_where(|v| v < th),
        AggregateFn::DurationAbove => signal.duration_where(|v| v > th),
        AggregateFn::WindowLength => unreachable!("handled above"),
        AggregateFn::Custom => unreachable!("custom aggregates are resolved by the registry"),
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(NoData::NonFinite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::Quality;

    fn series(points: &[(i64, f64)]) -> TimeSeries {
        TimeSeries::new("p", points.iter().map(|&(t, v)| Sample::good(t, v)).collect()).unwrap()
    }

    fn agg(func: AggregateFn, ts: &TimeSeries, w: Window, th: Option<f64>) -> Result<f64, NoData> {
        aggregate(func, Some(ts), None, w, th)
    }

    #[test]
    fn constant_power_integral_is_one_kwh() {
        let ts = series(&[(0, 1000.0)]);
        let j = agg(AggregateFn::Integral, &ts, Window::new(0, 3_600_000), None).unwrap();
        assert_eq!(j, 3.6e6);
        assert_eq!(j / 3.6e6, 1.0);
    }

    #[test]
    fn step_signal_duration_below() {
        let ts = series(&[(0, 50.0), (100_000, 500.0)]);
        let w = Window::new(0, 200_000);
        assert_eq!(agg(AggregateFn::DurationBelow, &ts, w, Some(100.0)).unwrap(), 100.0);
        assert_eq!(agg(AggregateFn::DurationAbove, &ts, w, Some(100.0)).unwrap(), 100.0);
        assert_eq!(agg(AggregateFn::DurationBelow, &ts, w, Some(50.0)).unwrap(), 0.0);
    }

    #[test]
    fn counter_delta() {
        let ts = series(&[(0, 10.0), (1000, 12.0), (2000, 14.0)]);
        assert_eq!(agg(AggregateFn::SumDelta, &ts, Window::new(0, 3000), None).unwrap(), 4.0);
        let reset = series(&[(0, 10.0), (1000, 2.0)]);
        assert_eq!(agg(AggregateFn::SumDelta, &reset, Window::new(0, 3000), None).unwrap(), 0.0);
    }

    #[test]
    fn counter_delta_counts_from_carried_value() {
        let ts = series(&[(1000, 12.0), (2000, 14.0)]);
        let carry = Sample::good(500, 9.0);
        let v = aggregate(AggregateFn::SumDelta, Some(&ts), Some(&carry), Window::new(1000, 3000), None);
        assert_eq!(v.unwrap(), 5.0);
    }

    #[test]
    fn mean_min_max_last_are_time_weighted_where_it_matters() {
        let ts = series(&[(0, 0.0), (3000, 4.0)]);
        let w = Window::new(0, 4000);
        assert_eq!(agg(AggregateFn::Mean, &ts, w, None).unwrap(), 1.0);
        assert_eq!(agg(AggregateFn::Min, &ts, w, None).unwrap(), 0.0);
        assert_eq!(agg(AggregateFn::Max, &ts, w, None).unwrap(), 4.0);
        assert_eq!(agg(AggregateFn::Last, &ts, w, None).unwrap(), 4.0);
        assert_eq!(agg(AggregateFn::WindowLength, &ts, w, None).unwrap(), 4.0);
    }

    #[test]
    fn carry_in_fills_window_head() {
        let ts = series(&[(2000, 10.0)]);
        let carry = Sample::good(0, 4.0);
        let w = Window::new(1000, 3000);
        let v = aggregate(AggregateFn::Integral, Some(&ts), Some(&carry), w, None).unwrap();
        assert_eq!(v, 4.0 + 10.0);
        // no carry: the window head has no value
        assert_eq!(agg(AggregateFn::Integral, &ts, w, None).unwrap(), 10.0);
    }

    #[test]
    fn bad_samples_are_ignored() {
        let ts = TimeSeries::new(
            "p",
            vec![
                Sample::good(0, 1.0),
                Sample { timestamp_ms: 1000, value: 1e9, quality: Quality::Bad },
            ],
        )
        .unwrap();
        assert_eq!(agg(AggregateFn::Max, &ts, Window::new(0, 2000), None).unwrap(), 1.0);
        let only_bad = TimeSeries::new("p", vec![Sample::bad(0, 1.0)]).unwrap();
        let err = agg(AggregateFn::Mean, &only_bad, Window::new(0, 2000), None).unwrap_err();
        assert_eq!(err, NoData::NoSamples { data_point: "p".into() });
    }

    #[test]
    fn empty_window_is_no_data_but_length_is_known() {
        let err = aggregate(AggregateFn::Integral, None, None, Window::new(0, 10), None).unwrap_err();
        assert!(matches!(err, NoData::NoSamples { .. }));
        assert_eq!(aggregate(AggregateFn::WindowLength, None, None, Window::new(0, 10_000), None), Ok(10.0));
    }
}
