use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::analytics::{Sample, TimeSeries, Window, WindowSnapshot};

use super::SampleEnvelope;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    /// Boundaries at integer multiples of the length since the Unix epoch.
    #[default]
    Epoch,
    /// Boundaries counted from the earliest sample.
    FirstSample,
}

impl Alignment {
    pub fn as_str(self) -> &'static str {
        match self {
            Alignment::Epoch => "epoch",
            Alignment::FirstSample => "first_sample",
        }
    }
}

impl std::str::FromStr for Alignment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "epoch" => Ok(Alignment::Epoch),
            "first_sample" => Ok(Alignment::FirstSample),
            _ => Err(format!("unknown alignment `{s}` (expected epoch or first_sample)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub length_s: f64,
    #[serde(default)]
    pub alignment: Alignment,
}

impl WindowSpec {
    pub fn new(length_s: f64, alignment: Alignment) -> Self {
        Self { length_s, alignment }
    }

    /// Length rounded to whole milliseconds.
    pub fn length_ms(&self) -> i64 {
        (self.length_s * 1000.0).round() as i64
    }

    pub fn problems(&self) -> Vec<String> {
        if self.length_s.is_finite() && self.length_s > 0.0 && self.length_ms() >= 1 {
            Vec::new()
        } else {
            vec![format!("length_s must be positive, got {}", self.length_s)]
        }
    }

    /// The window containing `t` for boundaries counted from `origin`.
    pub fn window_containing(&self, origin: i64, t: i64) -> Window {
        let len = self.length_ms();
        let start = origin + (t - origin).div_euclid(len) * len;
        Window::new(start, start + len)
    }

    fn origin_for(&self, first_timestamp: i64) -> i64 {
        match self.alignment {
            Alignment::Epoch => 0,
            Alignment::FirstSample => first_timestamp,
        }
    }
}

/// Slices complete histories into consecutive windows, from the window
/// holding the earliest sample through the one holding the latest.
/// Windows without samples in between are included.
pub fn batch_windows(histories: &BTreeMap<String, TimeSeries>, spec: &WindowSpec) -> Vec<WindowSnapshot> {
    let first = histories.values().filter_map(TimeSeries::first_timestamp).min();
    let last = histories.values().filter_map(TimeSeries::last_timestamp).max();
    let (Some(first), Some(last)) = (first, last) else {
        return Vec::new();
    };
    let origin = spec.origin_for(first);
    let mut w = spec.window_containing(origin, first);
    let mut out = Vec::new();
    while w.start_ms <= last {
        out.push(WindowSnapshot::from_history(histories, w));
        w = Window::new(w.end_ms, w.end_ms + spec.length_ms());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamMode {
    /// Windows close only on data; the stream starts once every source has
    /// delivered a sample or finished.
    Replay,
    /// Windows also close after a wall-clock grace of length/4; the stream
    /// starts on the first sample.
    Live,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct SourceState {
    first: Option<i64>,
    reached: Option<i64>,
    finished: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StreamStats {
    pub received: usize,
    /// Samples behind an already closed window.
    pub dropped_late: usize,
    /// Repeated timestamps within a window; the first arrival is kept.
    pub duplicates: usize,
    /// Samples from data points the stream was not built for.
    pub unknown_source: usize,
}

/// Tumbling-window assembler turning a sample stream into immutable
/// snapshots. A window closes once every source has delivered a sample at
/// or past its end (or finished), or, in live mode, when its grace expires.
#[derive(Debug, Clone)]
pub struct WindowStream {
    spec: WindowSpec,
    mode: StreamMode,
    sources: BTreeMap<String, SourceState>,
    current: Option<Window>,
    pending: BTreeMap<String, Vec<Sample>>,
    carry: BTreeMap<String, Sample>,
    max_ts: Option<i64>,
    stats: StreamStats,
}

impl WindowStream {
    pub fn new(spec: WindowSpec, mode: StreamMode, sources: &BTreeSet<String>) -> Self {
        Self {
            spec,
            mode,
            sources: sources.iter().map(|s| (s.clone(), SourceState::default())).collect(),
            current: None,
            pending: BTreeMap::new(),
            carry: BTreeMap::new(),
            max_ts: None,
            stats: StreamStats::default(),
        }
    }

    pub fn stats(&self) -> &StreamStats {
        &self.stats
    }

    pub fn current_window(&self) -> Option<Window> {
        self.current
    }

    pub fn grace_ms(&self) -> i64 {
        self.spec.length_ms() / 4
    }

    pub fn push(&mut self, envelope: SampleEnvelope) -> Vec<WindowSnapshot> {
        self.stats.received += 1;
        let t = envelope.sample.timestamp_ms;
        let Some(src) = self.sources.get_mut(&envelope.data_point) else {
            self.stats.unknown_source += 1;
            return Vec::new();
        };
        src.first.get_or_insert(t);
        src.reached = Some(src.reached.map_or(t, |r| r.max(t)));
        if self.current.is_some_and(|w| t < w.start_ms) || t < 0 {
            self.stats.dropped_late += 1;
            return Vec::new();
        }
        self.pending.entry(envelope.data_point).or_default().push(envelope.sample);
        self.max_ts = Some(self.max_ts.map_or(t, |m| m.max(t)));
        self.try_start();
        self.advance()
    }

    pub fn push_all(&mut self, envelopes: impl IntoIterator<Item = SampleEnvelope>) -> Vec<WindowSnapshot> {
        envelopes.into_iter().flat_map(|e| self.push(e)).collect()
    }

    /// Marks a source as exhausted; once all are, remaining windows close.
    pub fn finish_source(&mut self, data_point: &str) -> Vec<WindowSnapshot> {
        if let Some(s) = self.sources.get_mut(data_point) {
            s.finished = true;
        }
        self.try_start();
        self.advance()
    }

    pub fn finish_all(&mut self) -> Vec<WindowSnapshot> {
        let names: Vec<String> = self.sources.keys().cloned().collect();
        names.iter().flat_map(|n| self.finish_source(n)).collect()
    }

    /// Live mode: closes windows whose grace period has expired at `now_ms`.
    pub fn tick(&mut self, now_ms: i64) -> Vec<WindowSnapshot> {
        let mut out = self.advance();
        if self.mode != StreamMode::Live {
            return out;
        }
        while let Some(w) = self.current {
            if now_ms < w.end_ms + self.grace_ms() {
                break;
            }
            out.push(self.close(false));
        }
        out
    }

    /// Emits the open window as partial (shutdown).
    pub fn flush(&mut self) -> Option<WindowSnapshot> {
        self.current?;
        let snap = self.close(true);
        self.current = None;
        Some(snap)
    }

    fn try_start(&mut self) {
        if self.current.is_some() {
            return;
        }
        let ready = match self.mode {
            StreamMode::Live => true,
            StreamMode::Replay => self.sources.values().all(|s| s.first.is_some() || s.finished),
        };
        if !ready {
            return;
        }
        let Some(first) = self.pending.values().flatten().map(|s| s.timestamp_ms).min() else {
            return;
        };
        let origin = self.spec.origin_for(first);
        self.current = Some(self.spec.window_containing(origin, first));
    }

    fn advance(&mut self) -> Vec<WindowSnapshot> {
        let mut out = Vec::new();
        while let Some(w) = self.current {
            let all_finished = self.sources.values().all(|s| s.finished);
            let close = if all_finished {
                self.max_ts.is_some_and(|m| w.start_ms <= m)
            } else {
                self.sources
                    .values()
                    .all(|s| s.finished || s.reached.is_some_and(|r| r >= w.end_ms))
            };
            if !close {
                break;
            }
            out.push(self.close(false));
        }
        out
    }

    fn close(&mut self, partial: bool) -> WindowSnapshot {
        let w = self.current.expect("open window");
        let mut snap = WindowSnapshot::new(w);
        snap.partial = partial;
        snap.carry_in = self.carry.clone();
        for (dp, buf) in self.pending.iter_mut() {
            let (inside, later): (Vec<Sample>, Vec<Sample>) = buf.drain(..).partition(|s| s.timestamp_ms < w.end_ms);
            *buf = later;
            if inside.is_empty() {
                continue;
            }
            let (ts, dups) = TimeSeries::from_unordered(dp.clone(), inside);
            self.stats.duplicates += dups;
            if let Some(last) = ts.last_good() {
                self.carry.insert(dp.clone(), last);
            }
            snap.series.insert(dp.clone(), ts);
        }
        self.pending.retain(|_, b| !b.is_empty());
        self.current = Some(Window::new(w.end_ms, w.end_ms + self.spec.length_ms()));
        snap
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(dp: &str, t_s: i64) -> SampleEnvelope {
        SampleEnvelope {
            data_point: dp.into(),
            sample: Sample::good(t_s * 1000, t_s as f64),
            received_ms: 0,
        }
    }

    fn sources(names: &[&str]) -> BTreeSet<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn boundary_arithmetic() {
        let spec = WindowSpec::new(60.0, Alignment::Epoch);
        let mut ws = WindowStream::new(spec, StreamMode::Replay, &sources(&["p"]));
        let mut out = ws.push_all([env("p", 10), env("p", 70), env("p", 130)]);
        out.extend(ws.finish_all());
        let bounds: Vec<(i64, i64)> = out.iter().map(|s| (s.window.start_ms, s.window.end_ms)).collect();
        assert_eq!(bounds, vec![(0, 60_000), (60_000, 120_000), (120_000, 180_000)]);
        assert!(out.iter().all(|s| s.sample_count() == 1));
    }

    #[test]
    fn sample_on_boundary_opens_next_window() {
        let spec = WindowSpec::new(60.0, Alignment::Epoch);
        let mut ws = WindowStream::new(spec, StreamMode::Replay, &sources(&["p"]));
        let first = ws.push_all([env("p", 0), env("p", 60)]);
        assert_eq!(first.len(), 1);
        assert_eq!(first[0].sample_count(), 1);
        let rest = ws.finish_all();
        assert_eq!(rest[0].window.start_ms, 60_000);
        assert_eq!(rest[0].series("p").unwrap().samples()[0].timestamp_ms, 60_000);
        assert_eq!(rest[0].carry("p"), Some(&Sample::good(0, 0.0)));
    }

    #[test]
    fn waits_for_every_source() {
        let spec = WindowSpec::new(10.0, Alignment::Epoch);
        let mut ws = WindowStream::new(spec, StreamMode::Replay, &sources(&["a", "b"]));
        assert!(ws.push_all([env("a", 1), env("a", 25)]).is_empty());
        let out = ws.push(env("b", 12));
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].window, Window::new(0, 10_000));
        let out = ws.finish_all();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn late_samples_dropped() {
        let spec = WindowSpec::new(10.0, Alignment::Epoch);
        let mut ws = WindowStream::new(spec, StreamMode::Replay, &sources(&["a"]));
        ws.push_all([env("a", 1), env("a", 12)]);
        assert!(ws.push(env("a", 5)).is_empty());
        assert_eq!(ws.stats().dropped_late, 1);
    }

    #[test]
    fn first_sample_alignment() {
        let spec = WindowSpec::new(10.0, Alignment::FirstSample);
        let mut ws = WindowStream::new(spec, StreamMode::Replay, &sources(&["a"]));
        let mut out = ws.push_all([env("a", 3), env("a", 14)]);
        out.extend(ws.finish_all());
        assert_eq!(out.iter().map(|s| s.window).collect::<Vec<_>>(), vec![
            Window::new(3000, 13_000),
            Window::new(13_000, 23_000)
        ]);
    }

    #[test]
    fn live_grace_and_partial_flush() {
        let spec = WindowSpec::new(10.0, Alignment::Epoch);
        let mut ws = WindowStream::new(spec, StreamMode::Live, &sources(&["a", "b"]));
        assert!(ws.push(env("a", 1)).is_empty());
        assert!(ws.tick(12_000).is_empty());
        let closed = ws.tick(12_500);
        assert_eq!(closed.len(), 1);
        assert!(!closed[0].partial);
        ws.push(env("a", 13));
        let last = ws.flush().unwrap();
        assert!(last.partial);
        assert_eq!(last.window, Window::new(10_000, 20_000));
        assert_eq!(last.sample_count(), 1);
        assert!(ws.flush().is_none());
    }

    #[test]
    fn batch_matches_stream_on_gappy_input() {
        let spec = WindowSpec::new(10.0, Alignment::Epoch);
        let samples = [env("a", 2), env("b", 3), env("a", 45), env("b", 47), env("b", 47)];
        let mut hist: BTreeMap<String, Vec<Sample>> = BTreeMap::new();
        for e in &samples {
            hist.entry(e.data_point.clone()).or_default().push(e.sample);
        }
        let hist: BTreeMap<String, TimeSeries> = hist
            .into_iter()
            .map(|(k, v)| (k.clone(), TimeSeries::from_unordered(k, v).0))
            .collect();
        let batch = batch_windows(&hist, &spec);
        let mut ws = WindowStream::new(spec, StreamMode::Replay, &sources(&["a", "b"]));
        let mut stream = ws.push_all(samples.clone());
        stream.extend(ws.finish_all());
        assert_eq!(batch.len(), 5);
        assert_eq!(stream, batch);
    }
}
