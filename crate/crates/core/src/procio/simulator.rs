use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::analytics::Sample;

use super::{now_ms, sleep_unless_stopped, SampleEnvelope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    Constant,
    Sine,
    Square,
    Sawtooth,
}

fn default_sample_period_ms() -> u64 {
    1000
}

fn default_duty() -> f64 {
    0.5
}

/// Synthetic signal `offset + amplitude * shape(t / period)`, sampled on the
/// wall clock. Phase is measured from the Unix epoch so values depend only
/// on the timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveformSpec {
    pub waveform: Waveform,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub period_s: f64,
    /// Fraction of the period a square wave spends high.
    #[serde(default = "default_duty")]
    pub duty: f64,
    #[serde(default = "default_sample_period_ms")]
    pub sample_period_ms: u64,
}

impl WaveformSpec {
    pub fn constant(value: f64) -> Self {
        Self {
            waveform: Waveform::Constant,
            amplitude: 0.0,
            offset: value,
            period_s: 0.0,
            duty: default_duty(),
            sample_period_ms: default_sample_period_ms(),
        }
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.waveform != Waveform::Constant && !(self.period_s > 0.0 && self.period_s.is_finite()) {
            out.push(format!("period_s must be positive, got {}", self.period_s));
        }
        if !(0.0..=1.0).contains(&self.duty) {
            out.push(format!("duty must be in [0, 1], got {}", self.duty));
        }
        if self.sample_period_ms < 10 {
            out.push(format!("sample_period_ms must be >= 10, got {}", self.sample_period_ms));
        }
        if !self.amplitude.is_finite() || !self.offset.is_finite() {
            out.push("amplitude and offset must be finite".to_string());
        }
        out
    }

    pub fn value_at(&self, timestamp_ms: i64) -> f64 {
        let phase = if self.period_s > 0.0 {
            (timestamp_ms as f64 / 1000.0 / self.period_s).rem_euclid(1.0)
        } else {
            0.0
        };
        let shape = match self.waveform {
            Waveform::Constant => 0.0,
            Waveform::Sine => (phase * std::f64::consts::TAU).sin(),
            Waveform::Square => {
                if phase < self.duty {
                    1.0
                } else {
                    0.0
                }
            }
            Waveform::Sawtooth => phase,
        };
        self.offset + self.amplitude * shape
    }
}

/// Emits one sample per `sample_period_ms` until `stop` is set.
pub fn run_simulator(
    data_point: &str,
    spec: &WaveformSpec,
    stop: &AtomicBool,
    mut sink: impl FnMut(SampleEnvelope),
) -> u64 {
    let period = Duration::from_millis(spec.sample_period_ms.max(1));
    let mut emitted = 0;
    while !stop.load(Ordering::SeqCst) {
        let t = now_ms();
        sink(SampleEnvelope {
            data_point: data_point.to_string(),
            sample: Sample::good(t, spec.value_at(t)),
            received_ms: t,
        });
        emitted += 1;
        sleep_unless_stopped(period, stop);
    }
    emitted
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let mut s = WaveformSpec::constant(5.0);
        assert_eq!(s.value_at(123_456), 5.0);
        s.waveform = Waveform::Square;
        s.amplitude = 10.0;
        s.period_s = 10.0;
        assert_eq!(s.value_at(1000), 15.0);
        assert_eq!(s.value_at(6000), 5.0);
        s.waveform = Waveform::Sawtooth;
        assert_eq!(s.value_at(12_500), 7.5);
        s.waveform = Waveform::Sine;
        assert!((s.value_at(2500) - 15.0).abs() < 1e-12);
        assert!(s.problems().is_empty());
    }
}
