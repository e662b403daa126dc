use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{Encoding, WaveformSpec};

/// Connects one data point to a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConnectorBinding {
    pub data_point: String,
    pub source: SourceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SourceSpec {
    CsvReplay(CsvReplaySpec),
    Modbus(ModbusSpec),
    Simulator(WaveformSpec),
}

impl SourceSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            SourceSpec::CsvReplay(_) => "csv_replay",
            SourceSpec::Modbus(_) => "modbus",
            SourceSpec::Simulator(_) => "simulator",
        }
    }

    pub fn is_live(&self) -> bool {
        !matches!(self, SourceSpec::CsvReplay(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvReplaySpec {
    /// Relative paths resolve against the package directory.
    pub path: PathBuf,
    /// 0 replays as fast as possible; k > 0 divides real gaps by k.
    #[serde(default)]
    pub speed_factor: f64,
}

fn default_scale() -> f64 {
    1.0
}

fn default_unit_id() -> u8 {
    1
}

fn default_timeout_ms() -> u64 {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModbusSpec {
    pub host: String,
    pub port: u16,
    #[serde(default = "default_unit_id")]
    pub unit_id: u8,
    pub address: u16,
    pub register_count: u16,
    pub encoding: Encoding,
    #[serde(default = "default_scale")]
    pub scale: f64,
    #[serde(default)]
    pub offset: f64,
    pub poll_period_ms: u64,
    /// Connect and response timeout.
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

impl ModbusSpec {
    pub fn new(host: impl Into<String>, port: u16, address: u16, encoding: Encoding) -> Self {
        Self {
            host: host.into(),
            port,
            unit_id: 1,
            address,
            register_count: encoding.register_count(),
            encoding,
            scale: 1.0,
            offset: 0.0,
            poll_period_ms: 1000,
            timeout_ms: default_timeout_ms(),
        }
    }
}

impl ConnectorBinding {
    /// Violated invariants, as human-readable messages.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match &self.source {
            SourceSpec::CsvReplay(c) => {
                if !(c.speed_factor >= 0.0 && c.speed_factor.is_finite()) {
                    out.push(format!("speed_factor must be a finite number >= 0, got {}", c.speed_factor));
                }
            }
            SourceSpec::Modbus(m) => {
                if m.register_count != m.encoding.register_count() {
                    out.push(format!(
                        "register_count {} does not match encoding {} ({} register(s))",
                        m.register_count,
                        m.encoding,
                        m.encoding.register_count()
                    ));
                }
                if m.poll_period_ms < 10 {
                    out.push(format!("poll_period_ms must be >= 10, got {}", m.poll_period_ms));
                }
                if m.scale == 0.0 || !m.scale.is_finite() {
                    out.push(format!("scale must be finite and non-zero, got {}", m.scale));
                }
                if !m.offset.is_finite() {
                    out.push("offset must be finite".to_string());
                }
                if m.host.is_empty() {
                    out.push("host must not be empty".to_string());
                }
                if m.timeout_ms == 0 {
                    out.push("timeout_ms must be positive".to_string());
                }
            }
            SourceSpec::Simulator(w) => out.extend(w.problems()),
        }
        out
    }
}
