//! Process interface: connector bindings, CSV replay, Modbus/TCP polling,
//! simulated signals and the tumbling-window stream.

use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use crate::analytics::Sample;

mod binding;
mod codec;
mod csvio;
pub mod mock;
mod modbus;
mod replay;
mod simulator;
mod window;

pub use binding::{ConnectorBinding, CsvReplaySpec, ModbusSpec, SourceSpec};
pub use codec::{decode_register, encode_register, Encoding, WordCountMismatch};
pub use csvio::{parse_timestamp, CsvData, CsvRow};
pub use modbus::{
    backoff_floor, encode_read_request, parse_mbap, read_frame, run_modbus_poller, ModbusClient,
    ModbusError, PollerStats, BACKOFF_CAP, MIN_BACKOFF, READ_HOLDING_REGISTERS,
};
pub use replay::{replay_data, run_replay, ReplayStats};
pub use simulator::{run_simulator, Waveform, WaveformSpec};
pub use window::{batch_windows, Alignment, StreamMode, StreamStats, WindowSpec, WindowStream};

/// A decoded sample tagged with its data point.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEnvelope {
    pub data_point: String,
    pub sample: Sample,
    /// Wall-clock epoch ms at which the sample was received.
    pub received_ms: i64,
}

#[derive(Debug, thiserror::Error)]
pub enum ProcioError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {message}", path.display())]
    Csv { path: PathBuf, message: String },
}

pub fn now_ms() -> i64 {
    chrono::Utc::now().timestamp_millis()
}

/// Sleeps for `d` in short slices. Returns `false` if `stop` was raised.
pub fn sleep_unless_stopped(d: Duration, stop: &AtomicBool) -> bool {
    let deadline = Instant::now() + d;
    loop {
        if stop.load(Ordering::SeqCst) {
            return false;
        }
        let now = Instant::now();
        if now >= deadline {
            return true;
        }
        std::thread::sleep((deadline - now).min(Duration::from_millis(10)));
    }
}
