use std::collections::BTreeSet;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use super::{now_ms, sleep_unless_stopped, CsvData, ProcioError, SampleEnvelope};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayStats {
    pub emitted: usize,
    pub warnings: Vec<String>,
    /// Stopped before the end of the file.
    pub interrupted: bool,
}

/// Replays the CSV at `path` in timestamp order (stable for equal
/// timestamps), keeping only rows whose data point is in `keep`.
///
/// `speed_factor == 0` emits as fast as possible; `k > 0` waits the file's
/// inter-sample gaps divided by `k`.
pub fn run_replay(
    path: &Path,
    keep: Option<&BTreeSet<String>>,
    speed_factor: f64,
    stop: &AtomicBool,
    sink: impl FnMut(SampleEnvelope),
) -> Result<ReplayStats, ProcioError> {
    let data = CsvData::load(path)?;
    Ok(replay_data(&data, keep, speed_factor, stop, sink))
}

pub fn replay_data(
    data: &CsvData,
    keep: Option<&BTreeSet<String>>,
    speed_factor: f64,
    stop: &AtomicBool,
    mut sink: impl FnMut(SampleEnvelope),
) -> ReplayStats {
    let mut stats = ReplayStats {
        warnings: data.warnings.clone(),
        ..Default::default()
    };
    let rows: Vec<_> = data
        .sorted_rows()
        .into_iter()
        .filter(|r| keep.is_none_or(|k| k.contains(&r.data_point)))
        .collect();
    let started = Instant::now();
    let t0 = rows.first().map_or(0, |r| r.sample.timestamp_ms);
    for row in rows {
        if stop.load(Ordering::SeqCst) {
            stats.interrupted = true;
            break;
        }
        if speed_factor > 0.0 {
            let due = Duration::from_secs_f64((row.sample.timestamp_ms - t0) as f64 / 1000.0 / speed_factor);
            if let Some(wait) = due.checked_sub(started.elapsed()) {
                if !sleep_unless_stopped(wait, stop) {
                    stats.interrupted = true;
                    break;
                }
            }
        }
        sink(SampleEnvelope {
            data_point: row.data_point.clone(),
            sample: row.sample,
            received_ms: now_ms(),
        });
        stats.emitted += 1;
    }
    stats
}
