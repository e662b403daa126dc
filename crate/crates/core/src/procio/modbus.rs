//! Modbus/TCP client for Read Holding Registers (function 0x03) and a
//! polling loop with exponential backoff.

use std::io::{self, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use crate::analytics::Sample;

use super::{decode_register, now_ms, sleep_unless_stopped, ModbusSpec, SampleEnvelope};

pub const READ_HOLDING_REGISTERS: u8 = 0x03;
pub const MAX_READ_REGISTERS: u16 = 125;
pub const BACKOFF_CAP: Duration = Duration::from_secs(30);
pub const MIN_BACKOFF: Duration = Duration::from_millis(100);

#[derive(Debug, thiserror::Error)]
pub enum ModbusError {
    #[error("modbus exception 0x{0:02X}")]
    Exception(u8),
    #[error("response timed out")]
    Timeout,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl ModbusError {
    fn from_io(e: io::Error) -> Self {
        match e.kind() {
            io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut => ModbusError::Timeout,
            _ => ModbusError::Io(e),
        }
    }
}

/// MBAP header plus a function 0x03 PDU.
pub fn encode_read_request(transaction_id: u16, unit_id: u8, address: u16, count: u16) -> [u8; 12] {
    let mut f = [0u8; 12];
    f[0..2].copy_from_slice(&transaction_id.to_be_bytes());
    // protocol id 0, length = unit id + 5 PDU bytes
    f[4..6].copy_from_slice(&6u16.to_be_bytes());
    f[6] = unit_id;
    f[7] = READ_HOLDING_REGISTERS;
    f[8..10].copy_from_slice(&address.to_be_bytes());
    f[10..12].copy_from_slice(&count.to_be_bytes());
    f
}

/// Splits an MBAP header into (transaction id, protocol id, length, unit id).
pub fn parse_mbap(h: &[u8; 7]) -> (u16, u16, u16, u8) {
    (
        u16::from_be_bytes([h[0], h[1]]),
        u16::from_be_bytes([h[2], h[3]]),
        u16::from_be_bytes([h[4], h[5]]),
        h[6],
    )
}

/// Reads one MBAP frame: the header and `length - 1` PDU bytes.
pub fn read_frame(stream: &mut impl Read) -> io::Result<([u8; 7], Vec<u8>)> {
    let mut header = [0u8; 7];
    stream.read_exact(&mut header)?;
    let (_, _, length, _) = parse_mbap(&header);
    if !(2..=254).contains(&length) {
        return Err(io::Error::new(io::ErrorKind::InvalidData, format!("bad MBAP length {length}")));
    }
    let mut pdu = vec![0u8; length as usize - 1];
    stream.read_exact(&mut pdu)?;
    Ok((header, pdu))
}

pub struct ModbusClient {
    stream: TcpStream,
    unit_id: u8,
}

impl ModbusClient {
    pub fn connect(host: &str, port: u16, unit_id: u8, timeout: Duration) -> io::Result<Self> {
        let mut last = io::Error::new(io::ErrorKind::NotFound, format!("cannot resolve {host}"));
        for addr in (host, port).to_socket_addrs()? {
            match TcpStream::connect_timeout(&addr, timeout) {
                Ok(stream) => {
                    stream.set_read_timeout(Some(timeout))?;
                    stream.set_write_timeout(Some(timeout))?;
                    stream.set_nodelay(true)?;
                    return Ok(Self { stream, unit_id });
                }
                Err(e) => last = e,
            }
        }
        Err(last)
    }

    pub fn read_holding_registers(
        &mut self,
        transaction_id: u16,
        address: u16,
        count: u16,
    ) -> Result<Vec<u16>, ModbusError> {
        let req = encode_read_request(transaction_id, self.unit_id, address, count);
        self.stream.write_all(&req).map_err(ModbusError::from_io)?;
        let (header, pdu) = read_frame(&mut self.stream).map_err(|e| match e.kind() {
            io::ErrorKind::InvalidData => ModbusError::Protocol(e.to_string()),
            _ => ModbusError::from_io(e),
        })?;
        let (tid, proto, _, unit) = parse_mbap(&header);
        if tid != transaction_id {
            return Err(ModbusError::Protocol(format!(
                "transaction id {tid} does not match request {transaction_id}"
            )));
        }
        if proto != 0 {
            return Err(ModbusError::Protocol(format!("protocol id {proto}")));
        }
        if unit != self.unit_id {
            return Err(ModbusError::Protocol(format!("unit id {unit}")));
        }
        match pdu.first() {
            Some(&f) if f == READ_HOLDING_REGISTERS | 0x80 => {
                Err(ModbusError::Exception(pdu.get(1).copied().unwrap_or(0)))
            }
            Some(&READ_HOLDING_REGISTERS) => {
                let n = *pdu.get(1).unwrap_or(&0) as usize;
                if n != 2 * count as usize || pdu.len() != 2 + n {
                    return Err(ModbusError::Protocol(format!(
                        "byte count {n} for {count} register(s)"
                    )));
                }
                Ok(pdu[2..].chunks(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect())
            }
            other => Err(ModbusError::Protocol(format!("unexpected function code {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PollerStats {
    pub good: u64,
    pub bad: u64,
    pub exceptions: u64,
    pub timeouts: u64,
    pub protocol_errors: u64,
    pub io_errors: u64,
    pub connects: u64,
    pub connect_failures: u64,
    pub last_transaction_id: u16,
    /// Shortest completed wait between a failure and the next attempt.
    pub min_retry_wait: Option<Duration>,
}

impl PollerStats {
    pub fn errors(&self) -> u64 {
        self.exceptions + self.timeouts + self.protocol_errors + self.io_errors + self.connect_failures
    }
}

/// Backoff floor: the poll period, but never below 100 ms.
pub fn backoff_floor(spec: &ModbusSpec) -> Duration {
    Duration::from_millis(spec.poll_period_ms).max(MIN_BACKOFF)
}

/// Polls `spec` until `stop` is set. Failed reads yield a bad-quality
/// sample, drop the connection and wait `floor * 2^k` (capped at 30 s)
/// before reconnecting; a successful read resets the backoff.
pub fn run_modbus_poller(
    data_point: &str,
    spec: &ModbusSpec,
    stop: &AtomicBool,
    mut sink: impl FnMut(SampleEnvelope),
) -> PollerStats {
    let mut stats = PollerStats::default();
    let floor = backoff_floor(spec);
    let period = Duration::from_millis(spec.poll_period_ms);
    let timeout = Duration::from_millis(spec.timeout_ms);
    let mut backoff = floor;
    let mut client: Option<ModbusClient> = None;
    let mut tid: u16 = 0;

    let wait = |backoff: &mut Duration, stats: &mut PollerStats| {
        let started = Instant::now();
        if sleep_unless_stopped(*backoff, stop) {
            let waited = started.elapsed();
            stats.min_retry_wait = Some(stats.min_retry_wait.map_or(waited, |m| m.min(waited)));
        }
        *backoff = (*backoff * 2).min(BACKOFF_CAP);
    };

    while !stop.load(Ordering::SeqCst) {
        let Some(c) = client.as_mut() else {
            match ModbusClient::connect(&spec.host, spec.port, spec.unit_id, timeout) {
                Ok(c) => {
                    stats.connects += 1;
                    client = Some(c);
                }
                Err(e) => {
                    log::debug!("{data_point}: connect to {}:{} failed: {e}", spec.host, spec.port);
                    stats.connect_failures += 1;
                    wait(&mut backoff, &mut stats);
                }
            }
            continue;
        };
        tid = tid.wrapping_add(1);
        stats.last_transaction_id = tid;
        let attempt = Instant::now();
        let result = c.read_holding_registers(tid, spec.address, spec.register_count);
        let t = now_ms();
        match result.and_then(|words| {
            decode_register(&words, spec.encoding, spec.scale, spec.offset)
                .map_err(|e| ModbusError::Protocol(e.to_string()))
        }) {
            Ok(value) => {
                stats.good += 1;
                backoff = floor;
                sink(SampleEnvelope {
                    data_point: data_point.to_string(),
                    sample: Sample::good(t, value),
                    received_ms: t,
                });
                if let Some(rest) = period.checked_sub(attempt.elapsed()) {
                    sleep_unless_stopped(rest, stop);
                }
            }
            Err(e) => {
                log::warn!("{data_point}: poll failed: {e}");
                match e {
                    ModbusError::Exception(_) => stats.exceptions += 1,
                    ModbusError::Timeout => stats.timeouts += 1,
                    ModbusError::Protocol(_) => stats.protocol_errors += 1,
                    ModbusError::Io(_) => stats.io_errors += 1,
                }
                stats.bad += 1;
                sink(SampleEnvelope {
                    data_point: data_point.to_string(),
                    sample: Sample::bad(t, f64::NAN),
                    received_ms: t,
                });
                client = None;
                wait(&mut backoff, &mut stats);
            }
        }
    }
    stats
}
