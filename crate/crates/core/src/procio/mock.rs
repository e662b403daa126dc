//! In-process Modbus/TCP server for tests and demos, with fault injection.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use super::modbus::{parse_mbap, READ_HOLDING_REGISTERS, MAX_READ_REGISTERS};

pub const ILLEGAL_FUNCTION: u8 = 0x01;
pub const ILLEGAL_DATA_ADDRESS: u8 = 0x02;
pub const ILLEGAL_DATA_VALUE: u8 = 0x03;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Faults {
    /// Answer every request with this exception code.
    pub exception: Option<u8>,
    /// Close each connection when a request arrives after this many answered reads.
    pub drop_after: Option<usize>,
    /// Delay before answering.
    pub delay: Duration,
    /// Close every connection immediately.
    pub down: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MockStats {
    pub connections: usize,
    pub requests: usize,
    pub answered: usize,
    pub exceptions: usize,
    pub transaction_ids: Vec<u16>,
}

#[derive(Debug, Default)]
struct State {
    registers: BTreeMap<u16, u16>,
    faults: Faults,
    stats: MockStats,
}

pub struct MockServer {
    addr: SocketAddr,
    state: Arc<Mutex<State>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    /// Binds an ephemeral loopback port.
    pub fn start() -> io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let state = Arc::new(Mutex::new(State::default()));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let (state, stop) = (state.clone(), stop.clone());
            thread::spawn(move || accept_loop(listener, state, stop))
        };
        Ok(Self {
            addr,
            state,
            stop,
            handle: Some(handle),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    fn lock(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn set_register(&self, address: u16, value: u16) {
        self.lock().registers.insert(address, value);
    }

    pub fn set_registers(&self, address: u16, words: &[u16]) {
        let mut s = self.lock();
        for (i, w) in words.iter().enumerate() {
            s.registers.insert(address + i as u16, *w);
        }
    }

    pub fn set_faults(&self, faults: Faults) {
        self.lock().faults = faults;
    }

    pub fn update_faults(&self, f: impl FnOnce(&mut Faults)) {
        f(&mut self.lock().faults);
    }

    pub fn stats(&self) -> MockStats {
        self.lock().stats.clone()
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn accept_loop(listener: TcpListener, state: Arc<Mutex<State>>, stop: Arc<AtomicBool>) {
    let mut workers = Vec::new();
    while !stop.load(Ordering::SeqCst) {
        match listener.accept() {
            Ok((stream, _)) => {
                let (state, stop) = (state.clone(), stop.clone());
                workers.push(thread::spawn(move || {
                    let _ = serve(stream, &state, &stop);
                }));
            }
            Err(e) if e.kind() == io::ErrorKind::WouldBlock => thread::sleep(Duration::from_millis(2)),
            Err(_) => thread::sleep(Duration::from_millis(10)),
        }
    }
    for w in workers {
        let _ = w.join();
    }
}

/// Fills `buf`, polling `stop` between read timeouts. `Ok(false)` on clean
/// EOF before the first byte or on stop.
fn read_full(stream: &mut TcpStream, buf: &mut [u8], stop: &AtomicBool) -> io::Result<bool> {
    let mut filled = 0;
    while filled < buf.len() {
        if stop.load(Ordering::SeqCst) {
            return Ok(false);
        }
        match stream.read(&mut buf[filled..]) {
            Ok(0) if filled == 0 => return Ok(false),
            Ok(0) => return Err(io::ErrorKind::UnexpectedEof.into()),
            Ok(n) => filled += n,
            Err(e) if matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

fn serve(mut stream: TcpStream, state: &Mutex<State>, stop: &AtomicBool) -> io::Result<()> {
    stream.set_nonblocking(false)?;
    stream.set_read_timeout(Some(Duration::from_millis(20)))?;
    stream.set_nodelay(true)?;
    let lock = || state.lock().unwrap_or_else(|e| e.into_inner());
    {
        let mut s = lock();
        s.stats.connections += 1;
        if s.faults.down {
            return Ok(());
        }
    }
    let mut answered_here = 0usize;
    loop {
        let mut header = [0u8; 7];
        if !read_full(&mut stream, &mut header, stop)? {
            return Ok(());
        }
        let (tid, _, length, unit) = parse_mbap(&header);
        if !(2..=254).contains(&length) {
            return Ok(());
        }
        let mut pdu = vec![0u8; length as usize - 1];
        if !read_full(&mut stream, &mut pdu, stop)? {
            return Ok(());
        }
        let (faults, response) = {
            let mut s = lock();
            s.stats.requests += 1;
            s.stats.transaction_ids.push(tid);
            let faults = s.faults.clone();
            if faults.down || faults.drop_after.is_some_and(|n| answered_here >= n) {
                return Ok(());
            }
            let response = respond(&s.registers, &pdu, faults.exception);
            if response[0] & 0x80 != 0 {
                s.stats.exceptions += 1;
            }
            s.stats.answered += 1;
            (faults, response)
        };
        if !faults.delay.is_zero() {
            thread::sleep(faults.delay);
        }
        let mut frame = Vec::with_capacity(7 + response.len());
        frame.extend_from_slice(&tid.to_be_bytes());
        frame.extend_from_slice(&0u16.to_be_bytes());
        frame.extend_from_slice(&(response.len() as u16 + 1).to_be_bytes());
        frame.push(unit);
        frame.extend_from_slice(&response);
        stream.write_all(&frame)?;
        answered_here += 1;
    }
}

fn respond(registers: &BTreeMap<u16, u16>, pdu: &[u8], forced: Option<u8>) -> Vec<u8> {
    let function = pdu.first().copied().unwrap_or(0);
    let exception = |code: u8| vec![function | 0x80, code];
    if let Some(code) = forced {
        return exception(code);
    }
    if function != READ_HOLDING_REGISTERS {
        return exception(ILLEGAL_FUNCTION);
    }
    if pdu.len() != 5 {
        return exception(ILLEGAL_DATA_VALUE);
    }
    let address = u16::from_be_bytes([pdu[1], pdu[2]]);
    let count = u16::from_be_bytes([pdu[3], pdu[4]]);
    if count == 0 || count > MAX_READ_REGISTERS {
        return exception(ILLEGAL_DATA_VALUE);
    }
    let mut out = vec![function, (count * 2) as u8];
    for a in 0..count {
        match address.checked_add(a).and_then(|a| registers.get(&a)) {
            Some(w) => out.extend_from_slice(&w.to_be_bytes()),
            None => return exception(ILLEGAL_DATA_ADDRESS),
        }
    }
    out
}
