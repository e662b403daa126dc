mod support;

use std::time::{Duration, Instant};

use ess_core::analytics::Quality;
use ess_core::procio::mock::{Faults, MockServer, ILLEGAL_DATA_ADDRESS};
use ess_core::procio::{backoff_floor, encode_register, Encoding, ModbusSpec};
use support::{min_bad_gap, PollRun};

fn spec(server: &MockServer, address: u16, encoding: Encoding) -> ModbusSpec {
    let mut s = ModbusSpec::new("127.0.0.1", server.port(), address, encoding);
    s.poll_period_ms = 50;
    s.timeout_ms = 300;
    s
}

#[test]
fn scaled_register_decodes_exactly() {
    let server = MockServer::start().unwrap();
    server.set_register(100, 1234);
    let mut s = spec(&server, 100, Encoding::U16);
    s.scale = 0.1;
    let run = PollRun::start(s);
    assert!(run.wait_for(Instant::now(), Duration::from_secs(5), |e| e.sample.is_good()));
    let (seen, stats) = run.finish();
    let good: Vec<_> = seen.iter().filter(|(_, e)| e.sample.is_good()).collect();
    assert!(!good.is_empty());
    for (_, e) in good {
        assert_eq!(e.sample.value, 123.4);
        assert_eq!(e.data_point, "p");
    }
    assert_eq!(stats.errors(), 0);
}

#[test]
fn every_encoding_round_trips_through_the_wire() {
    let server = MockServer::start().unwrap();
    let cases = [
        (Encoding::U16, 65_000.0),
        (Encoding::S16, -1234.0),
        (Encoding::U32Be, 3_000_000_000.0),
        (Encoding::F32Be, -273.15f32 as f64),
    ];
    for (i, (enc, value)) in cases.into_iter().enumerate() {
        let address = 10 * i as u16;
        server.set_registers(address, &encode_register(value, enc, 1.0, 0.0));
        let run = PollRun::start(spec(&server, address, enc));
        assert!(run.wait_for(Instant::now(), Duration::from_secs(5), |e| e.sample.is_good()), "{enc:?}");
        let (seen, _) = run.finish();
        let first = seen.iter().find(|(_, e)| e.sample.is_good()).unwrap();
        assert_eq!(first.1.sample.value, value, "{enc:?}");
    }
}

#[test]
fn exception_yields_bad_samples_then_recovers() {
    let server = MockServer::start().unwrap();
    server.set_register(1, 42);
    let s = spec(&server, 1, Encoding::U16);
    let floor = backoff_floor(&s);
    server.set_faults(Faults {
        exception: Some(ILLEGAL_DATA_ADDRESS),
        ..Faults::default()
    });
    let run = PollRun::start(s);
    std::thread::sleep(Duration::from_millis(800));
    server.set_faults(Faults::default());
    let cleared = Instant::now();
    assert!(run.wait_for(cleared, Duration::from_secs(5), |e| e.sample.is_good()));
    let (seen, stats) = run.finish();

    let bad: Vec<_> = seen.iter().filter(|(t, _)| *t < cleared).collect();
    assert!(bad.len() >= 2, "{} bad samples", bad.len());
    for (_, e) in &bad {
        assert_eq!(e.sample.quality, Quality::Bad);
        assert!(e.sample.value.is_nan());
    }
    assert!(stats.exceptions >= 2);
    assert!(stats.min_retry_wait.unwrap() >= floor);
    assert!(min_bad_gap(&seen).unwrap() >= floor);
    assert!(seen.iter().any(|(t, e)| *t >= cleared && e.sample.value == 42.0));
}

#[test]
fn dropped_connection_reconnects() {
    let server = MockServer::start().unwrap();
    server.set_register(5, 7);
    let s = spec(&server, 5, Encoding::U16);
    let floor = backoff_floor(&s);
    server.set_faults(Faults {
        drop_after: Some(2),
        ..Faults::default()
    });
    let run = PollRun::start(s);
    std::thread::sleep(Duration::from_millis(1500));
    let (seen, stats) = run.finish();
    assert!(stats.bad >= 2, "{stats:?}");
    assert!(stats.connects >= 3, "{stats:?}");
    assert!(stats.good >= 4, "{stats:?}");
    assert!(min_bad_gap(&seen).unwrap() >= floor);
    // Good reads follow every reconnect.
    let last_bad = seen.iter().rposition(|(_, e)| !e.sample.is_good()).unwrap();
    assert!(seen[..last_bad].iter().any(|(_, e)| e.sample.value == 7.0));
    assert!(server.stats().connections >= 3);
}

#[test]
fn server_down_backs_off_exponentially() {
    let server = MockServer::start().unwrap();
    server.set_register(0, 1);
    server.set_faults(Faults {
        down: true,
        ..Faults::default()
    });
    let mut s = spec(&server, 0, Encoding::U16);
    s.poll_period_ms = 100;
    let run = PollRun::start(s);
    std::thread::sleep(Duration::from_millis(1600));
    server.set_faults(Faults::default());
    let cleared = Instant::now();
    assert!(run.wait_for(cleared, Duration::from_secs(5), |e| e.sample.is_good()));
    let (seen, stats) = run.finish();
    let bad: Vec<Instant> = seen.iter().filter(|(_, e)| !e.sample.is_good()).map(|(t, _)| *t).collect();
    // Waits of 100, 200, 400, 800 ms: at most five attempts in 1.6 s, each
    // gap at least as long as the one before.
    assert!((2..=5).contains(&bad.len()), "{} attempts", bad.len());
    let gaps: Vec<Duration> = bad.windows(2).map(|w| w[1] - w[0]).collect();
    assert!(gaps[0] >= Duration::from_millis(100));
    for g in gaps.windows(2) {
        assert!(g[1] + Duration::from_millis(20) >= g[0] * 2, "{gaps:?}");
    }
    assert!(stats.connects >= 2);
}

#[test]
fn slow_server_times_out() {
    let server = MockServer::start().unwrap();
    server.set_register(0, 1);
    server.set_faults(Faults {
        delay: Duration::from_millis(500),
        ..Faults::default()
    });
    let mut s = spec(&server, 0, Encoding::U16);
    s.timeout_ms = 100;
    let run = PollRun::start(s);
    std::thread::sleep(Duration::from_millis(700));
    server.set_faults(Faults::default());
    let cleared = Instant::now();
    assert!(run.wait_for(cleared, Duration::from_secs(5), |e| e.sample.is_good()));
    let (_, stats) = run.finish();
    assert!(stats.timeouts >= 1, "{stats:?}");
}

#[test]
fn transaction_ids_increase() {
    let server = MockServer::start().unwrap();
    server.set_register(0, 1);
    let run = PollRun::start(spec(&server, 0, Encoding::U16));
    std::thread::sleep(Duration::from_millis(400));
    let (_, stats) = run.finish();
    let ids = server.stats().transaction_ids;
    assert!(ids.len() >= 3);
    assert!(ids.windows(2).all(|w| w[1] == w[0].wrapping_add(1)), "{ids:?}");
    assert_eq!(*ids.last().unwrap(), stats.last_transaction_id);
}
