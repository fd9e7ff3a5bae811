mod common;

use std::io::Write;
use std::net::{TcpListener, TcpStream};
use std::thread;
use std::time::{Duration, Instant};

use aby3_core::transport::tcp::{connect, PartyConfig};
use aby3_core::transport::wire::{WireMessage, HEADER_LEN};
use aby3_core::{simulate, Error, FixedPointCodec, Result, Session, SessionParams, SimOptions};
use common::*;

fn free_ports() -> Vec<String> {
    let ls: Vec<TcpListener> = (0..3)
        .map(|_| TcpListener::bind("127.0.0.1:0").unwrap())
        .collect();
    ls.iter()
        .map(|l| l.local_addr().unwrap().to_string())
        .collect()
}

fn config(id: usize, peers: &[String], session_id: u64, seed: u64) -> PartyConfig {
    PartyConfig {
        party_id: id,
        peers: peers.to_vec(),
        session_id,
        seed,
        connect_timeout_ms: 5_000,
        io_timeout_ms: 5_000,
    }
}

fn session(cfg: &PartyConfig) -> Result<Session> {
    let t = connect(cfg)?;
    let params = SessionParams {
        party: cfg.party(),
        session_id: cfg.session_id,
        seed: cfg.seed,
        codec: FixedPointCodec::default(),
        checked_reveal: true,
    };
    Session::establish(Box::new(t), &params)
}

fn product(s: &mut Session) -> Result<(Vec<u64>, aby3_core::CommStats)> {
    let x = s.share_from(P0, &enc(&[3], &[1.5, -2.0, 0.25]))?;
    let y = s.share_from(P1, &enc(&[3], &[2.0, 2.0, -4.0]))?;
    let z = s.mul(&x, &y)?;
    let b = s.lt_const(&z, 0.0)?;
    let opened = s.reveal(&z)?;
    let bits = s.reveal_bool(&b)?;
    let mut words = opened.data().to_vec();
    words.extend_from_slice(bits.data());
    Ok((words, s.stats().clone()))
}

#[test]
fn tcp_and_simulator_agree_bit_for_bit() {
    let peers = free_ports();
    let seeds = SimOptions::default().seeds;
    let handles: Vec<_> = (0..3)
        .map(|i| {
            let cfg = config(i, &peers, 1, seeds[i]);
            thread::spawn(move || {
                let mut s = session(&cfg)?;
                product(&mut s)
            })
        })
        .collect();
    let tcp: Vec<_> = handles
        .into_iter()
        .map(|h| h.join().unwrap().unwrap())
        .collect();
    let sim = simulate(&SimOptions::default(), product).unwrap();
    for i in 0..3 {
        assert_eq!(tcp[i], sim.outputs[i]);
    }
    let c = codec();
    let vals: Vec<f64> = tcp[0].0[..3]
        .iter()
        .map(|&w| c.decode(aby3_core::RingValue(w)))
        .collect();
    assert_eq!(vals, vec![3.0, -4.0, -1.0]);
    assert_eq!(&tcp[0].0[3..], &[0, 1, 1]);
}

#[test]
fn session_mismatch_fails_the_handshake() {
    let peers = free_ports();
    let handles: Vec<_> = (0..2)
        .map(|i| {
            let cfg = PartyConfig {
                connect_timeout_ms: 2_000,
                ..config(i, &peers, 10 + i as u64, 0)
            };
            thread::spawn(move || connect(&cfg).map(|_| ()))
        })
        .collect();
    let results: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    assert!(
        results
            .iter()
            .any(|r| matches!(r, Err(Error::Handshake(m)) if m.contains("session"))),
        "{results:?}"
    );
}

#[test]
fn version_mismatch_fails_the_handshake() {
    let peers = free_ports();
    let cfg = PartyConfig {
        connect_timeout_ms: 3_000,
        ..config(0, &peers, 7, 0)
    };
    let p0 = thread::spawn(move || connect(&cfg).map(|_| ()));
    let addr = peers[0].clone();
    let deadline = Instant::now() + Duration::from_secs(3);
    let mut stream = loop {
        if let Ok(s) = TcpStream::connect(&addr) {
            break s;
        }
        assert!(Instant::now() < deadline, "party 0 never listened");
        thread::sleep(Duration::from_millis(10));
    };
    let mut hello = WireMessage::control(7, 0, &[1]);
    hello.version = 9;
    stream.write_all(&hello.encode()).unwrap();
    let res = p0.join().unwrap();
    assert!(
        matches!(&res, Err(Error::Handshake(m)) if m.contains("version")),
        "{res:?}"
    );
}

#[test]
fn hello_frame_layout() {
    let hello = WireMessage::control(0x0102, 0, &[2]).encode();
    assert_eq!(hello.len(), HEADER_LEN + 8);
    assert_eq!(&hello[..4], b"AB3\0");
    assert_eq!(hello[4], 1);
    assert_eq!(hello[5], 1);
    assert_eq!(u64::from_le_bytes(hello[8..16].try_into().unwrap()), 0x0102);
}

#[test]
fn missing_peers_time_out() {
    let peers = free_ports();
    let cfg = PartyConfig {
        connect_timeout_ms: 300,
        ..config(2, &peers, 1, 0)
    };
    let start = Instant::now();
    let res = connect(&cfg);
    assert!(matches!(res, Err(Error::Timeout(_))), "{:?}", res.err());
    assert!(start.elapsed() < Duration::from_secs(5));
}

#[test]
fn config_validation() {
    let peers = free_ports();
    let mut cfg = config(3, &peers, 1, 0);
    assert!(matches!(connect(&cfg), Err(Error::Config(_))));
    cfg.party_id = 0;
    cfg.peers[1] = cfg.peers[0].clone();
    assert!(matches!(connect(&cfg), Err(Error::Config(_))));
    cfg.peers.pop();
    assert!(matches!(connect(&cfg), Err(Error::Config(_))));
}
