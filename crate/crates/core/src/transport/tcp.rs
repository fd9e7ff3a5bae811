//! TCP backend. Party `i` listens on `peers[i]`, dials every lower-numbered
//! party and accepts every higher-numbered one. Each connection opens with a
//! hello frame (sequence 0, control) carrying the sender's party id; the
//! header's version and session id are checked on both sides.
//!
//! A reader thread per connection drains the socket into a queue, so large
//! sends never block on a peer that is itself busy sending.

use std::io::{BufWriter, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::wire::{self, WireMessage, HEADER_LEN, PROTOCOL_VERSION};
use super::{PartyId, Transport};
use crate::error::{Error, Result};

fn default_io_timeout_ms() -> u64 {
    120_000
}

/// Per-party network configuration, read from JSON.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyConfig {
    pub party_id: usize,
    pub peers: Vec<String>,
    pub session_id: u64,
    pub seed: u64,
    pub connect_timeout_ms: u64,
    #[serde(default = "default_io_timeout_ms")]
    pub io_timeout_ms: u64,
}

impl PartyConfig {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PartyConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        PartyId::new(self.party_id).map_err(|e| Error::Config(e.to_string()))?;
        if self.peers.len() != 3 {
            return Err(Error::Config(format!(
                "expected 3 peer addresses, got {}",
                self.peers.len()
            )));
        }
        for i in 0..3 {
            for j in i + 1..3 {
                if self.peers[i] == self.peers[j] {
                    return Err(Error::Config(format!(
                        "parties {i} and {j} share the address {}",
                        self.peers[i]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn party(&self) -> PartyId {
        PartyId::new(self.party_id).expect("validated")
    }
}

type FrameResult = std::result::Result<Vec<u8>, String>;

pub struct TcpTransport {
    me: PartyId,
    writers: [Option<BufWriter<TcpStream>>; 3],
    readers: [Option<Receiver<FrameResult>>; 3],
    io_timeout: Duration,
}

fn read_frame(stream: &mut TcpStream) -> std::io::Result<Vec<u8>> {
    let mut frame = vec![0u8; HEADER_LEN];
    stream.read_exact(&mut frame)?;
    let len = wire::payload_len(&frame)
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()))?;
    frame.resize(HEADER_LEN + len, 0);
    stream.read_exact(&mut frame[HEADER_LEN..])?;
    Ok(frame)
}

fn io_to_handshake(what: &str, e: std::io::Error) -> Error {
    match e.kind() {
        std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut => {
            Error::Timeout(format!("{what}: {e}"))
        }
        _ => Error::Handshake(format!("{what}: {e}")),
    }
}

fn send_hello(stream: &mut TcpStream, cfg: &PartyConfig) -> Result<()> {
    let hello = WireMessage::control(cfg.session_id, 0, &[cfg.party_id as u64]);
    stream.write_all(&hello.encode())?;
    stream.flush()?;
    Ok(())
}

/// Reads the peer's hello and returns its party id.
fn recv_hello(stream: &mut TcpStream, cfg: &PartyConfig) -> Result<PartyId> {
    let frame = read_frame(stream).map_err(|e| io_to_handshake("reading hello", e))?;
    let msg = WireMessage::decode(&frame)?;
    if msg.version != PROTOCOL_VERSION {
        return Err(Error::Handshake(format!(
            "version mismatch: peer speaks {}, we speak {PROTOCOL_VERSION}",
            msg.version
        )));
    }
    if msg.session_id != cfg.session_id {
        return Err(Error::Handshake(format!(
            "session mismatch: peer is in session {}, we are in {}",
            msg.session_id, cfg.session_id
        )));
    }
    let words = msg.words()?;
    match words.as_slice() {
        [id] if (*id as usize) < 3 => Ok(PartyId::new(*id as usize)?),
        _ => Err(Error::Handshake("malformed hello payload".into())),
    }
}

fn dial(addr: &str, deadline: Instant) -> Result<TcpStream> {
    loop {
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            return Err(Error::Timeout(format!("could not reach {addr}")));
        }
        let addrs: Vec<_> = addr
            .to_socket_addrs()
            .map_err(|e| Error::Config(format!("bad address {addr}: {e}")))?
            .collect();
        for a in &addrs {
            if let Ok(s) = TcpStream::connect_timeout(a, remaining.min(Duration::from_secs(1))) {
                return Ok(s);
            }
        }
        thread::sleep(Duration::from_millis(20));
    }
}

/// Establishes connections to both other parties.
pub fn connect(cfg: &PartyConfig) -> Result<TcpTransport> {
    cfg.validate()?;
    let me = cfg.party();
    let deadline = Instant::now() + Duration::from_millis(cfg.connect_timeout_ms);
    let listener = TcpListener::bind(&cfg.peers[me.index()])?;
    listener.set_nonblocking(true)?;

    let mut streams: [Option<TcpStream>; 3] = [None, None, None];
    let handshake_timeout = Some(Duration::from_millis(cfg.connect_timeout_ms.max(1)));

    for j in 0..me.index() {
        let mut s = dial(&cfg.peers[j], deadline)?;
        s.set_read_timeout(handshake_timeout)?;
        send_hello(&mut s, cfg)?;
        let id = recv_hello(&mut s, cfg)?;
        if id.index() != j {
            return Err(Error::Handshake(format!(
                "dialed party {j} at {} but {id} answered",
                cfg.peers[j]
            )));
        }
        streams[j] = Some(s);
    }

    let mut pending = 2 - me.index();
    while pending > 0 {
        if Instant::now() >= deadline {
            return Err(Error::Timeout(format!(
                "{me} still waiting for {pending} peer(s) to connect"
            )));
        }
        match listener.accept() {
            Ok((mut s, _)) => {
                s.set_nonblocking(false)?;
                s.set_read_timeout(handshake_timeout)?;
                let id = recv_hello(&mut s, cfg)?;
                if id == me {
                    return Err(Error::Handshake(format!("duplicate party id {me}")));
                }
                if id.index() < me.index() || streams[id.index()].is_some() {
                    return Err(Error::Handshake(format!(
                        "duplicate or unexpected party {id}"
                    )));
                }
                send_hello(&mut s, cfg)?;
                streams[id.index()] = Some(s);
                pending -= 1;
            }
            Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                thread::sleep(Duration::from_millis(5));
            }
            Err(e) => return Err(e.into()),
        }
    }

    let mut writers: [Option<BufWriter<TcpStream>>; 3] = [None, None, None];
    let mut readers: [Option<Receiver<FrameResult>>; 3] = [None, None, None];
    for (j, slot) in streams.into_iter().enumerate() {
        let Some(s) = slot else { continue };
        s.set_read_timeout(None)?;
        s.set_nodelay(true)?;
        let mut rs = s.try_clone()?;
        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name(format!("p{}-from-p{j}", me.index()))
            .spawn(move || loop {
                match read_frame(&mut rs) {
                    Ok(f) => {
                        if tx.send(Ok(f)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e.to_string()));
                        break;
                    }
                }
            })?;
        writers[j] = Some(BufWriter::with_capacity(1 << 16, s));
        readers[j] = Some(rx);
    }

    Ok(TcpTransport {
        me,
        writers,
        readers,
        io_timeout: Duration::from_millis(cfg.io_timeout_ms),
    })
}

impl Transport for TcpTransport {
    fn send_frame(&mut self, to: PartyId, frame: Vec<u8>) -> Result<()> {
        let w = self.writers[to.index()]
            .as_mut()
            .ok_or_else(|| Error::InvalidArgument(format!("no channel to {to}")))?;
        w.write_all(&frame)
            .map_err(|e| Error::ConnectionLost(format!("sending to {to}: {e}")))
    }

    fn recv_frame(&mut self, from: PartyId) -> Result<Vec<u8>> {
        // make sure the peer can make progress before we block
        self.flush()?;
        let rx = self.readers[from.index()]
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument(format!("no channel from {from}")))?;
        match rx.recv_timeout(self.io_timeout) {
            Ok(Ok(frame)) => Ok(frame),
            Ok(Err(e)) => Err(Error::ConnectionLost(format!("{from}: {e}"))),
            Err(RecvTimeoutError::Timeout) => {
                Err(Error::Timeout(format!("{} waiting on {from}", self.me)))
            }
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::ConnectionLost(format!("{from} reader stopped")))
            }
        }
    }

    fn flush(&mut self) -> Result<()> {
        for (j, w) in self.writers.iter_mut().enumerate() {
            if let Some(w) = w {
                w.flush()
                    .map_err(|e| Error::ConnectionLost(format!("flushing to P{j}: {e}")))?;
            }
        }
        Ok(())
    }
}

impl Drop for TcpTransport {
    fn drop(&mut self) {
        for w in self.writers.iter_mut().flatten() {
            let _ = w.flush();
            let _ = w.get_ref().shutdown(Shutdown::Write);
        }
    }
}
