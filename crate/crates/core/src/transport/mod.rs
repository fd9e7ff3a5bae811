//! Ordered message exchange among the three parties with round and byte
//! accounting. Frames travel over a [`Transport`] backend: the in-memory
//! hub in [`sim`] or TCP sockets in [`tcp`].
//!
//! There is no channel encryption here. Parties are assumed semi-honest and
//! the network trusted; a production deployment must wrap the sockets in TLS.

pub mod sim;
pub mod tcp;
pub mod wire;

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ring::RingTensor;
use wire::{MsgType, WireMessage, PROTOCOL_VERSION};

/// Index of one of the three parties.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PartyId(u8);

impl PartyId {
    pub const ALL: [PartyId; 3] = [PartyId(0), PartyId(1), PartyId(2)];

    pub fn new(id: usize) -> Result<Self> {
        if id < 3 {
            Ok(PartyId(id as u8))
        } else {
            Err(Error::InvalidArgument(format!("party id {id} not in 0..3")))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn next(self) -> PartyId {
        PartyId((self.0 + 1) % 3)
    }

    pub fn prev(self) -> PartyId {
        PartyId((self.0 + 2) % 3)
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

/// Moves whole encoded frames between parties.
pub trait Transport: Send {
    fn send_frame(&mut self, to: PartyId, frame: Vec<u8>) -> Result<()>;
    fn recv_frame(&mut self, from: PartyId) -> Result<Vec<u8>>;
    /// Pushes any buffered frames onto the wire.
    fn flush(&mut self) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommStats {
    /// Number of synchronization barriers passed.
    pub rounds: u64,
    /// Bytes sent to each party, indexed by party id (own slot stays 0).
    pub bytes_sent: [u64; 3],
    pub messages_sent: [u64; 3],
    pub bytes_received: [u64; 3],
}

impl CommStats {
    pub fn total_bytes_sent(&self) -> u64 {
        self.bytes_sent.iter().sum()
    }

    pub fn total_messages(&self) -> u64 {
        self.messages_sent.iter().sum()
    }

    /// Counter differences `self - earlier`.
    pub fn since(&self, earlier: &CommStats) -> CommStats {
        let d = |a: [u64; 3], b: [u64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
        CommStats {
            rounds: self.rounds - earlier.rounds,
            bytes_sent: d(self.bytes_sent, earlier.bytes_sent),
            messages_sent: d(self.messages_sent, earlier.messages_sent),
            bytes_received: d(self.bytes_received, earlier.bytes_received),
        }
    }
}

/// Analytic network cost: `rounds * rtt + bytes / bandwidth`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyModel {
    pub rtt_ms: f64,
    pub bandwidth_mbps: f64,
}

impl LatencyModel {
    pub fn lan() -> Self {
        LatencyModel {
            rtt_ms: 0.5,
            bandwidth_mbps: 1000.0,
        }
    }

    pub fn wan() -> Self {
        LatencyModel {
            rtt_ms: 50.0,
            bandwidth_mbps: 100.0,
        }
    }

    /// Modeled seconds for one party's traffic. Parties transmit
    /// concurrently, so callers usually take the maximum over parties.
    pub fn modeled_seconds(&self, stats: &CommStats) -> f64 {
        let latency = stats.rounds as f64 * self.rtt_ms / 1000.0;
        let transfer = stats.total_bytes_sent() as f64 * 8.0 / (self.bandwidth_mbps * 1e6);
        latency + transfer
    }

    pub fn modeled_seconds_max(&self, stats: &[CommStats]) -> f64 {
        stats
            .iter()
            .map(|s| self.modeled_seconds(s))
            .fold(0.0, f64::max)
    }
}

/// Framing, sequencing and accounting on top of a [`Transport`].
pub struct Network {
    me: PartyId,
    session_id: u64,
    transport: Box<dyn Transport>,
    send_seq: [u64; 3],
    recv_seq: [u64; 3],
    stats: CommStats,
    barrier_delay: Option<Duration>,
}

impl Network {
    /// Sequence numbers start at 1; 0 is reserved for transport-level hellos.
    pub fn new(me: PartyId, session_id: u64, transport: Box<dyn Transport>) -> Self {
        Network {
            me,
            session_id,
            transport,
            send_seq: [1; 3],
            recv_seq: [1; 3],
            stats: CommStats::default(),
            barrier_delay: None,
        }
    }

    /// Sleeps for `delay` at every barrier, emulating link latency.
    pub fn set_barrier_delay(&mut self, delay: Option<Duration>) {
        self.barrier_delay = delay;
    }

    pub fn party(&self) -> PartyId {
        self.me
    }

    pub fn session_id(&self) -> u64 {
        self.session_id
    }

    pub fn stats(&self) -> &CommStats {
        &self.stats
    }

    pub fn reset_stats(&mut self) {
        self.stats = CommStats::default();
    }

    fn send_message(&mut self, to: PartyId, msg_type: MsgType, words: &[u64]) -> Result<()> {
        if to == self.me {
            return Err(Error::InvalidArgument("send to self".into()));
        }
        let seq = self.send_seq[to.index()];
        self.send_seq[to.index()] += 1;
        let msg = match msg_type {
            MsgType::Tensor => WireMessage::tensor(self.session_id, seq, words),
            MsgType::Control => WireMessage::control(self.session_id, seq, words),
        };
        let frame = msg.encode();
        self.stats.bytes_sent[to.index()] += frame.len() as u64;
        self.stats.messages_sent[to.index()] += 1;
        self.transport.send_frame(to, frame)
    }

    fn recv_message(&mut self, from: PartyId, msg_type: MsgType) -> Result<WireMessage> {
        if from == self.me {
            return Err(Error::InvalidArgument("receive from self".into()));
        }
        let frame = self.transport.recv_frame(from)?;
        self.stats.bytes_received[from.index()] += frame.len() as u64;
        let msg = WireMessage::decode(&frame)?;
        if msg.version != PROTOCOL_VERSION {
            return Err(Error::Handshake(format!(
                "{from} speaks protocol version {}, expected {PROTOCOL_VERSION}",
                msg.version
            )));
        }
        if msg.session_id != self.session_id {
            return Err(Error::Desync(format!(
                "frame from {from} carries session {}, expected {}",
                msg.session_id, self.session_id
            )));
        }
        let expected = self.recv_seq[from.index()];
        if msg.sequence != expected {
            return Err(Error::Desync(format!(
                "frame from {from} has sequence {}, expected {expected}",
                msg.sequence
            )));
        }
        self.recv_seq[from.index()] += 1;
        if msg.msg_type != msg_type {
            return Err(Error::Desync(format!(
                "expected {msg_type:?} frame from {from}, got {:?}",
                msg.msg_type
            )));
        }
        Ok(msg)
    }

    pub fn send_words(&mut self, to: PartyId, words: &[u64]) -> Result<()> {
        self.send_message(to, MsgType::Tensor, words)
    }

    /// Receives exactly `expected` words; any other payload length is a
    /// framing error.
    pub fn recv_words(&mut self, from: PartyId, expected: usize) -> Result<Vec<u64>> {
        let msg = self.recv_message(from, MsgType::Tensor)?;
        if msg.payload.len() != expected * 8 {
            return Err(Error::Framing(format!(
                "expected {expected} words from {from}, got {} bytes",
                msg.payload.len()
            )));
        }
        msg.words()
    }

    pub fn send_tensor(&mut self, to: PartyId, t: &RingTensor) -> Result<()> {
        self.send_words(to, t.data())
    }

    pub fn recv_tensor(
        &mut self,
        from: PartyId,
        shape: &[usize],
        is_scaled: bool,
    ) -> Result<RingTensor> {
        let n = shape.iter().product();
        let words = self.recv_words(from, n)?;
        RingTensor::new(shape.to_vec(), words, is_scaled)
    }

    pub fn send_control(&mut self, to: PartyId, words: &[u64]) -> Result<()> {
        self.send_message(to, MsgType::Control, words)
    }

    pub fn recv_control(&mut self, from: PartyId) -> Result<Vec<u64>> {
        self.recv_message(from, MsgType::Control)?.words()
    }

    /// Ends one communication round: flushes pending frames and counts it.
    pub fn barrier(&mut self) -> Result<()> {
        self.transport.flush()?;
        self.stats.rounds += 1;
        if let Some(d) = self.barrier_delay {
            std::thread::sleep(d);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn party_index_arithmetic() {
        let p = PartyId::new(0).unwrap();
        assert_eq!(p.next().index(), 1);
        assert_eq!(p.prev().index(), 2);
        assert_eq!(PartyId::new(2).unwrap().next().index(), 0);
        assert!(PartyId::new(3).is_err());
    }

    #[test]
    fn modeled_time() {
        let s = CommStats {
            rounds: 10,
            bytes_sent: [0, 12_500_000, 0],
            ..Default::default()
        };
        let wan = LatencyModel::wan();
        // 10 * 50ms + 100 Mbit / 100 Mbps
        assert!((wan.modeled_seconds(&s) - 1.5).abs() < 1e-12);
    }
}
