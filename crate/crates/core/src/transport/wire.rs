//! Frame layout (all integers little-endian):
//!
//! | offset | size | field        |
//! |--------|------|--------------|
//! | 0      | 4    | magic `AB3\0`|
//! | 4      | 1    | version (1)  |
//! | 5      | 1    | msg_type     |
//! | 6      | 2    | reserved (0) |
//! | 8      | 8    | session_id   |
//! | 16     | 8    | sequence     |
//! | 24     | 4    | payload_len  |
//! | 28     | n    | payload      |

use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"AB3\0";
pub const PROTOCOL_VERSION: u8 = 1;
pub const HEADER_LEN: usize = 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum MsgType {
    Tensor = 0,
    Control = 1,
}

impl MsgType {
    fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(MsgType::Tensor),
            1 => Ok(MsgType::Control),
            other => Err(Error::Framing(format!("unknown msg_type {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireMessage {
    pub version: u8,
    pub msg_type: MsgType,
    pub session_id: u64,
    pub sequence: u64,
    pub payload: Vec<u8>,
}

impl WireMessage {
    pub fn tensor(session_id: u64, sequence: u64, words: &[u64]) -> Self {
        WireMessage {
            version: PROTOCOL_VERSION,
            msg_type: MsgType::Tensor,
            session_id,
            sequence,
            payload: words_to_bytes(words),
        }
    }

    pub fn control(session_id: u64, sequence: u64, words: &[u64]) -> Self {
        WireMessage {
            msg_type: MsgType::Control,
            ..WireMessage::tensor(session_id, sequence, words)
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(self.version);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&self.session_id.to_le_bytes());
        out.extend_from_slice(&self.sequence.to_le_bytes());
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Parses one complete frame. The version byte is returned as-is so the
    /// caller can report a mismatch with context.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let len = payload_len(bytes)?;
        if bytes.len() != HEADER_LEN + len {
            return Err(Error::Framing(format!(
                "frame is {} bytes, header announces {}",
                bytes.len(),
                HEADER_LEN + len
            )));
        }
        let msg_type = MsgType::from_u8(bytes[5])?;
        if u16::from_le_bytes([bytes[6], bytes[7]]) != 0 {
            return Err(Error::Framing("reserved field is not zero".into()));
        }
        if msg_type == MsgType::Tensor && len % 8 != 0 {
            return Err(Error::Framing(format!(
                "tensor payload of {len} bytes is not word aligned"
            )));
        }
        Ok(WireMessage {
            version: bytes[4],
            msg_type,
            session_id: u64::from_le_bytes(bytes[8..16].try_into().unwrap()),
            sequence: u64::from_le_bytes(bytes[16..24].try_into().unwrap()),
            payload: bytes[HEADER_LEN..].to_vec(),
        })
    }

    pub fn words(&self) -> Result<Vec<u64>> {
        bytes_to_words(&self.payload)
    }
}

/// Validates magic and returns the payload length from a header prefix.
pub fn payload_len(header: &[u8]) -> Result<usize> {
    if header.len() < HEADER_LEN {
        return Err(Error::Framing(format!(
            "short header: {} bytes",
            header.len()
        )));
    }
    if header[0..4] != MAGIC {
        return Err(Error::Framing("bad magic".into()));
    }
    Ok(u32::from_le_bytes(header[24..28].try_into().unwrap()) as usize)
}

pub fn words_to_bytes(words: &[u64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(words.len() * 8);
    for w in words {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

pub fn bytes_to_words(bytes: &[u8]) -> Result<Vec<u64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Framing(format!(
            "{} bytes is not a whole number of words",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_fixed() {
        let m = WireMessage::tensor(17, 3, &[1, 2]);
        let b = m.encode();
        assert_eq!(b.len(), HEADER_LEN + 16);
        assert_eq!(&b[0..4], b"AB3\0");
        assert_eq!(b[4], 1);
        assert_eq!(b[5], 0);
        assert_eq!(&b[6..8], &[0, 0]);
        assert_eq!(&b[8..16], &17u64.to_le_bytes());
        assert_eq!(&b[16..24], &3u64.to_le_bytes());
        assert_eq!(&b[24..28], &16u32.to_le_bytes());
        assert_eq!(&b[28..36], &1u64.to_le_bytes());
    }

    #[test]
    fn empty_tensor_is_valid() {
        let m = WireMessage::tensor(1, 1, &[]);
        let d = WireMessage::decode(&m.encode()).unwrap();
        assert!(d.payload.is_empty());
        assert_eq!(d.words().unwrap(), Vec::<u64>::new());
    }

    #[test]
    fn rejects_malformed_frames() {
        let mut b = WireMessage::tensor(1, 1, &[5]).encode();
        b[0] = b'X';
        assert!(matches!(WireMessage::decode(&b), Err(Error::Framing(_))));

        let mut b = WireMessage::tensor(1, 1, &[5]).encode();
        b.pop();
        assert!(WireMessage::decode(&b).is_err());

        let mut b = WireMessage::control(1, 1, &[]).encode();
        b.extend_from_slice(&[1, 2, 3]);
        b[24..28].copy_from_slice(&3u32.to_le_bytes());
        b[5] = 0;
        assert!(WireMessage::decode(&b).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(session: u64, seq: u64, ctl: bool, words in proptest::collection::vec(any::<u64>(), 0..64)) {
            let m = if ctl {
                WireMessage::control(session, seq, &words)
            } else {
                WireMessage::tensor(session, seq, &words)
            };
            let d = WireMessage::decode(&m.encode()).unwrap();
            prop_assert_eq!(&d, &m);
            prop_assert_eq!(d.words().unwrap(), words);
        }
    }
}
