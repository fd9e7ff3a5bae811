//! Pairwise correlated randomness from AES-128 in counter mode.
//!
//! There are three keys. Key `k_j` is held by parties `j` and `j-1`, so
//! party `i` holds `(k_i, k_{i+1})`, mirroring the replicated share layout.
//! Both holders of a key draw from it in the same order, which keeps their
//! counters in lockstep without any communication.

use aes::cipher::{generic_array::GenericArray, BlockEncrypt, KeyInit};
use aes::Aes128;
use sha2::{Digest, Sha256};

use crate::arith::ArithShare;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::ring::RingTensor;
use crate::session::Session;
use crate::transport::PartyId;

const WORDS_PER_CHUNK: usize = 1 << 12;

/// Keyed pseudorandom word stream.
#[derive(Clone)]
pub struct Prf {
    cipher: Aes128,
    counter: u64,
}

impl Prf {
    pub fn new(key: [u8; 16]) -> Self {
        Prf {
            cipher: Aes128::new(&GenericArray::from(key)),
            counter: 0,
        }
    }

    /// Number of 128-bit blocks consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn fill(&mut self, out: &mut [u64]) {
        let blocks = out.len().div_ceil(2) as u64;
        let base = self.counter;
        self.counter += blocks;
        let cipher = &self.cipher;
        par::for_each_chunk(Exec::auto(out.len()), out, WORDS_PER_CHUNK, |ci, chunk| {
            let first_block = base + (ci * WORDS_PER_CHUNK / 2) as u64;
            let mut buf: Vec<_> = (0..chunk.len().div_ceil(2) as u64)
                .map(|b| GenericArray::from(((first_block + b) as u128).to_le_bytes()))
                .collect();
            cipher.encrypt_blocks(&mut buf);
            for (k, w) in chunk.iter_mut().enumerate() {
                let block = &buf[k / 2];
                let off = (k % 2) * 8;
                *w = u64::from_le_bytes(block[off..off + 8].try_into().unwrap());
            }
        });
    }

    pub fn words(&mut self, n: usize) -> Vec<u64> {
        let mut v = vec![0u64; n];
        self.fill(&mut v);
        v
    }
}

/// Derives party `party`'s own key from its seed.
pub fn derive_key(seed: u64, session_id: u64, party: PartyId) -> [u8; 16] {
    let mut h = Sha256::new();
    h.update(b"aby3-prf-key");
    h.update(seed.to_le_bytes());
    h.update(session_id.to_le_bytes());
    h.update([party.index() as u8]);
    let d = h.finalize();
    d[..16].try_into().unwrap()
}

pub(crate) fn key_to_words(key: &[u8; 16]) -> [u64; 2] {
    [
        u64::from_le_bytes(key[..8].try_into().unwrap()),
        u64::from_le_bytes(key[8..].try_into().unwrap()),
    ]
}

pub(crate) fn words_to_key(w: &[u64]) -> [u8; 16] {
    let mut k = [0u8; 16];
    k[..8].copy_from_slice(&w[0].to_le_bytes());
    k[8..].copy_from_slice(&w[1].to_le_bytes());
    k
}

/// The two keys held by one party.
pub struct PrfKeys {
    me: PartyId,
    own: Prf,
    next: Prf,
}

impl PrfKeys {
    pub fn new(me: PartyId, own: [u8; 16], next: [u8; 16]) -> Self {
        PrfKeys {
            me,
            own: Prf::new(own),
            next: Prf::new(next),
        }
    }

    /// Stream for key `k_j`, if this party holds it.
    pub fn stream(&mut self, key_index: usize) -> Option<&mut Prf> {
        if key_index == self.me.index() {
            Some(&mut self.own)
        } else if key_index == self.me.next().index() {
            Some(&mut self.next)
        } else {
            None
        }
    }

    /// `F(k_i) - F(k_{i+1})`: the three parties' outputs sum to zero.
    pub fn zero_words(&mut self, n: usize) -> Vec<u64> {
        let a = self.own.words(n);
        let b = self.next.words(n);
        par::zip_map(Exec::auto(n), &a, &b, u64::wrapping_sub)
    }

    /// `F(k_i) ^ F(k_{i+1})`: the three outputs XOR to zero.
    pub fn xor_zero_words(&mut self, n: usize) -> Vec<u64> {
        let a = self.own.words(n);
        let b = self.next.words(n);
        par::zip_map(Exec::auto(n), &a, &b, |x, y| x ^ y)
    }

    /// `(F(k_i), F(k_{i+1}))`, a replicated pair of a value nobody knows.
    pub fn random_pair(&mut self, n: usize) -> (Vec<u64>, Vec<u64>) {
        (self.own.words(n), self.next.words(n))
    }
}

/// A truncation pair `(r, r >> d)`. `r` is uniform in `[-2^61, 2^61)`.
///
/// Both values live in share component 1 only, so parties 0 and 1 know them
/// in the clear. The pair is safe for masking a value that is opened to
/// party 2 alone, which is how truncation uses it.
pub struct TruncPair {
    pub r: ArithShare,
    pub r_shifted: ArithShare,
}

/// Signed 62-bit mask from a uniform word.
pub(crate) fn mask_from_word(w: u64) -> u64 {
    (((w << 2) as i64) >> 2) as u64
}

impl Session {
    /// Pseudorandom zero sharing; no communication.
    pub fn gen_zero_sharing(&mut self, shape: &[usize]) -> RingTensor {
        let n = shape.iter().product();
        let words = self.prf.zero_words(n);
        self.audit_zero("zero", &words, false);
        RingTensor::new(shape.to_vec(), words, false).expect("length matches shape")
    }

    /// XOR analogue of [`Session::gen_zero_sharing`].
    pub fn gen_xor_zero_sharing(&mut self, shape: &[usize]) -> RingTensor {
        let n = shape.iter().product();
        let words = self.prf.xor_zero_words(n);
        self.audit_zero("xor-zero", &words, true);
        RingTensor::new(shape.to_vec(), words, false).expect("length matches shape")
    }

    pub(crate) fn zero_words(&mut self, n: usize) -> Vec<u64> {
        let words = self.prf.zero_words(n);
        self.audit_zero("zero", &words, false);
        words
    }

    pub(crate) fn xor_zero_words(&mut self, n: usize) -> Vec<u64> {
        let words = self.prf.xor_zero_words(n);
        self.audit_zero("xor-zero", &words, true);
        words
    }

    /// Replicated sharing of a uniform value; no communication.
    pub fn gen_shared_random(&mut self, shape: &[usize]) -> ArithShare {
        let n = shape.iter().product();
        let (a, b) = self.prf.random_pair(n);
        let share = ArithShare::from_parts_unchecked(
            self.party(),
            RingTensor::new(shape.to_vec(), a, false).expect("len"),
            RingTensor::new(shape.to_vec(), b, false).expect("len"),
        );
        self.audit_arith("shared-random", &share);
        share
    }

    /// Draws the raw mask words of a truncation pair. Parties 0 and 1 get
    /// `Some(r)`, party 2 gets `None`.
    pub(crate) fn draw_trunc_mask(&mut self, n: usize) -> Option<Vec<u64>> {
        let prf = self.prf.stream(1)?;
        let mut r = prf.words(n);
        r.iter_mut().for_each(|w| *w = mask_from_word(*w));
        Some(r)
    }

    /// Draws the re-randomizing words shared by parties 1 and 2.
    pub(crate) fn draw_trunc_blind(&mut self, n: usize) -> Option<Vec<u64>> {
        self.prf.stream(2).map(|p| p.words(n))
    }

    /// Truncation pair for shift `frac_bits`; no communication.
    pub fn gen_trunc_pair(&mut self, shape: &[usize], frac_bits: u32) -> Result<TruncPair> {
        if frac_bits >= 62 {
            return Err(Error::InvalidArgument(format!(
                "truncation shift {frac_bits} must be below 62"
            )));
        }
        let n: usize = shape.iter().product();
        let me = self.party();
        let zeros = || RingTensor::zeros(shape, false);
        let (r, r_shifted) = match self.draw_trunc_mask(n) {
            Some(r) => {
                let shifted: Vec<u64> = r
                    .iter()
                    .map(|&w| ((w as i64) >> frac_bits) as u64)
                    .collect();
                let r = RingTensor::new(shape.to_vec(), r, false)?;
                let s = RingTensor::new(shape.to_vec(), shifted, false)?;
                // component 1 is party 0's second slot and party 1's first
                if me.index() == 0 {
                    (
                        ArithShare::from_parts_unchecked(me, zeros(), r),
                        ArithShare::from_parts_unchecked(me, zeros(), s),
                    )
                } else {
                    (
                        ArithShare::from_parts_unchecked(me, r, zeros()),
                        ArithShare::from_parts_unchecked(me, s, zeros()),
                    )
                }
            }
            None => (
                ArithShare::from_parts_unchecked(me, zeros(), zeros()),
                ArithShare::from_parts_unchecked(me, zeros(), zeros()),
            ),
        };
        self.audit_arith("trunc-pair-r", &r);
        self.audit_arith("trunc-pair-r-shifted", &r_shifted);
        Ok(TruncPair { r, r_shifted })
    }
}
