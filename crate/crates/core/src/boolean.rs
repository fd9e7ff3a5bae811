//! Replicated XOR sharing, share conversion and comparison.
//!
//! Boolean shares use the same layout as arithmetic ones with XOR in place
//! of addition. Each share carries a bit width; words are kept masked to it.
//! AND gates cost one round and are batched across whole tensors, so every
//! circuit below has a round count that depends only on its depth.

use serde::{Deserialize, Serialize};

use crate::arith::ArithShare;
use crate::error::{Error, Result};
use crate::ring::{encode_with, RingTensor};
use crate::session::Session;
use crate::transport::PartyId;

fn width_mask(bits: u32) -> u64 {
    if bits >= 64 {
        u64::MAX
    } else {
        (1u64 << bits) - 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoolShare {
    owner: PartyId,
    first: RingTensor,
    second: RingTensor,
    bit_width: u32,
}

impl BoolShare {
    pub fn from_parts(
        owner: PartyId,
        first: RingTensor,
        second: RingTensor,
        bit_width: u32,
    ) -> Result<Self> {
        if first.shape() != second.shape() {
            return Err(Error::ShapeMismatch(
                first.shape().to_vec(),
                second.shape().to_vec(),
            ));
        }
        if bit_width == 0 || bit_width > 64 {
            return Err(Error::InvalidArgument(format!("bit width {bit_width}")));
        }
        let m = width_mask(bit_width);
        Ok(BoolShare {
            owner,
            first: first.map_words(|w| w & m).with_scaled(false),
            second: second.map_words(|w| w & m).with_scaled(false),
            bit_width,
        })
    }

    /// Sharing of a public word pattern.
    pub fn public(owner: PartyId, value: &RingTensor, bit_width: u32) -> Result<Self> {
        let zero = RingTensor::zeros(value.shape(), false);
        let (first, second) = match owner.index() {
            0 => (value.clone(), zero),
            1 => (zero.clone(), zero),
            _ => (zero, value.clone()),
        };
        BoolShare::from_parts(owner, first, second, bit_width)
    }

    pub fn owner(&self) -> PartyId {
        self.owner
    }

    pub fn first(&self) -> &RingTensor {
        &self.first
    }

    pub fn second(&self) -> &RingTensor {
        &self.second
    }

    pub fn shape(&self) -> &[usize] {
        self.first.shape()
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }

    fn same_shape(&self, other: &BoolShare) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(
                self.shape().to_vec(),
                other.shape().to_vec(),
            ));
        }
        Ok(())
    }

    pub fn xor(&self, other: &BoolShare) -> Result<BoolShare> {
        self.same_shape(other)?;
        BoolShare::from_parts(
            self.owner,
            self.first.xor(&other.first)?,
            self.second.xor(&other.second)?,
            self.bit_width.max(other.bit_width),
        )
    }

    /// XOR with a public tensor or scalar, applied to component 0.
    pub fn xor_public(&self, value: &RingTensor) -> Result<BoolShare> {
        let mut first = self.first.clone();
        let mut second = self.second.clone();
        match self.owner.index() {
            0 => first = first.xor(value)?,
            2 => second = second.xor(value)?,
            _ => {}
        }
        BoolShare::from_parts(self.owner, first, second, self.bit_width)
    }

    /// Bitwise complement within the share's width.
    pub fn not(&self) -> BoolShare {
        self.xor_public(&RingTensor::scalar(width_mask(self.bit_width), false))
            .expect("scalar broadcast")
    }

    /// AND with a public mask; local.
    pub fn and_public(&self, mask: u64) -> BoolShare {
        BoolShare {
            owner: self.owner,
            first: self.first.map_words(|w| w & mask),
            second: self.second.map_words(|w| w & mask),
            bit_width: self.bit_width,
        }
    }

    pub fn shl(&self, bits: u32) -> BoolShare {
        BoolShare::from_parts(
            self.owner,
            self.first.shl(bits),
            self.second.shl(bits),
            self.bit_width,
        )
        .expect("same shape")
    }

    pub fn shr(&self, bits: u32) -> BoolShare {
        BoolShare::from_parts(
            self.owner,
            self.first.shr(bits),
            self.second.shr(bits),
            self.bit_width,
        )
        .expect("same shape")
    }

    /// Bit `k` of every element as a width-1 share.
    pub fn extract_bit(&self, k: u32) -> BoolShare {
        BoolShare::from_parts(self.owner, self.first.shr(k), self.second.shr(k), 1)
            .expect("same shape")
    }
}

/// Flat replicated words with no shape or width attached.
#[derive(Clone)]
struct Flat {
    first: Vec<u64>,
    second: Vec<u64>,
}

impl Flat {
    fn xor(&self, o: &Flat) -> Flat {
        Flat {
            first: self
                .first
                .iter()
                .zip(&o.first)
                .map(|(a, b)| a ^ b)
                .collect(),
            second: self
                .second
                .iter()
                .zip(&o.second)
                .map(|(a, b)| a ^ b)
                .collect(),
        }
    }

    fn shl(&self, s: u32) -> Flat {
        Flat {
            first: self.first.iter().map(|w| w << s).collect(),
            second: self.second.iter().map(|w| w << s).collect(),
        }
    }
}

impl Session {
    /// One round of AND gates over flat words; every pair runs in the same
    /// message.
    fn and_flat(&mut self, pairs: &[(&Flat, &Flat)]) -> Result<Vec<Flat>> {
        let me = self.party();
        let total: usize = pairs.iter().map(|(x, _)| x.first.len()).sum();
        let beta = self.xor_zero_words(total);
        let mut z = Vec::with_capacity(total);
        for (x, y) in pairs {
            if x.first.len() != y.first.len() {
                return Err(Error::ShapeMismatch(
                    vec![x.first.len()],
                    vec![y.first.len()],
                ));
            }
            for k in 0..x.first.len() {
                let (a0, a1, b0, b1) = (x.first[k], x.second[k], y.first[k], y.second[k]);
                z.push((a0 & b0) ^ (a0 & b1) ^ (a1 & b0) ^ beta[z.len()]);
            }
        }
        if total > 0 {
            self.net.send_words(me.prev(), &z)?;
        }
        self.barrier()?;
        let other = if total > 0 {
            self.net.recv_words(me.next(), total)?
        } else {
            Vec::new()
        };
        let mut out = Vec::with_capacity(pairs.len());
        let mut off = 0;
        for (x, _) in pairs {
            let n = x.first.len();
            out.push(Flat {
                first: z[off..off + n].to_vec(),
                second: other[off..off + n].to_vec(),
            });
            off += n;
        }
        Ok(out)
    }

    pub fn and(&mut self, x: &BoolShare, y: &BoolShare) -> Result<BoolShare> {
        Ok(self.and_many(&[(x, y)])?.pop().expect("one output"))
    }

    /// Independent AND gates in a single round.
    pub fn and_many(&mut self, pairs: &[(&BoolShare, &BoolShare)]) -> Result<Vec<BoolShare>> {
        let flats: Vec<(Flat, Flat)> = pairs
            .iter()
            .map(|(x, y)| {
                x.same_shape(y)?;
                Ok((
                    Flat {
                        first: x.first.data().to_vec(),
                        second: x.second.data().to_vec(),
                    },
                    Flat {
                        first: y.first.data().to_vec(),
                        second: y.second.data().to_vec(),
                    },
                ))
            })
            .collect::<Result<_>>()?;
        let refs: Vec<(&Flat, &Flat)> = flats.iter().map(|(a, b)| (a, b)).collect();
        let outs = self.and_flat(&refs)?;
        let me = self.party();
        let mut res = Vec::with_capacity(pairs.len());
        for ((x, y), f) in pairs.iter().zip(outs) {
            let shape = x.shape().to_vec();
            let b = BoolShare::from_parts(
                me,
                RingTensor::new(shape.clone(), f.first, false)?,
                RingTensor::new(shape, f.second, false)?,
                x.bit_width.min(y.bit_width),
            )?;
            self.trace("and", b.shape());
            self.audit_bool("and", &b);
            res.push(b);
        }
        Ok(res)
    }

    /// Sum of three boolean-shared words with a carry-save step followed by
    /// a Kogge-Stone adder. Eight rounds.
    fn add3_flat(&mut self, a: &Flat, b: &Flat, c: &Flat) -> Result<Flat> {
        let s = a.xor(b).xor(c);
        let ac = a.xor(c);
        let bc = b.xor(c);
        let maj = self.and_flat(&[(&ac, &bc)])?.pop().unwrap().xor(c);
        let carry = maj.shl(1);

        let p = s.xor(&carry);
        let mut g = self.and_flat(&[(&s, &carry)])?.pop().unwrap();
        let mut pp = p.clone();
        for level in 0..6 {
            let shift = 1u32 << level;
            let gs = g.shl(shift);
            if level == 5 {
                let t = self.and_flat(&[(&pp, &gs)])?.pop().unwrap();
                g = g.xor(&t);
            } else {
                let ps = pp.shl(shift);
                let mut r = self.and_flat(&[(&pp, &gs), (&pp, &ps)])?;
                let np = r.pop().unwrap();
                let t = r.pop().unwrap();
                g = g.xor(&t);
                pp = np;
            }
        }
        Ok(p.xor(&g.shl(1)))
    }

    /// Arithmetic to boolean conversion of several shares at once.
    pub fn a2b_many(&mut self, xs: &[&ArithShare]) -> Result<Vec<BoolShare>> {
        let me = self.party();
        let mut first = Vec::new();
        let mut second = Vec::new();
        for x in xs {
            first.extend_from_slice(x.first().data());
            second.extend_from_slice(x.second().data());
        }
        let n = first.len();
        let zeros = vec![0u64; n];
        // the three components, each as a boolean sharing with one non-zero slot
        let mut comps: Vec<Flat> = Vec::with_capacity(3);
        for j in 0..3 {
            let f = if j == me.index() {
                first.clone()
            } else {
                zeros.clone()
            };
            let s = if j == me.next().index() {
                second.clone()
            } else {
                zeros.clone()
            };
            comps.push(Flat {
                first: f,
                second: s,
            });
        }
        let sum = self.add3_flat(&comps[0], &comps[1], &comps[2])?;
        let mut out = Vec::with_capacity(xs.len());
        let mut off = 0;
        for x in xs {
            let k = x.len();
            let b = BoolShare::from_parts(
                me,
                RingTensor::new(x.shape().to_vec(), sum.first[off..off + k].to_vec(), false)?,
                RingTensor::new(x.shape().to_vec(), sum.second[off..off + k].to_vec(), false)?,
                64,
            )?;
            off += k;
            self.trace("a2b", b.shape());
            self.audit_bool("a2b", &b);
            out.push(b);
        }
        Ok(out)
    }

    pub fn a2b(&mut self, x: &ArithShare) -> Result<BoolShare> {
        Ok(self.a2b_many(&[x])?.pop().expect("one output"))
    }

    /// Sign bit of each element as a width-1 boolean share.
    pub fn msb(&mut self, x: &ArithShare) -> Result<BoolShare> {
        Ok(self.msb_many(&[x])?.pop().expect("one output"))
    }

    pub fn msb_many(&mut self, xs: &[&ArithShare]) -> Result<Vec<BoolShare>> {
        Ok(self
            .a2b_many(xs)?
            .into_iter()
            .map(|b| b.extract_bit(63))
            .collect())
    }

    /// `[x < s]` for a public real `s`.
    pub fn lt_const(&mut self, x: &ArithShare, s: f64) -> Result<BoolShare> {
        Ok(self.lt_const_many(x, &[s])?.pop().expect("one output"))
    }

    /// `[x < s_j]` for every point, sharing one comparison circuit. The
    /// points are rounded up onto the fixed-point grid, which keeps the
    /// comparison exact for encoded inputs.
    pub fn lt_const_many(&mut self, x: &ArithShare, points: &[f64]) -> Result<Vec<BoolShare>> {
        let bits = if x.is_scaled() { self.frac_bits() } else { 0 };
        let mut diffs = Vec::with_capacity(points.len());
        for &s in points {
            let scaled = (s * (bits as f64).exp2()).ceil();
            let t = encode_with(scaled, 0)?;
            let c = RingTensor::scalar(t.0, x.is_scaled());
            diffs.push(x.sub_public(&c)?);
        }
        let refs: Vec<&ArithShare> = diffs.iter().collect();
        self.msb_many(&refs)
    }

    /// Products `b_k * y_k` of shared bits with arithmetic shares, or the
    /// bit itself as an unscaled 0/1 value when the target is `None`. Two
    /// rounds for the whole batch.
    pub fn inject_many(
        &mut self,
        bits: &[&BoolShare],
        targets: &[Option<&ArithShare>],
    ) -> Result<Vec<ArithShare>> {
        if bits.len() != targets.len() {
            return Err(Error::InvalidArgument(format!(
                "{} bits for {} targets",
                bits.len(),
                targets.len()
            )));
        }
        let me = self.party();
        let mut comps: Vec<[ArithShare; 3]> = Vec::with_capacity(bits.len());
        for (b, t) in bits.iter().zip(targets) {
            if b.bit_width != 1 {
                return Err(Error::InvalidArgument(
                    "bit injection needs width-1 shares".into(),
                ));
            }
            if let Some(t) = t {
                if t.shape() != b.shape() {
                    return Err(Error::ShapeMismatch(b.shape().to_vec(), t.shape().to_vec()));
                }
            }
            let c = |j| ArithShare::component(me, j, &b.first, &b.second);
            comps.push([c(0), c(1), c(2)]);
        }

        // round 1: b0*b1 and b2*y
        let mut round1: Vec<(&ArithShare, &ArithShare)> = Vec::new();
        for (k, c) in comps.iter().enumerate() {
            round1.push((&c[0], &c[1]));
            if let Some(t) = targets[k] {
                round1.push((&c[2], t));
            }
        }
        let r1 = self.mul_many(&round1)?;
        let mut it = r1.into_iter();
        let mut es = Vec::with_capacity(bits.len());
        let mut ts = Vec::with_capacity(bits.len());
        for (k, c) in comps.iter().enumerate() {
            let b01 = it.next().unwrap();
            // e = b0 xor b1
            es.push(c[0].add(&c[1])?.sub(&b01.mul_public_int(2))?);
            ts.push(targets[k].map(|_| it.next().unwrap()));
        }

        // round 2: e*y and e*t, or e*b2 for a plain conversion
        let mut round2: Vec<(&ArithShare, &ArithShare)> = Vec::new();
        for (k, e) in es.iter().enumerate() {
            match (targets[k], &ts[k]) {
                (Some(y), Some(t)) => {
                    round2.push((e, y));
                    round2.push((e, t));
                }
                _ => round2.push((e, &comps[k][2])),
            }
        }
        let r2 = self.mul_many(&round2)?;
        let mut it = r2.into_iter();
        let mut out = Vec::with_capacity(bits.len());
        for k in 0..bits.len() {
            let v = match (targets[k], &ts[k]) {
                (Some(_), Some(t)) => {
                    let ey = it.next().unwrap();
                    let et = it.next().unwrap();
                    ey.add(t)?.sub(&et.mul_public_int(2))?
                }
                _ => {
                    let eb = it.next().unwrap();
                    es[k].add(&comps[k][2])?.sub(&eb.mul_public_int(2))?
                }
            };
            self.trace("inject", v.shape());
            self.audit_arith("inject", &v);
            out.push(v);
        }
        Ok(out)
    }

    /// `b * y` for a shared bit and an arithmetic share.
    pub fn bit_inject(&mut self, b: &BoolShare, y: &ArithShare) -> Result<ArithShare> {
        Ok(self
            .inject_many(&[b], &[Some(y)])?
            .pop()
            .expect("one output"))
    }

    /// A shared bit as an unscaled arithmetic 0/1.
    pub fn b2a_bit(&mut self, b: &BoolShare) -> Result<ArithShare> {
        Ok(self.inject_many(&[b], &[None])?.pop().expect("one output"))
    }

    /// Opens a boolean share to everyone.
    pub fn reveal_bool(&mut self, x: &BoolShare) -> Result<RingTensor> {
        let me = self.party();
        let n = x.len();
        self.net.send_tensor(me.prev(), &x.second)?;
        if self.checked_reveal() {
            self.net.send_tensor(me.next(), &x.first)?;
        }
        self.barrier()?;
        let missing = self.net.recv_words(me.next(), n)?;
        if self.checked_reveal() {
            let copy = self.net.recv_words(me.prev(), n)?;
            if copy != missing {
                return Err(Error::Integrity(format!(
                    "{} and {} disagree on the share {me} is missing",
                    me.next(),
                    me.prev()
                )));
            }
        }
        let data = (0..n)
            .map(|k| x.first.data()[k] ^ x.second.data()[k] ^ missing[k])
            .collect();
        self.trace("reveal-bool", x.shape());
        RingTensor::new(x.shape().to_vec(), data, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, SimOptions};

    #[test]
    fn not_flips_within_width() {
        let p = PartyId::new(0).unwrap();
        let b = BoolShare::public(p, &RingTensor::from_i64(&[2], &[0, 1]).unwrap(), 1).unwrap();
        assert_eq!(b.not().first().data(), &[1, 0]);
    }

    #[test]
    fn width_is_validated() {
        let p = PartyId::new(1).unwrap();
        let t = RingTensor::zeros(&[1], false);
        assert!(BoolShare::from_parts(p, t.clone(), t, 0).is_err());
    }

    #[test]
    fn and_truth_table() {
        let out = simulate(&SimOptions::default(), |s| {
            let a = RingTensor::from_i64(&[4], &[0, 0, 1, 1])?;
            let b = RingTensor::from_i64(&[4], &[0, 1, 0, 1])?;
            let xa = BoolShare::public(s.party(), &a, 1)?;
            let xb = BoolShare::public(s.party(), &b, 1)?;
            let c = s.and(&xa, &xb)?;
            s.reveal_bool(&c)
        })
        .unwrap();
        assert_eq!(out.outputs[0].data(), &[0, 0, 0, 1]);
    }

    #[test]
    fn a2b_matches_value() {
        let vals: Vec<i64> = vec![0, 1, -1, i64::MAX, i64::MIN, 123456789, -987654321];
        let out = simulate(&SimOptions::default(), |s| {
            let t = RingTensor::from_i64(&[vals.len()], &vals)?;
            let x = s.share_from(PartyId::new(2)?, &t)?;
            let b = s.a2b(&x)?;
            s.reveal_bool(&b)
        })
        .unwrap();
        let expect: Vec<u64> = vals.iter().map(|&v| v as u64).collect();
        assert_eq!(out.outputs[1].data(), expect.as_slice());
    }
}
