//! Replicated arithmetic sharing over Z_2^64.
//!
//! A secret `x = x_0 + x_1 + x_2` is held with party `i` keeping the pair
//! `(x_i, x_{i+1 mod 3})`. Linear operations are local. Products are
//! computed as a 3-out-of-3 sharing, masked with a pseudorandom zero
//! sharing, and re-shared by sending `z_i` to party `i-1`.
//!
//! Fixed-point truncation is fused into the product: instead of re-sharing,
//! party 2 receives the product masked by a value `r` that only parties 0
//! and 1 know, shifts it in the clear and re-shares it back. Scaled products
//! therefore take two rounds and are accurate to one unit in the last place
//! provided the double-scaled magnitude stays below 2^61.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::ring::{concat_flat, encode_with, split_flat, RingTensor};
use crate::session::Session;
use crate::transport::PartyId;

/// Offset added before opening a masked value to party 2; keeps the opened
/// word positive.
const OPEN_OFFSET: u64 = 1 << 62;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArithShare {
    owner: PartyId,
    first: RingTensor,
    second: RingTensor,
}

impl ArithShare {
    pub fn from_parts(owner: PartyId, first: RingTensor, second: RingTensor) -> Result<Self> {
        if first.shape() != second.shape() {
            return Err(Error::ShapeMismatch(
                first.shape().to_vec(),
                second.shape().to_vec(),
            ));
        }
        if first.is_scaled() != second.is_scaled() {
            return Err(Error::ScaleMismatch);
        }
        Ok(ArithShare {
            owner,
            first,
            second,
        })
    }

    pub(crate) fn from_parts_unchecked(
        owner: PartyId,
        first: RingTensor,
        second: RingTensor,
    ) -> Self {
        debug_assert_eq!(first.shape(), second.shape());
        let scaled = first.is_scaled();
        ArithShare {
            owner,
            first,
            second: second.with_scaled(scaled),
        }
    }

    /// Sharing of a public value: it sits in component 0, which parties 0
    /// and 2 hold.
    pub fn public(owner: PartyId, value: &RingTensor) -> Self {
        let zero = RingTensor::zeros(value.shape(), value.is_scaled());
        let (first, second) = match owner.index() {
            0 => (value.clone(), zero),
            1 => (zero.clone(), zero),
            _ => (zero, value.clone()),
        };
        ArithShare {
            owner,
            first,
            second,
        }
    }

    /// Sharing whose only non-zero component is `j`, taken from this party's
    /// own pair. Parties that do not hold component `j` get zeros.
    pub(crate) fn component(
        owner: PartyId,
        j: usize,
        first: &RingTensor,
        second: &RingTensor,
    ) -> Self {
        let zero = RingTensor::zeros(first.shape(), first.is_scaled());
        let (f, s) = if j == owner.index() {
            (first.clone(), zero)
        } else if j == owner.next().index() {
            (zero, second.clone().with_scaled(first.is_scaled()))
        } else {
            (zero.clone(), zero)
        };
        ArithShare {
            owner,
            first: f,
            second: s,
        }
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

    pub fn is_scaled(&self) -> bool {
        self.first.is_scaled()
    }

    pub fn with_scaled(self, is_scaled: bool) -> Self {
        ArithShare {
            owner: self.owner,
            first: self.first.with_scaled(is_scaled),
            second: self.second.with_scaled(is_scaled),
        }
    }

    fn check_compatible(&self, other: &ArithShare) -> Result<()> {
        if self.is_scaled() != other.is_scaled() {
            return Err(Error::ScaleMismatch);
        }
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch(
                self.shape().to_vec(),
                other.shape().to_vec(),
            ));
        }
        Ok(())
    }

    pub fn add(&self, other: &ArithShare) -> Result<ArithShare> {
        self.check_compatible(other)?;
        Ok(ArithShare {
            owner: self.owner,
            first: self.first.add(&other.first)?,
            second: self.second.add(&other.second)?,
        })
    }

    pub fn sub(&self, other: &ArithShare) -> Result<ArithShare> {
        self.check_compatible(other)?;
        Ok(ArithShare {
            owner: self.owner,
            first: self.first.sub(&other.first)?,
            second: self.second.sub(&other.second)?,
        })
    }

    pub fn neg(&self) -> ArithShare {
        ArithShare {
            owner: self.owner,
            first: self.first.neg(),
            second: self.second.neg(),
        }
    }

    /// Adds a public tensor (or scalar) into component 0.
    pub fn add_public(&self, value: &RingTensor) -> Result<ArithShare> {
        if value.is_scaled() != self.is_scaled() {
            return Err(Error::ScaleMismatch);
        }
        let mut out = self.clone();
        match self.owner.index() {
            0 => out.first = self.first.add(value)?,
            2 => out.second = self.second.add(value)?,
            _ => {}
        }
        Ok(out)
    }

    pub fn sub_public(&self, value: &RingTensor) -> Result<ArithShare> {
        self.add_public(&value.neg())
    }

    /// Multiplies by a public integer; no rescaling needed.
    pub fn mul_public_int(&self, k: i64) -> ArithShare {
        let k = k as u64;
        ArithShare {
            owner: self.owner,
            first: self.first.map_words(|w| w.wrapping_mul(k)),
            second: self.second.map_words(|w| w.wrapping_mul(k)),
        }
    }

    /// Elementwise product with a public unscaled tensor.
    pub fn mul_public_words(&self, k: &RingTensor) -> Result<ArithShare> {
        Ok(ArithShare {
            owner: self.owner,
            first: self.first.mul(k)?.with_scaled(self.is_scaled()),
            second: self.second.mul(k)?.with_scaled(self.is_scaled()),
        })
    }

    pub fn select_rows(&self, rows: &[usize]) -> Result<ArithShare> {
        Ok(ArithShare {
            owner: self.owner,
            first: self.first.select_rows(rows)?,
            second: self.second.select_rows(rows)?,
        })
    }

    pub fn transpose(&self) -> Result<ArithShare> {
        Ok(ArithShare {
            owner: self.owner,
            first: self.first.transpose()?,
            second: self.second.transpose()?,
        })
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<ArithShare> {
        Ok(ArithShare {
            owner: self.owner,
            first: self.first.clone().reshape(shape)?,
            second: self.second.clone().reshape(shape)?,
        })
    }

    /// Flattens and concatenates shares with equal scale into one 1-D share.
    pub fn concat(parts: &[&ArithShare]) -> Result<ArithShare> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("concat of nothing".into()))?;
        if parts.iter().any(|p| p.is_scaled() != first.is_scaled()) {
            return Err(Error::ScaleMismatch);
        }
        let f: Vec<&RingTensor> = parts.iter().map(|p| &p.first).collect();
        let s: Vec<&RingTensor> = parts.iter().map(|p| &p.second).collect();
        Ok(ArithShare {
            owner: first.owner,
            first: concat_flat(&f),
            second: concat_flat(&s),
        })
    }

    /// Cuts a flat share into pieces of the given shapes.
    pub fn split(&self, shapes: &[Vec<usize>]) -> Result<Vec<ArithShare>> {
        let f = split_flat(self.first.data(), shapes, self.is_scaled())?;
        let s = split_flat(self.second.data(), shapes, self.is_scaled())?;
        Ok(f.into_iter()
            .zip(s)
            .map(|(first, second)| ArithShare {
                owner: self.owner,
                first,
                second,
            })
            .collect())
    }
}

/// One product (or truncation) waiting for its communication phase. The
/// partial is this party's additive 3-out-of-3 share of the result.
pub(crate) struct ProductJob {
    pub partial: Vec<u64>,
    pub shape: Vec<usize>,
    pub is_scaled: bool,
    /// Right shift applied while re-sharing, if any.
    pub shift: Option<u32>,
    /// Party 1's partial is known to be zero and is not sent.
    pub p1_silent: bool,
}

/// Public coefficients for [`Session::linear_combination`]: either one
/// value broadcast over the tensor or one value per element.
#[derive(Clone, Debug, PartialEq)]
pub enum Coeffs {
    Scalar(f64),
    Elementwise(Vec<f64>),
}

impl Coeffs {
    fn encoded(&self, n: usize, bits: u32) -> Result<Vec<u64>> {
        match self {
            Coeffs::Scalar(c) => Ok(vec![encode_with(*c, bits)?.0; n]),
            Coeffs::Elementwise(v) => {
                if v.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "{} coefficients for {n} elements",
                        v.len()
                    )));
                }
                v.iter()
                    .map(|&c| encode_with(c, bits).map(|r| r.0))
                    .collect()
            }
        }
    }
}

impl Session {
    /// Shares a private input held by `owner`. The owner passes
    /// `Some(value)`; the others pass `None` and the expected shape.
    pub fn share(
        &mut self,
        owner: PartyId,
        input: Option<&RingTensor>,
        shape: &[usize],
        is_scaled: bool,
    ) -> Result<ArithShare> {
        use rand::RngCore;
        let me = self.party();
        let n: usize = shape.iter().product();
        let (first, second) = if me == owner {
            let value = input.ok_or_else(|| {
                Error::InvalidArgument(format!("{me} owns the input but supplied none"))
            })?;
            if value.shape() != shape {
                return Err(Error::ShapeMismatch(value.shape().to_vec(), shape.to_vec()));
            }
            let mut c = [vec![0u64; n], vec![0u64; n], vec![0u64; n]];
            for k in 0..n {
                let a = self.local_rng.next_u64();
                let b = self.local_rng.next_u64();
                c[0][k] = a;
                c[1][k] = b;
                c[2][k] = value.data()[k].wrapping_sub(a).wrapping_sub(b);
            }
            let i = me.index();
            let (n1, n2) = (me.next().index(), me.prev().index());
            let mut to_next = c[n1].clone();
            to_next.extend_from_slice(&c[n2]);
            let mut to_prev = c[n2].clone();
            to_prev.extend_from_slice(&c[i]);
            self.net.send_words(me.next(), &to_next)?;
            self.net.send_words(me.prev(), &to_prev)?;
            self.barrier()?;
            (std::mem::take(&mut c[i]), std::mem::take(&mut c[n1]))
        } else {
            self.barrier()?;
            let mut w = self.net.recv_words(owner, 2 * n)?;
            let second = w.split_off(n);
            (w, second)
        };
        let out = ArithShare::from_parts_unchecked(
            me,
            RingTensor::new(shape.to_vec(), first, is_scaled)?,
            RingTensor::new(shape.to_vec(), second, is_scaled)?,
        );
        self.trace("share", shape);
        self.audit_arith("share", &out);
        Ok(out)
    }

    /// [`Session::share`] where every caller can see the value (tests and
    /// simulations); only the owner's copy is used.
    pub fn share_from(&mut self, owner: PartyId, value: &RingTensor) -> Result<ArithShare> {
        let input = (self.party() == owner).then_some(value);
        self.share(owner, input, value.shape(), value.is_scaled())
    }

    pub fn public_share(&self, value: &RingTensor) -> ArithShare {
        ArithShare::public(self.party(), value)
    }

    /// Opens `x` to all parties in one round.
    pub fn reveal(&mut self, x: &ArithShare) -> Result<RingTensor> {
        Ok(self.reveal_many(&[x])?.pop().expect("one output"))
    }

    /// Opens several shares in a single round.
    pub fn reveal_many(&mut self, xs: &[&ArithShare]) -> Result<Vec<RingTensor>> {
        let me = self.party();
        let raw: Vec<ArithShare> = xs.iter().map(|x| (*x).clone().with_scaled(false)).collect();
        let joined = ArithShare::concat(&raw.iter().collect::<Vec<_>>())?;
        let n = joined.len();
        self.net.send_tensor(me.prev(), &joined.second)?;
        if self.checked_reveal() {
            self.net.send_tensor(me.next(), &joined.first)?;
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
        let sum: Vec<u64> = (0..n)
            .map(|k| {
                joined.first.data()[k]
                    .wrapping_add(joined.second.data()[k])
                    .wrapping_add(missing[k])
            })
            .collect();
        self.trace("reveal", &[n]);
        let mut out = Vec::with_capacity(xs.len());
        let mut off = 0;
        for x in xs {
            let k = x.len();
            out.push(RingTensor::new(
                x.shape().to_vec(),
                sum[off..off + k].to_vec(),
                x.is_scaled(),
            )?);
            off += k;
        }
        Ok(out)
    }

    /// Opens `x` to party `to` only. Returns `Some` at `to`.
    pub fn reveal_to(&mut self, x: &ArithShare, to: PartyId) -> Result<Option<RingTensor>> {
        let me = self.party();
        let n = x.len();
        if me == to.next() {
            self.net.send_tensor(to, &x.second)?;
        }
        if self.checked_reveal() && me == to.prev() {
            self.net.send_tensor(to, &x.first)?;
        }
        self.barrier()?;
        self.trace("reveal-to", x.shape());
        if me != to {
            return Ok(None);
        }
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
        let sum = par::zip_map(
            Exec::auto(n),
            &x.first.add(&x.second)?.into_data(),
            &missing,
            u64::wrapping_add,
        );
        Ok(Some(RingTensor::new(
            x.shape().to_vec(),
            sum,
            x.is_scaled(),
        )?))
    }

    /// Re-shares a batch of 3-out-of-3 partials. Plain jobs take one round;
    /// if any job needs a shift the batch takes two.
    pub(crate) fn finish_products(&mut self, jobs: Vec<ProductJob>) -> Result<Vec<ArithShare>> {
        let me = self.party();
        let i = me.index();

        let plain: Vec<usize> = (0..jobs.len())
            .filter(|&j| jobs[j].shift.is_none())
            .collect();
        let trunc: Vec<usize> = (0..jobs.len())
            .filter(|&j| jobs[j].shift.is_some())
            .collect();
        let plain_len: usize = plain.iter().map(|&j| jobs[j].partial.len()).sum();
        let trunc_len: usize = trunc.iter().map(|&j| jobs[j].partial.len()).sum();
        let p1_len: usize = trunc
            .iter()
            .filter(|&&j| !jobs[j].p1_silent)
            .map(|&j| jobs[j].partial.len())
            .sum();

        let plain_words: Vec<u64> = plain
            .iter()
            .flat_map(|&j| jobs[j].partial.iter().copied())
            .collect();
        let mask = self.draw_trunc_mask(trunc_len);
        let blind = self.draw_trunc_blind(trunc_len);

        // round A
        match i {
            0 => {
                let mut msg = plain_words.clone();
                let r = mask.as_ref().expect("party 0 holds k_1");
                let mut off = 0;
                for &j in &trunc {
                    for &z in &jobs[j].partial {
                        msg.push(z.wrapping_add(r[off]).wrapping_add(OPEN_OFFSET));
                        off += 1;
                    }
                }
                if !msg.is_empty() {
                    self.net.send_words(PartyId::ALL[2], &msg)?;
                }
            }
            1 => {
                if plain_len > 0 {
                    self.net.send_words(PartyId::ALL[0], &plain_words)?;
                }
                if p1_len > 0 {
                    let msg: Vec<u64> = trunc
                        .iter()
                        .filter(|&&j| !jobs[j].p1_silent)
                        .flat_map(|&j| jobs[j].partial.iter().copied())
                        .collect();
                    self.net.send_words(PartyId::ALL[2], &msg)?;
                }
            }
            _ => {
                if plain_len > 0 {
                    self.net.send_words(PartyId::ALL[1], &plain_words)?;
                }
            }
        }
        self.barrier()?;

        let mut from_next_plain = Vec::new();
        let mut opened_p0 = Vec::new();
        let mut opened_p1 = Vec::new();
        match i {
            0 | 1 => {
                if plain_len > 0 {
                    from_next_plain = self.net.recv_words(me.next(), plain_len)?;
                }
            }
            _ => {
                if plain_len + trunc_len > 0 {
                    let mut w = self
                        .net
                        .recv_words(PartyId::ALL[0], plain_len + trunc_len)?;
                    opened_p0 = w.split_off(plain_len);
                    from_next_plain = w;
                }
                if p1_len > 0 {
                    opened_p1 = self.net.recv_words(PartyId::ALL[1], p1_len)?;
                }
            }
        }

        // round B: party 2 shifts the opened value and hands component 0 to party 0
        let mut comp0: Vec<u64> = Vec::new();
        if trunc_len > 0 {
            if i == 2 {
                let m = blind.as_ref().expect("party 2 holds k_2");
                let mut off = 0;
                let mut off1 = 0;
                comp0.reserve(trunc_len);
                for &j in &trunc {
                    let d = jobs[j].shift.unwrap();
                    for &z in &jobs[j].partial {
                        let mut c = z.wrapping_add(opened_p0[off]);
                        if !jobs[j].p1_silent {
                            c = c.wrapping_add(opened_p1[off1]);
                            off1 += 1;
                        }
                        let v = c >> d;
                        comp0.push(v.wrapping_sub(OPEN_OFFSET >> d).wrapping_sub(m[off]));
                        off += 1;
                    }
                }
                self.net.send_words(PartyId::ALL[0], &comp0)?;
            }
            self.barrier()?;
            if i == 0 {
                comp0 = self.net.recv_words(PartyId::ALL[2], trunc_len)?;
            }
        }

        let mut out: Vec<Option<ArithShare>> = (0..jobs.len()).map(|_| None).collect();
        let mut off = 0;
        for &j in &plain {
            let n = jobs[j].partial.len();
            let first = RingTensor::new(
                jobs[j].shape.clone(),
                jobs[j].partial.clone(),
                jobs[j].is_scaled,
            )?;
            let second = RingTensor::new(
                jobs[j].shape.clone(),
                from_next_plain[off..off + n].to_vec(),
                jobs[j].is_scaled,
            )?;
            off += n;
            out[j] = Some(ArithShare::from_parts_unchecked(me, first, second));
        }
        let mut off = 0;
        for &j in &trunc {
            let n = jobs[j].partial.len();
            let d = jobs[j].shift.unwrap();
            let neg_shifted = |r: &[u64]| -> Vec<u64> {
                r[off..off + n]
                    .iter()
                    .map(|&w| (((w as i64) >> d) as u64).wrapping_neg())
                    .collect()
            };
            let (f, s) = match i {
                0 => (
                    comp0[off..off + n].to_vec(),
                    neg_shifted(mask.as_ref().unwrap()),
                ),
                1 => (
                    neg_shifted(mask.as_ref().unwrap()),
                    blind.as_ref().unwrap()[off..off + n].to_vec(),
                ),
                _ => (
                    blind.as_ref().unwrap()[off..off + n].to_vec(),
                    comp0[off..off + n].to_vec(),
                ),
            };
            off += n;
            out[j] = Some(ArithShare::from_parts_unchecked(
                me,
                RingTensor::new(jobs[j].shape.clone(), f, jobs[j].is_scaled)?,
                RingTensor::new(jobs[j].shape.clone(), s, jobs[j].is_scaled)?,
            ));
        }
        Ok(out.into_iter().map(Option::unwrap).collect())
    }

    /// Elementwise product. Two scaled operands are rescaled in the same
    /// exchange (two rounds); otherwise one round.
    pub fn mul(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        Ok(self.mul_many(&[(x, y)])?.pop().expect("one output"))
    }

    /// Independent products sharing the same rounds.
    pub fn mul_many(&mut self, pairs: &[(&ArithShare, &ArithShare)]) -> Result<Vec<ArithShare>> {
        let f = self.frac_bits();
        let mut jobs = Vec::with_capacity(pairs.len());
        for (x, y) in pairs {
            if x.shape() != y.shape() {
                return Err(Error::ShapeMismatch(x.shape().to_vec(), y.shape().to_vec()));
            }
            let n = x.len();
            let alpha = self.zero_words(n);
            let (xf, xs) = (x.first.data(), x.second.data());
            let (yf, ys) = (y.first.data(), y.second.data());
            let mut z = vec![0u64; n];
            par::for_each_chunk(Exec::auto(n), &mut z, 4096, |ci, chunk| {
                let base = ci * 4096;
                for (k, out) in chunk.iter_mut().enumerate() {
                    let t = base + k;
                    *out = xf[t]
                        .wrapping_mul(yf[t].wrapping_add(ys[t]))
                        .wrapping_add(xs[t].wrapping_mul(yf[t]))
                        .wrapping_add(alpha[t]);
                }
            });
            let both = x.is_scaled() && y.is_scaled();
            jobs.push(ProductJob {
                partial: z,
                shape: x.shape().to_vec(),
                is_scaled: x.is_scaled() || y.is_scaled(),
                shift: both.then_some(f),
                p1_silent: false,
            });
        }
        let out = self.finish_products(jobs)?;
        for o in &out {
            self.trace("mul", o.shape());
            self.audit_arith("mul", o);
        }
        Ok(out)
    }

    /// Matrix product of shared 2-D operands; one re-sharing regardless of
    /// size, with truncation fused when both operands are scaled.
    pub fn matmul(&mut self, x: &ArithShare, y: &ArithShare) -> Result<ArithShare> {
        let y_sum = y.first.add(&y.second)?;
        let mut z = x.first.matmul(&y_sum)?;
        let cross = x.second.matmul(&y.first)?;
        let alpha = self.zero_words(z.len());
        let n = z.len();
        let zd = z.data_mut();
        for k in 0..n {
            zd[k] = zd[k].wrapping_add(cross.data()[k]).wrapping_add(alpha[k]);
        }
        let both = x.is_scaled() && y.is_scaled();
        let shape = z.shape().to_vec();
        let job = ProductJob {
            partial: z.into_data(),
            shape,
            is_scaled: x.is_scaled() || y.is_scaled(),
            shift: both.then_some(self.frac_bits()),
            p1_silent: false,
        };
        let out = self.finish_products(vec![job])?.pop().expect("one output");
        self.trace("matmul", out.shape());
        self.audit_arith("matmul", &out);
        Ok(out)
    }

    /// Drops `frac_bits` fractional bits from a doubly scaled sharing.
    pub fn truncate(&mut self, x: &ArithShare) -> Result<ArithShare> {
        let f = self.frac_bits();
        Ok(self.truncate_by(x, f)?.with_scaled(true))
    }

    /// Arithmetic right shift by `bits` of a shared value, accurate to one
    /// unit. Requires `|x| < 2^61`. Two rounds.
    pub fn truncate_by(&mut self, x: &ArithShare, bits: u32) -> Result<ArithShare> {
        if bits >= 62 {
            return Err(Error::InvalidArgument(format!(
                "shift {bits} must be below 62"
            )));
        }
        let partial = match self.party().index() {
            0 => x.first.add(&x.second)?.into_data(),
            1 => vec![0; x.len()],
            _ => x.first.data().to_vec(),
        };
        let job = ProductJob {
            partial,
            shape: x.shape().to_vec(),
            is_scaled: x.is_scaled(),
            shift: Some(bits),
            p1_silent: true,
        };
        let out = self.finish_products(vec![job])?.pop().expect("one output");
        self.trace("truncate", out.shape());
        self.audit_arith("truncate", &out);
        Ok(out)
    }

    /// `sum_j c_j * x_j + constant` for public real coefficients. The
    /// coefficients are encoded with `coeff_bits` fractional bits and the
    /// sum is truncated by the same amount, so small coefficients can use
    /// more precision than the data. All terms must share shape and scale.
    pub fn linear_combination(
        &mut self,
        terms: &[(&ArithShare, Coeffs)],
        constant: Option<&Coeffs>,
        coeff_bits: u32,
    ) -> Result<ArithShare> {
        let (head, _) = terms
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty linear combination".into()))?;
        let shape = head.shape().to_vec();
        let scaled = head.is_scaled();
        let n = head.len();
        let mut first = vec![0u64; n];
        let mut second = vec![0u64; n];
        for (x, c) in terms {
            if x.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch(x.shape().to_vec(), shape.clone()));
            }
            if x.is_scaled() != scaled {
                return Err(Error::ScaleMismatch);
            }
            let enc = c.encoded(n, coeff_bits)?;
            for k in 0..n {
                first[k] = first[k].wrapping_add(enc[k].wrapping_mul(x.first.data()[k]));
                second[k] = second[k].wrapping_add(enc[k].wrapping_mul(x.second.data()[k]));
            }
        }
        if let Some(c) = constant {
            let data_bits = if scaled { self.frac_bits() } else { 0 };
            let enc = c.encoded(n, data_bits + coeff_bits)?;
            match self.party().index() {
                0 => first
                    .iter_mut()
                    .zip(&enc)
                    .for_each(|(a, b)| *a = a.wrapping_add(*b)),
                2 => second
                    .iter_mut()
                    .zip(&enc)
                    .for_each(|(a, b)| *a = a.wrapping_add(*b)),
                _ => {}
            }
        }
        let acc = ArithShare::from_parts_unchecked(
            self.party(),
            RingTensor::new(shape.clone(), first, scaled)?,
            RingTensor::new(shape, second, scaled)?,
        );
        if coeff_bits == 0 {
            return Ok(acc);
        }
        self.truncate_by(&acc, coeff_bits)
    }

    /// Product with a public real. Scaled inputs are rescaled (two rounds);
    /// an unscaled input just becomes scaled.
    pub fn mul_public(&mut self, x: &ArithShare, c: f64) -> Result<ArithShare> {
        self.mul_public_coeffs(x, Coeffs::Scalar(c))
    }

    pub fn mul_public_coeffs(&mut self, x: &ArithShare, c: Coeffs) -> Result<ArithShare> {
        let f = self.frac_bits();
        if x.is_scaled() {
            return self.linear_combination(&[(x, c)], None, f);
        }
        let enc = RingTensor::new(x.shape().to_vec(), c.encoded(x.len(), f)?, false)?;
        Ok(x.mul_public_words(&enc)?.with_scaled(true))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, SimOptions};

    #[test]
    fn public_share_sits_in_component_zero() {
        let v = RingTensor::from_i64(&[2], &[5, 6]).unwrap();
        let shares: Vec<_> = PartyId::ALL
            .iter()
            .map(|&p| ArithShare::public(p, &v))
            .collect();
        assert_eq!(shares[0].first().data(), &[5, 6]);
        assert_eq!(shares[2].second().data(), &[5, 6]);
        assert_eq!(shares[1].first().data(), &[0, 0]);
    }

    #[test]
    fn add_public_requires_scale_match() {
        let p = PartyId::new(0).unwrap();
        let x = ArithShare::public(p, &RingTensor::from_i64(&[1], &[1]).unwrap());
        let scaled = RingTensor::scalar(1, true);
        assert!(matches!(x.add_public(&scaled), Err(Error::ScaleMismatch)));
    }

    #[test]
    fn share_and_reveal_scalar_shape() {
        let out = simulate(&SimOptions::default(), |s| {
            let v = RingTensor::scalar(41, false);
            let x = s.share_from(PartyId::new(1)?, &v)?;
            s.reveal(&x)
        })
        .unwrap();
        for o in &out.outputs {
            assert_eq!(o.data(), &[41]);
            assert!(o.shape().is_empty());
        }
    }

    #[test]
    fn reveal_to_single_party() {
        let out = simulate(&SimOptions::default(), |s| {
            let v = RingTensor::from_i64(&[3], &[1, -2, 3]).unwrap();
            let x = s.share_from(PartyId::new(0)?, &v)?;
            s.reveal_to(&x, PartyId::new(2)?)
        })
        .unwrap();
        assert!(out.outputs[0].is_none());
        assert!(out.outputs[1].is_none());
        let t = out.outputs[2].as_ref().unwrap();
        assert_eq!(t.data(), &[1, (-2i64) as u64, 3]);
    }

    #[test]
    fn owner_must_supply_input() {
        let r = simulate(&SimOptions::default(), |s| {
            s.share(PartyId::new(0)?, None, &[2], false)
        });
        assert!(r.is_err());
    }

    #[test]
    fn truncate_by_zero_is_identity() {
        let out = simulate(&SimOptions::default(), |s| {
            let v = RingTensor::from_i64(&[4], &[0, 1, -1, 123456789]).unwrap();
            let x = s.share_from(PartyId::new(0)?, &v)?;
            let t = s.truncate_by(&x, 0)?;
            s.reveal(&t)
        })
        .unwrap();
        assert_eq!(out.outputs[0].data(), &[0, 1, u64::MAX, 123456789]);
    }
}
