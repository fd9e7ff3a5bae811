//! Arithmetic in Z_2^64 and the fixed-point encoding on top of it.
//!
//! Every word is a `u64` read modulo 2^64; signed reads use two's complement.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::{self, Exec};

/// A single ring element.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RingValue(pub u64);

impl RingValue {
    pub fn signed(self) -> i64 {
        self.0 as i64
    }

    pub fn wrapping_add(self, o: RingValue) -> RingValue {
        RingValue(self.0.wrapping_add(o.0))
    }

    pub fn wrapping_sub(self, o: RingValue) -> RingValue {
        RingValue(self.0.wrapping_sub(o.0))
    }

    pub fn wrapping_mul(self, o: RingValue) -> RingValue {
        RingValue(self.0.wrapping_mul(o.0))
    }

    pub fn wrapping_neg(self) -> RingValue {
        RingValue(self.0.wrapping_neg())
    }
}

pub const DEFAULT_FRAC_BITS: u32 = 16;
pub const MIN_FRAC_BITS: u32 = 8;
pub const MAX_FRAC_BITS: u32 = 24;

/// Fixed-point codec: reals are stored as `round(v * 2^frac_bits) mod 2^64`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedPointCodec {
    frac_bits: u32,
}

impl Default for FixedPointCodec {
    fn default() -> Self {
        FixedPointCodec {
            frac_bits: DEFAULT_FRAC_BITS,
        }
    }
}

impl FixedPointCodec {
    pub fn new(frac_bits: u32) -> Result<Self> {
        if !(MIN_FRAC_BITS..=MAX_FRAC_BITS).contains(&frac_bits) {
            return Err(Error::InvalidArgument(format!(
                "frac_bits must be within {MIN_FRAC_BITS}..={MAX_FRAC_BITS}, got {frac_bits}"
            )));
        }
        Ok(FixedPointCodec { frac_bits })
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// One unit in the last place, 2^-frac_bits.
    pub fn ulp(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn encode(&self, v: f64) -> Result<RingValue> {
        encode_with(v, self.frac_bits)
    }

    pub fn decode(&self, x: RingValue) -> f64 {
        decode_with(x.0, self.frac_bits)
    }

    pub fn encode_slice(&self, vs: &[f64]) -> Result<Vec<u64>> {
        vs.iter()
            .map(|&v| encode_with(v, self.frac_bits).map(|r| r.0))
            .collect()
    }

    pub fn decode_slice(&self, xs: &[u64]) -> Vec<f64> {
        xs.iter().map(|&x| decode_with(x, self.frac_bits)).collect()
    }
}

/// Encodes `v` at an explicit scale of 2^bits.
pub fn encode_with(v: f64, bits: u32) -> Result<RingValue> {
    let limit = (63.0 - bits as f64).exp2();
    if !v.is_finite() || v.abs() >= limit {
        return Err(Error::EncodingOverflow(v));
    }
    let scaled = (v * (bits as f64).exp2()).round();
    Ok(RingValue(scaled as i64 as u64))
}

pub fn decode_with(x: u64, bits: u32) -> f64 {
    (x as i64) as f64 / (bits as f64).exp2()
}

/// Dense row-major tensor of ring elements.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingTensor {
    shape: Vec<usize>,
    data: Vec<u64>,
    is_scaled: bool,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl RingTensor {
    pub fn new(shape: Vec<usize>, data: Vec<u64>, is_scaled: bool) -> Result<Self> {
        if numel(&shape) != data.len() {
            return Err(Error::InvalidArgument(format!(
                "shape {:?} needs {} words, got {}",
                shape,
                numel(&shape),
                data.len()
            )));
        }
        Ok(RingTensor {
            shape,
            data,
            is_scaled,
        })
    }

    pub fn zeros(shape: &[usize], is_scaled: bool) -> Self {
        RingTensor {
            shape: shape.to_vec(),
            data: vec![0; numel(shape)],
            is_scaled,
        }
    }

    pub fn filled(shape: &[usize], word: u64, is_scaled: bool) -> Self {
        RingTensor {
            shape: shape.to_vec(),
            data: vec![word; numel(shape)],
            is_scaled,
        }
    }

    pub fn scalar(word: u64, is_scaled: bool) -> Self {
        RingTensor {
            shape: vec![],
            data: vec![word],
            is_scaled,
        }
    }

    /// Unscaled tensor from signed integers.
    pub fn from_i64(shape: &[usize], values: &[i64]) -> Result<Self> {
        RingTensor::new(
            shape.to_vec(),
            values.iter().map(|&v| v as u64).collect(),
            false,
        )
    }

    /// Scaled tensor from reals.
    pub fn encode(codec: &FixedPointCodec, shape: &[usize], values: &[f64]) -> Result<Self> {
        RingTensor::new(shape.to_vec(), codec.encode_slice(values)?, true)
    }

    pub fn decode(&self, codec: &FixedPointCodec) -> Vec<f64> {
        if self.is_scaled {
            codec.decode_slice(&self.data)
        } else {
            self.data.iter().map(|&x| x as i64 as f64).collect()
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scaled(&self) -> bool {
        self.is_scaled
    }

    pub fn with_scaled(mut self, is_scaled: bool) -> Self {
        self.is_scaled = is_scaled;
        self
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.data.len() {
            return Err(Error::ShapeMismatch(self.shape, shape.to_vec()));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    fn binary<F>(&self, other: &RingTensor, is_scaled: bool, f: F) -> Result<RingTensor>
    where
        F: Fn(u64, u64) -> u64 + Sync + Send,
    {
        if self.shape == other.shape {
            let exec = Exec::auto(self.data.len());
            return Ok(RingTensor {
                shape: self.shape.clone(),
                data: par::zip_map(exec, &self.data, &other.data, f),
                is_scaled,
            });
        }
        if other.shape.is_empty() {
            let b = other.data[0];
            return Ok(RingTensor {
                shape: self.shape.clone(),
                data: par::map(Exec::auto(self.data.len()), &self.data, |a| f(a, b)),
                is_scaled,
            });
        }
        if self.shape.is_empty() {
            let a = self.data[0];
            return Ok(RingTensor {
                shape: other.shape.clone(),
                data: par::map(Exec::auto(other.data.len()), &other.data, |b| f(a, b)),
                is_scaled,
            });
        }
        Err(Error::ShapeMismatch(
            self.shape.clone(),
            other.shape.clone(),
        ))
    }

    pub fn add(&self, other: &RingTensor) -> Result<RingTensor> {
        self.binary(other, self.is_scaled || other.is_scaled, u64::wrapping_add)
    }

    pub fn sub(&self, other: &RingTensor) -> Result<RingTensor> {
        self.binary(other, self.is_scaled || other.is_scaled, u64::wrapping_sub)
    }

    /// Elementwise product. Two scaled operands give a doubly scaled result
    /// that still needs truncation; the flag only records "scaled".
    pub fn mul(&self, other: &RingTensor) -> Result<RingTensor> {
        self.binary(other, self.is_scaled || other.is_scaled, u64::wrapping_mul)
    }

    pub fn neg(&self) -> RingTensor {
        RingTensor {
            shape: self.shape.clone(),
            data: par::map(Exec::auto(self.data.len()), &self.data, u64::wrapping_neg),
            is_scaled: self.is_scaled,
        }
    }

    pub fn xor(&self, other: &RingTensor) -> Result<RingTensor> {
        self.binary(other, false, |a, b| a ^ b)
    }

    pub fn and(&self, other: &RingTensor) -> Result<RingTensor> {
        self.binary(other, false, |a, b| a & b)
    }

    pub fn not(&self) -> RingTensor {
        self.map_words(|a| !a)
    }

    pub fn shl(&self, bits: u32) -> RingTensor {
        self.map_words(move |a| a.checked_shl(bits).unwrap_or(0))
    }

    /// Logical right shift.
    pub fn shr(&self, bits: u32) -> RingTensor {
        self.map_words(move |a| a.checked_shr(bits).unwrap_or(0))
    }

    pub fn map_words<F>(&self, f: F) -> RingTensor
    where
        F: Fn(u64) -> u64 + Sync + Send,
    {
        RingTensor {
            shape: self.shape.clone(),
            data: par::map(Exec::auto(self.data.len()), &self.data, f),
            is_scaled: self.is_scaled,
        }
    }

    /// 2-D product with wrapping arithmetic.
    pub fn matmul(&self, other: &RingTensor) -> Result<RingTensor> {
        let work = self
            .len()
            .saturating_mul(other.shape.get(1).copied().unwrap_or(1));
        self.matmul_with(other, Exec::auto(work))
    }

    pub fn matmul_with(&self, other: &RingTensor, exec: Exec) -> Result<RingTensor> {
        let (m, k) = dims2(&self.shape)?;
        let (k2, n) = dims2(&other.shape)?;
        if k != k2 {
            return Err(Error::ShapeMismatch(
                self.shape.clone(),
                other.shape.clone(),
            ));
        }
        let a = &self.data;
        let b = &other.data;
        let mut out = vec![0u64; m * n];
        if n > 0 {
            par::for_each_chunk(exec, &mut out, n, |i, row| {
                let arow = &a[i * k..(i + 1) * k];
                for (kk, &av) in arow.iter().enumerate() {
                    if av == 0 {
                        continue;
                    }
                    let brow = &b[kk * n..(kk + 1) * n];
                    for (o, &bv) in row.iter_mut().zip(brow) {
                        *o = o.wrapping_add(av.wrapping_mul(bv));
                    }
                }
            });
        }
        Ok(RingTensor {
            shape: vec![m, n],
            data: out,
            is_scaled: self.is_scaled || other.is_scaled,
        })
    }

    pub fn transpose(&self) -> Result<RingTensor> {
        let (m, n) = dims2(&self.shape)?;
        let mut out = vec![0u64; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Ok(RingTensor {
            shape: vec![n, m],
            data: out,
            is_scaled: self.is_scaled,
        })
    }

    /// Gathers rows of a 2-D tensor (or elements of a 1-D one).
    pub fn select_rows(&self, rows: &[usize]) -> Result<RingTensor> {
        let (m, n) = match self.shape.len() {
            1 => (self.shape[0], 1),
            2 => (self.shape[0], self.shape[1]),
            _ => {
                return Err(Error::InvalidArgument(
                    "select_rows needs 1-D or 2-D".into(),
                ))
            }
        };
        let mut data = Vec::with_capacity(rows.len() * n);
        for &r in rows {
            if r >= m {
                return Err(Error::InvalidArgument(format!("row {r} out of range {m}")));
            }
            data.extend_from_slice(&self.data[r * n..(r + 1) * n]);
        }
        let mut shape = self.shape.clone();
        shape[0] = rows.len();
        Ok(RingTensor {
            shape,
            data,
            is_scaled: self.is_scaled,
        })
    }

    /// Stacks 2-D tensors with equal column counts on top of each other.
    pub fn vstack(parts: &[&RingTensor]) -> Result<RingTensor> {
        let first = parts
            .first()
            .ok_or_else(|| Error::InvalidArgument("vstack of nothing".into()))?;
        let (_, n) = dims2(&first.shape)?;
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let (m, n2) = dims2(&p.shape)?;
            if n2 != n || p.is_scaled != first.is_scaled {
                return Err(Error::ShapeMismatch(first.shape.clone(), p.shape.clone()));
            }
            rows += m;
            data.extend_from_slice(&p.data);
        }
        Ok(RingTensor {
            shape: vec![rows, n],
            data,
            is_scaled: first.is_scaled,
        })
    }
}

/// Flattens several tensors into one 1-D tensor (scale flag of the first).
pub fn concat_flat(parts: &[&RingTensor]) -> RingTensor {
    let total = parts.iter().map(|p| p.len()).sum();
    let mut data = Vec::with_capacity(total);
    for p in parts {
        data.extend_from_slice(&p.data);
    }
    RingTensor {
        shape: vec![total],
        data,
        is_scaled: parts.first().map(|p| p.is_scaled).unwrap_or(false),
    }
}

/// Inverse of [`concat_flat`]: cuts `words` into tensors of the given shapes.
pub fn split_flat(
    words: &[u64],
    shapes: &[Vec<usize>],
    is_scaled: bool,
) -> Result<Vec<RingTensor>> {
    let total: usize = shapes.iter().map(|s| numel(s)).sum();
    if total != words.len() {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} words into {total}",
            words.len()
        )));
    }
    let mut off = 0;
    Ok(shapes
        .iter()
        .map(|s| {
            let n = numel(s);
            let t = RingTensor {
                shape: s.clone(),
                data: words[off..off + n].to_vec(),
                is_scaled,
            };
            off += n;
            t
        })
        .collect())
}

pub(crate) fn dims2(shape: &[usize]) -> Result<(usize, usize)> {
    match shape {
        [m, n] => Ok((*m, *n)),
        _ => Err(Error::InvalidArgument(format!(
            "expected a 2-D shape, got {shape:?}"
        ))),
    }
}
