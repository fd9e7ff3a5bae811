#![allow(dead_code)]

use aby3_core::{simulate, FixedPointCodec, PartyId, Result, RingTensor, Session, SimOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub const P0: PartyId = PartyId::ALL[0];
pub const P1: PartyId = PartyId::ALL[1];
pub const P2: PartyId = PartyId::ALL[2];

pub fn codec() -> FixedPointCodec {
    FixedPointCodec::default()
}

pub fn ulp() -> f64 {
    codec().ulp()
}

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn enc(shape: &[usize], v: &[f64]) -> RingTensor {
    RingTensor::encode(&codec(), shape, v).unwrap()
}

/// Values as the ring actually stores them.
pub fn on_grid(v: &[f64]) -> Vec<f64> {
    let c = codec();
    v.iter().map(|&x| c.decode(c.encode(x).unwrap())).collect()
}

/// Runs `f` at all three parties and returns party 0's output after
/// checking that every party computed the same thing.
pub fn run<R, F>(f: F) -> R
where
    R: Send + PartialEq + std::fmt::Debug,
    F: Fn(&mut Session) -> Result<R> + Sync,
{
    let mut out = simulate(&SimOptions::default(), f).unwrap().outputs;
    let first = out.remove(0);
    for o in &out {
        assert_eq!(o, &first);
    }
    first
}

/// Rounds spent by `f` at party 0.
pub fn rounds_of<F>(f: F) -> u64
where
    F: Fn(&mut Session) -> Result<()> + Sync,
{
    let report = simulate(&SimOptions::default(), |s| {
        let before = s.stats().rounds;
        f(s)?;
        Ok(s.stats().rounds - before)
    })
    .unwrap();
    report.outputs[0]
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
