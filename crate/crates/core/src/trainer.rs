//! Class-weighted logistic regression trained by mini-batch SGD on shared
//! data.
//!
//! Everything that steers control flow (batch order, learning rate, shapes,
//! class weights) is public, so the sequence of protocol operations depends
//! only on the data shape and the configuration.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::arith::{ArithShare, Coeffs};
use crate::error::{Error, Result};
use crate::piecewise::SigmoidKind;
use crate::ring::{FixedPointCodec, RingTensor, DEFAULT_FRAC_BITS};
use crate::session::Session;
use crate::transport::CommStats;

/// Fractional bits for the step-size coefficients in the weight update.
const UPDATE_COEFF_BITS: u32 = 32;

fn default_batch() -> usize {
    32
}
fn default_iterations() -> usize {
    100
}
fn default_frac_bits() -> u32 {
    DEFAULT_FRAC_BITS
}
fn default_eta0() -> f64 {
    1.0 / 1.2
}
fn default_lambda() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_frac_bits")]
    pub frac_bits: u32,
    #[serde(default)]
    pub sigmoid_kind: SigmoidKind,
    #[serde(default = "default_eta0")]
    pub eta0: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "yes")]
    pub class_weighting: bool,
    #[serde(default)]
    pub seed: u64,
    /// Learn a bias term through an appended constant column.
    #[serde(default = "yes")]
    pub fit_intercept: bool,
    /// Apply the `lambda * w / N` penalty to the gradient.
    #[serde(default = "yes")]
    pub l2: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: default_batch(),
            iterations: default_iterations(),
            frac_bits: default_frac_bits(),
            sigmoid_kind: SigmoidKind::default(),
            eta0: default_eta0(),
            lambda: default_lambda(),
            class_weighting: true,
            seed: 0,
            fit_intercept: true,
            l2: true,
        }
    }
}

impl TrainConfig {
    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        FixedPointCodec::new(self.frac_bits)?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !self.eta0.is_finite() || self.eta0 <= 0.0 {
            return Err(Error::Config(format!(
                "eta0 must be positive, got {}",
                self.eta0
            )));
        }
        if !self.lambda.is_finite() || self.lambda < 0.0 {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        Ok(())
    }

    pub fn check_rows(&self, n: usize) -> Result<()> {
        if self.batch_size > n {
            return Err(Error::Config(format!(
                "batch_size {} exceeds the {n} available rows",
                self.batch_size
            )));
        }
        Ok(())
    }

    pub fn codec(&self) -> Result<FixedPointCodec> {
        FixedPointCodec::new(self.frac_bits)
    }
}

/// `eta0 / (1 + lambda * eta0 * t)`.
pub fn learning_rate(t: usize, cfg: &TrainConfig) -> f64 {
    cfg.eta0 / (1.0 + cfg.lambda * cfg.eta0 * t as f64)
}

/// Rows of every mini-batch: a seeded permutation walked cyclically.
pub fn batch_schedule(
    n: usize,
    batch_size: usize,
    iterations: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);
    (0..iterations)
        .map(|t| {
            (0..batch_size)
                .map(|k| perm[(t * batch_size + k) % n])
                .collect()
        })
        .collect()
}

/// Public initial weights, uniform in `[-0.01, 0.01]`.
pub fn initial_weights(features: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed_1417_0000_0001);
    (0..features)
        .map(|_| rng.random_range(-0.01..=0.01))
        .collect()
}

/// Per-feature L2 mask; the intercept is not penalized.
pub fn l2_mask(features: usize, fit_intercept: bool) -> Vec<f64> {
    let mut m = vec![1.0; features];
    if fit_intercept {
        if let Some(last) = m.last_mut() {
            *last = 0.0;
        }
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub c0: f64,
    pub c1: f64,
    pub n0: usize,
    pub n1: usize,
}

impl ClassWeights {
    pub fn from_counts(n0: usize, n1: usize) -> Result<Self> {
        if n0 == 0 || n1 == 0 {
            return Err(Error::DegenerateClass(format!(
                "class counts are n0={n0}, n1={n1}; both classes must be present"
            )));
        }
        let n = (n0 + n1) as f64;
        Ok(ClassWeights {
            c0: n / (2.0 * n0 as f64),
            c1: n / (2.0 * n1 as f64),
            n0,
            n1,
        })
    }

    pub fn neutral(n: usize) -> Self {
        ClassWeights {
            c0: 1.0,
            c1: 1.0,
            n0: n,
            n1: n,
        }
    }

    pub fn weight(&self, y: f64) -> f64 {
        if y >= 0.5 {
            self.c1
        } else {
            self.c0
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelState {
    pub w: ArithShare,
    pub t: usize,
}

/// Result of a training run at one party.
pub struct TrainOutput {
    pub state: ModelState,
    pub class_weights: Option<ClassWeights>,
    pub stats: CommStats,
    /// Rounds spent inside each training step.
    pub rounds_per_step: Vec<u64>,
}

/// Appends a public column of ones to a shared `N x f` matrix.
pub fn append_ones_column(s: &Session, x: &ArithShare) -> Result<ArithShare> {
    let shape = x.shape();
    if shape.len() != 2 {
        return Err(Error::ShapeMismatch(shape.to_vec(), vec![0, 0]));
    }
    let (n, f) = (shape[0], shape[1]);
    let one = s.codec().encode(1.0)?.0;
    let widen = |t: &RingTensor, fill: u64| -> Result<RingTensor> {
        let mut data = Vec::with_capacity(n * (f + 1));
        for r in 0..n {
            data.extend_from_slice(&t.data()[r * f..(r + 1) * f]);
            data.push(fill);
        }
        RingTensor::new(vec![n, f + 1], data, true)
    };
    // the constant lives in component 0
    let (a, b) = match s.party().index() {
        0 => (one, 0),
        1 => (0, 0),
        _ => (0, one),
    };
    ArithShare::from_parts(s.party(), widen(x.first(), a)?, widen(x.second(), b)?)
}

impl Session {
    /// Reveals the number of positive labels and derives the class
    /// weights. Labels are an `N x 1` scaled sharing of 0/1.
    pub fn compute_class_weights(&mut self, y: &ArithShare) -> Result<ClassWeights> {
        let n = y.len();
        let sum = |t: &RingTensor| t.data().iter().fold(0u64, |a, &w| a.wrapping_add(w));
        let total = ArithShare::from_parts(
            self.party(),
            RingTensor::scalar(sum(y.first()), y.is_scaled()),
            RingTensor::scalar(sum(y.second()), y.is_scaled()),
        )?;
        let opened = self.reveal(&total)?;
        let bits = if y.is_scaled() { self.frac_bits() } else { 0 };
        let n1 = crate::ring::decode_with(opened.data()[0], bits).round();
        if !(0.0..=n as f64).contains(&n1) {
            return Err(Error::Data(format!("label sum {n1} is outside [0, {n}]")));
        }
        let n1 = n1 as usize;
        ClassWeights::from_counts(n - n1, n1)
    }

    /// `C_y = (C1 - C0) * y + C0`, exact on the fixed-point grid for 0/1
    /// labels. Two rounds.
    pub fn select_weight(&mut self, y: &ArithShare, cw: &ClassWeights) -> Result<ArithShare> {
        if !y.is_scaled() {
            return Err(Error::ScaleMismatch);
        }
        let codec = self.codec();
        let c0 = codec.encode(cw.c0)?;
        let c1 = codec.encode(cw.c1)?;
        let k = c1.wrapping_sub(c0).signed();
        let scaled = self.truncate(&y.mul_public_int(k))?;
        scaled.add_public(&RingTensor::scalar(c0.0, true))
    }

    /// One SGD step on a batch. `cy` holds the batch's class weights when
    /// weighting is on; `n_total` scales the L2 term.
    pub fn train_step(
        &mut self,
        xb: &ArithShare,
        yb: &ArithShare,
        cy: Option<&ArithShare>,
        state: &ModelState,
        cfg: &TrainConfig,
        n_total: usize,
    ) -> Result<ModelState> {
        let b = xb.shape()[0];
        let out = self.matmul(xb, &state.w)?;
        let yhat = self.sigmoid(&out, cfg.sigmoid_kind)?;
        let mut dy = yhat.sub(yb)?;
        if let Some(c) = cy {
            dy = self.mul(&dy, c)?;
        }
        let g = self.matmul(&xb.transpose()?, &dy)?;
        let eta = learning_rate(state.t, cfg);
        let mut terms = vec![(&g, Coeffs::Scalar(eta / b as f64))];
        if cfg.l2 && cfg.lambda > 0.0 {
            let c = eta * cfg.lambda / n_total as f64;
            let mask = l2_mask(state.w.len(), cfg.fit_intercept);
            terms.push((
                &state.w,
                Coeffs::Elementwise(mask.iter().map(|m| m * c).collect()),
            ));
        }
        let update = self.linear_combination(&terms, None, UPDATE_COEFF_BITS)?;
        self.trace("train-step", state.w.shape());
        Ok(ModelState {
            w: state.w.sub(&update)?,
            t: state.t + 1,
        })
    }

    /// Trains on a shared `N x f` feature matrix and `N x 1` label vector.
    pub fn train(
        &mut self,
        x: &ArithShare,
        y: &ArithShare,
        cfg: &TrainConfig,
    ) -> Result<TrainOutput> {
        cfg.validate()?;
        if cfg.frac_bits != self.frac_bits() {
            return Err(Error::Config(format!(
                "train config uses {} fractional bits but the session uses {}",
                cfg.frac_bits,
                self.frac_bits()
            )));
        }
        if x.shape().len() != 2 || y.shape() != [x.shape()[0], 1] {
            return Err(Error::ShapeMismatch(x.shape().to_vec(), y.shape().to_vec()));
        }
        let n = x.shape()[0];
        cfg.check_rows(n)?;
        let start = self.stats().clone();
        let x = if cfg.fit_intercept {
            append_ones_column(self, x)?
        } else {
            x.clone()
        };
        let f = x.shape()[1];

        let (class_weights, cy_all) = if cfg.class_weighting {
            let cw = self.compute_class_weights(y)?;
            let cy = self.select_weight(y, &cw)?;
            (Some(cw), Some(cy))
        } else {
            (None, None)
        };

        let init = initial_weights(f, cfg.seed);
        let w0 = RingTensor::encode(&self.codec(), &[f, 1], &init)?;
        let mut state = ModelState {
            w: self.public_share(&w0),
            t: 0,
        };
        let mut rounds_per_step = Vec::with_capacity(cfg.iterations);
        for rows in batch_schedule(n, cfg.batch_size, cfg.iterations, cfg.seed) {
            let before = self.stats().rounds;
            let xb = x.select_rows(&rows)?;
            let yb = y.select_rows(&rows)?;
            let cb = cy_all.as_ref().map(|c| c.select_rows(&rows)).transpose()?;
            state = self.train_step(&xb, &yb, cb.as_ref(), &state, cfg, n)?;
            rounds_per_step.push(self.stats().rounds - before);
        }
        Ok(TrainOutput {
            state,
            class_weights,
            stats: self.stats().since(&start),
            rounds_per_step,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig::default();
        assert!((learning_rate(0, &cfg) - 0.833_333).abs() < 1e-6);
        assert!((learning_rate(10, &cfg) - 0.089_286).abs() < 1e-6);
        for t in 0..100 {
            assert!(learning_rate(t + 1, &cfg) < learning_rate(t, &cfg));
            assert!((learning_rate(t, &cfg) - 1.0 / (1.2 + t as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn class_weight_formula() {
        let cw = ClassWeights::from_counts(83, 142).unwrap();
        assert!((cw.c1 - 225.0 / 284.0).abs() < 1e-12);
        assert!((cw.c0 - 225.0 / 166.0).abs() < 1e-12);
        let even = ClassWeights::from_counts(50, 50).unwrap();
        assert_eq!((even.c0, even.c1), (1.0, 1.0));
        assert!(matches!(
            ClassWeights::from_counts(10, 0),
            Err(Error::DegenerateClass(_))
        ));
    }

    #[test]
    fn schedule_is_cyclic_and_seeded() {
        let a = batch_schedule(10, 4, 5, 7);
        assert_eq!(a, batch_schedule(10, 4, 5, 7));
        assert_ne!(a, batch_schedule(10, 4, 5, 8));
        let flat: Vec<usize> = a.concat();
        // first 10 draws are a permutation
        let mut first: Vec<usize> = flat[..10].to_vec();
        first.sort();
        assert_eq!(first, (0..10).collect::<Vec<_>>());
        assert_eq!(flat[10..20], flat[..10]);
    }

    #[test]
    fn init_range() {
        let w = initial_weights(1000, 3);
        assert!(w.iter().all(|v| (-0.01..=0.01).contains(v)));
        assert_eq!(w, initial_weights(1000, 3));
    }

    #[test]
    fn config_json_defaults() {
        let cfg: TrainConfig =
            serde_json::from_str(r#"{"iterations": 5, "sigmoid_kind": "3"}"#).unwrap();
        assert_eq!(cfg.batch_size, 32);
        assert_eq!(cfg.sigmoid_kind, SigmoidKind::ThreePiece);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
