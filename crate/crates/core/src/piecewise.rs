//! Oblivious evaluation of piecewise affine functions and the two sigmoid
//! approximations built from them.
//!
//! All segment comparisons go through one batched comparison circuit and all
//! bit injections through one batched injection, so the round count does not
//! depend on the number of pieces.

use serde::{Deserialize, Serialize};

use crate::arith::ArithShare;
use crate::boolean::BoolShare;
use crate::error::{Error, Result};
use crate::ring::{encode_with, RingTensor};
use crate::session::Session;
use crate::sim::{simulate, SimOptions};
use crate::transport::PartyId;

/// Fractional bits used for the public polynomial coefficients.
const COEFF_BITS: u32 = 24;

/// Segment `i` covers `s_i <= x < s_{i+1}` with `s_0 = -inf`, `s_n = +inf`.
/// Each polynomial is given by ascending coefficients `[c0, c1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseSpec {
    pub segment_points: Vec<f64>,
    pub polys: Vec<Vec<f64>>,
}

impl PiecewiseSpec {
    pub fn new(segment_points: Vec<f64>, polys: Vec<Vec<f64>>) -> Result<Self> {
        let spec = PiecewiseSpec {
            segment_points,
            polys,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.segment_points.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidArgument(
                "segment points must be finite".into(),
            ));
        }
        if self.segment_points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "segment points must be strictly ascending".into(),
            ));
        }
        if self.polys.len() != self.segment_points.len() + 1 {
            return Err(Error::InvalidArgument(format!(
                "{} segment points need {} polynomials, got {}",
                self.segment_points.len(),
                self.segment_points.len() + 1,
                self.polys.len()
            )));
        }
        if self.polys.iter().any(|p| p.len() > 2) {
            return Err(Error::InvalidArgument(
                "only affine pieces are supported".into(),
            ));
        }
        if self.polys.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("coefficients must be finite".into()));
        }
        Ok(())
    }

    pub fn pieces(&self) -> usize {
        self.polys.len()
    }

    fn coeff(&self, i: usize, k: usize) -> f64 {
        self.polys[i].get(k).copied().unwrap_or(0.0)
    }

    /// Index of the piece containing `x`.
    pub fn segment_of(&self, x: f64) -> usize {
        self.segment_points.iter().take_while(|&&s| x >= s).count()
    }

    /// Plaintext evaluation with the same boundary convention.
    pub fn eval_plain(&self, x: f64) -> f64 {
        let i = self.segment_of(x);
        self.coeff(i, 0) + self.coeff(i, 1) * x
    }
}

/// How segment indicators are derived from the comparison bits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndicatorMode {
    /// `b_i = p_i xor p_{i+1}`; local.
    #[default]
    Xor,
    /// `b_i = not(p_i) and p_{i+1}`; one extra round.
    LiteralAnd,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SigmoidKind {
    #[serde(rename = "three-piece", alias = "3", alias = "three")]
    ThreePiece,
    #[default]
    #[serde(rename = "five-piece", alias = "5", alias = "five")]
    FivePiece,
}

impl SigmoidKind {
    pub fn spec(self) -> PiecewiseSpec {
        match self {
            SigmoidKind::ThreePiece => PiecewiseSpec {
                segment_points: vec![-0.5, 0.5],
                polys: vec![vec![0.0], vec![0.5, 1.0], vec![1.0]],
            },
            SigmoidKind::FivePiece => PiecewiseSpec {
                segment_points: vec![-5.0, -2.5, 2.5, 5.0],
                polys: vec![
                    vec![1e-4],
                    vec![0.145, 0.02776],
                    vec![0.5, 0.17],
                    vec![0.85498, 0.02776],
                    vec![1.0 - 1e-4],
                ],
            },
        }
    }

    pub fn eval_plain(self, x: f64) -> f64 {
        self.spec().eval_plain(x)
    }

    pub fn pieces(self) -> usize {
        self.spec().pieces()
    }
}

impl std::str::FromStr for SigmoidKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "3" | "three" | "three-piece" => Ok(SigmoidKind::ThreePiece),
            "5" | "five" | "five-piece" => Ok(SigmoidKind::FivePiece),
            _ => Err(Error::InvalidArgument(format!(
                "unknown sigmoid kind {s:?}"
            ))),
        }
    }
}

impl std::fmt::Display for SigmoidKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SigmoidKind::ThreePiece => write!(f, "three-piece"),
            SigmoidKind::FivePiece => write!(f, "five-piece"),
        }
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Session {
    /// Shared segment indicators for `x`, one width-1 share per piece.
    pub fn segment_indicators(
        &mut self,
        spec: &PiecewiseSpec,
        x: &ArithShare,
        mode: IndicatorMode,
    ) -> Result<Vec<BoolShare>> {
        spec.validate()?;
        let me = self.party();
        let ps = self.lt_const_many(x, &spec.segment_points)?;
        let one = BoolShare::public(me, &RingTensor::filled(x.shape(), 1, false), 1)?;
        let zero = BoolShare::public(me, &RingTensor::zeros(x.shape(), false), 1)?;
        // p_0 = 0 and p_n = 1 are public
        let mut p = Vec::with_capacity(ps.len() + 2);
        p.push(zero);
        p.extend(ps);
        p.push(one);
        let n = spec.pieces();
        match mode {
            IndicatorMode::Xor => (0..n).map(|i| p[i].xor(&p[i + 1])).collect(),
            IndicatorMode::LiteralAnd => {
                let negs: Vec<BoolShare> = p.iter().map(BoolShare::not).collect();
                let pairs: Vec<(&BoolShare, &BoolShare)> =
                    (0..n).map(|i| (&negs[i], &p[i + 1])).collect();
                self.and_many(&pairs)
            }
        }
    }

    /// Shared `f_i(x)` for the piece containing `x`. `x` must be scaled.
    pub fn eval_piecewise(
        &mut self,
        spec: &PiecewiseSpec,
        x: &ArithShare,
        mode: IndicatorMode,
    ) -> Result<ArithShare> {
        if !x.is_scaled() {
            return Err(Error::ScaleMismatch);
        }
        let f = self.frac_bits();
        let b = self.segment_indicators(spec, x, mode)?;

        let mut bits: Vec<&BoolShare> = Vec::new();
        let mut targets: Vec<Option<&ArithShare>> = Vec::new();
        let mut coeffs: Vec<u64> = Vec::new();
        for (i, bi) in b.iter().enumerate() {
            let (c0, c1) = (spec.coeff(i, 0), spec.coeff(i, 1));
            if c1 != 0.0 {
                bits.push(bi);
                targets.push(Some(x));
                coeffs.push(encode_with(c1, COEFF_BITS)?.0);
            }
            if c0 != 0.0 {
                bits.push(bi);
                targets.push(None);
                coeffs.push(encode_with(c0, COEFF_BITS + f)?.0);
            }
        }
        let injected = self.inject_many(&bits, &targets)?;
        let mut acc = ArithShare::public(self.party(), &RingTensor::zeros(x.shape(), true));
        for (v, &c) in injected.iter().zip(&coeffs) {
            acc = acc.add(&v.mul_public_int(c as i64).with_scaled(true))?;
        }
        let out = self.truncate_by(&acc, COEFF_BITS)?;
        self.trace("piecewise", out.shape());
        Ok(out)
    }

    pub fn sigmoid(&mut self, x: &ArithShare, kind: SigmoidKind) -> Result<ArithShare> {
        self.eval_piecewise(&kind.spec(), x, IndicatorMode::Xor)
    }
}

/// Error of the shared sigmoid against the true logistic over a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmoidErrorReport {
    pub kind: SigmoidKind,
    pub points: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    pub argmax: f64,
}

/// One row of a sigmoid table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmoidRow {
    pub x: f64,
    pub approx: f64,
    #[serde(rename = "true")]
    pub exact: f64,
    pub error: f64,
}

/// Grid `from, from+step, ...` up to and including `to` (within rounding).
pub fn grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !step.is_finite() || step <= 0.0 || !from.is_finite() || !to.is_finite() || to < from {
        return Err(Error::InvalidArgument(format!(
            "bad grid from={from} to={to} step={step}"
        )));
    }
    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|k| from + k as f64 * step).collect())
}

/// Evaluates the shared sigmoid on every grid point through the simulator
/// and decodes the results.
pub fn sigmoid_table(kind: SigmoidKind, xs: &[f64], opts: &SimOptions) -> Result<Vec<SigmoidRow>> {
    let codec = opts.codec;
    let input = RingTensor::encode(&codec, &[xs.len()], xs)?;
    let report = simulate(opts, |s| {
        let x = s.share_from(PartyId::ALL[0], &input)?;
        let y = s.sigmoid(&x, kind)?;
        s.reveal(&y)
    })?;
    let approx = report.outputs[0].decode(&codec);
    Ok(xs
        .iter()
        .zip(approx)
        .map(|(&x, a)| {
            let t = logistic(x);
            SigmoidRow {
                x,
                approx: a,
                exact: t,
                error: (a - t).abs(),
            }
        })
        .collect())
}

pub fn sigmoid_error_report(
    kind: SigmoidKind,
    xs: &[f64],
    opts: &SimOptions,
) -> Result<SigmoidErrorReport> {
    let rows = sigmoid_table(kind, xs, opts)?;
    let mut max = 0.0;
    let mut argmax = f64::NAN;
    let mut sum = 0.0;
    for r in &rows {
        sum += r.error;
        if r.error > max {
            max = r.error;
            argmax = r.x;
        }
    }
    Ok(SigmoidErrorReport {
        kind,
        points: rows.len(),
        max_abs_error: max,
        mean_abs_error: if rows.is_empty() {
            0.0
        } else {
            sum / rows.len() as f64
        },
        argmax,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        assert!(PiecewiseSpec::new(vec![1.0, 0.0], vec![vec![0.0]; 3]).is_err());
        assert!(PiecewiseSpec::new(vec![0.0], vec![vec![0.0]; 3]).is_err());
        assert!(PiecewiseSpec::new(vec![0.0], vec![vec![0.0, 1.0, 2.0], vec![1.0]]).is_err());
        assert!(PiecewiseSpec::new(vec![0.0], vec![vec![0.0], vec![1.0]]).is_ok());
        SigmoidKind::ThreePiece.spec().validate().unwrap();
        SigmoidKind::FivePiece.spec().validate().unwrap();
    }

    #[test]
    fn plain_boundaries_go_up() {
        let s = SigmoidKind::ThreePiece;
        assert_eq!(s.eval_plain(-0.5), 0.0);
        assert_eq!(s.eval_plain(0.5), 1.0);
        assert_eq!(s.eval_plain(0.25), 0.75);
        let five = SigmoidKind::FivePiece;
        assert_eq!(five.eval_plain(-6.0), 1e-4);
        assert!((five.eval_plain(3.0) - 0.93826).abs() < 1e-12);
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("3".parse::<SigmoidKind>().unwrap(), SigmoidKind::ThreePiece);
        assert_eq!(
            "five-piece".parse::<SigmoidKind>().unwrap(),
            SigmoidKind::FivePiece
        );
        assert!("7".parse::<SigmoidKind>().is_err());
        let k: SigmoidKind = serde_json::from_str("\"3\"").unwrap();
        assert_eq!(k, SigmoidKind::ThreePiece);
    }

    #[test]
    fn grid_includes_end() {
        let g = grid(-1.0, 1.0, 0.5).unwrap();
        assert_eq!(g, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(grid(-8.0, 8.0, 0.001).unwrap().len(), 16001);
        assert!(grid(0.0, 1.0, 0.0).is_err());
    }
}
