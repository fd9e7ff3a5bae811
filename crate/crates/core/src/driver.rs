//! End-to-end training runs shared by the TCP and simulator front ends:
//! data ingestion into shares, training, and revealing the model.

use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::arith::ArithShare;
use crate::error::{Error, Result};
use crate::evaluation::Dataset;
use crate::ring::RingTensor;
use crate::session::Session;
use crate::sim::{simulate, SimOptions};
use crate::trainer::{ClassWeights, TrainConfig, TrainOutput};
use crate::transport::{CommStats, LatencyModel, PartyId};

/// Who contributes training rows.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Partition {
    /// Every party may hold rows; blocks are stacked in party order.
    #[default]
    Horizontal,
    /// Party 0 holds the whole dataset.
    Dealer,
}

impl FromStr for Partition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizontal" => Ok(Partition::Horizontal),
            "dealer" => Ok(Partition::Dealer),
            _ => Err(Error::Config(format!("unknown partition mode {s:?}"))),
        }
    }
}

/// Which parties learn the trained weights.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum RevealTo {
    #[default]
    All,
    Nobody,
    Parties(Vec<PartyId>),
}

impl RevealTo {
    pub fn includes(&self, p: PartyId) -> bool {
        match self {
            RevealTo::All => true,
            RevealTo::Nobody => false,
            RevealTo::Parties(ps) => ps.contains(&p),
        }
    }
}

impl FromStr for RevealTo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(RevealTo::All),
            "none" => Ok(RevealTo::Nobody),
            list => {
                let mut ps = Vec::new();
                for part in list.split(',') {
                    let id: usize = part.trim().parse().map_err(|_| {
                        Error::Config(format!("bad party id {part:?} in --reveal-to"))
                    })?;
                    let p = PartyId::new(id).map_err(|e| Error::Config(e.to_string()))?;
                    if !ps.contains(&p) {
                        ps.push(p);
                    }
                }
                ps.sort();
                Ok(RevealTo::Parties(ps))
            }
        }
    }
}

/// Shared training data after ingestion.
pub struct SharedData {
    pub x: ArithShare,
    pub y: ArithShare,
    /// Rows contributed by each party.
    pub rows: [usize; 3],
    pub cols: usize,
}

/// Announces local shapes, then shares every contributed block. One round
/// for the announcement plus one per contributing party.
pub fn share_dataset(
    s: &mut Session,
    local: Option<&Dataset>,
    partition: Partition,
) -> Result<SharedData> {
    let me = s.party();
    let local = match partition {
        Partition::Dealer if me.index() != 0 => None,
        _ => local,
    };
    let (rows, cols) = local.map(|d| (d.rows, d.cols)).unwrap_or((0, 0));
    for p in [me.next(), me.prev()] {
        s.network().send_control(p, &[rows as u64, cols as u64])?;
    }
    s.network().barrier()?;
    let mut shapes = [(0usize, 0usize); 3];
    shapes[me.index()] = (rows, cols);
    for p in [me.next(), me.prev()] {
        let got = s.network().recv_control(p)?;
        if got.len() != 2 {
            return Err(Error::Desync(format!(
                "malformed shape announcement from {p}"
            )));
        }
        shapes[p.index()] = (got[0] as usize, got[1] as usize);
    }
    let contributing: Vec<usize> = (0..3).filter(|&i| shapes[i].0 > 0).collect();
    let cols = match contributing.first() {
        Some(&i) => shapes[i].1,
        None => return Err(Error::Data("no party supplied training rows".into())),
    };
    if let Some(&i) = contributing.iter().find(|&&i| shapes[i].1 != cols) {
        return Err(Error::Config(format!(
            "P{i} has {} feature columns, P{} has {cols}",
            shapes[i].1, contributing[0]
        )));
    }

    let codec = s.codec();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &i in &contributing {
        let owner = PartyId::new(i)?;
        let (r, _) = shapes[i];
        let n = r * (cols + 1);
        let value = if owner == me {
            let d = local.expect("own rows announced");
            let mut words = codec.encode_slice(&d.x)?;
            words.extend(codec.encode_slice(&d.labels_f64())?);
            Some(RingTensor::new(vec![n], words, true)?)
        } else {
            None
        };
        let share = s.share(owner, value.as_ref(), &[n], true)?;
        let mut parts = share.split(&[vec![r, cols], vec![r, 1]])?;
        ys.push(parts.pop().unwrap());
        xs.push(parts.pop().unwrap());
    }
    let stack = |v: &[ArithShare]| -> Result<ArithShare> {
        let f: Vec<&RingTensor> = v.iter().map(|a| a.first()).collect();
        let sc: Vec<&RingTensor> = v.iter().map(|a| a.second()).collect();
        ArithShare::from_parts(me, RingTensor::vstack(&f)?, RingTensor::vstack(&sc)?)
    };
    Ok(SharedData {
        x: stack(&xs)?,
        y: stack(&ys)?,
        rows: [shapes[0].0, shapes[1].0, shapes[2].0],
        cols,
    })
}

/// Opens the weights to the requested parties. Returns them at parties
/// that learn them.
pub fn reveal_weights(s: &mut Session, w: &ArithShare, to: &RevealTo) -> Result<Option<Vec<f64>>> {
    let codec = s.codec();
    match to {
        RevealTo::All => Ok(Some(s.reveal(w)?.decode(&codec))),
        RevealTo::Nobody => Ok(None),
        RevealTo::Parties(ps) => {
            let mut mine = None;
            for &p in ps {
                if let Some(t) = s.reveal_to(w, p)? {
                    mine = Some(t.decode(&codec));
                }
            }
            Ok(mine)
        }
    }
}

/// Result of one party's training run.
pub struct PartyRun {
    pub output: TrainOutput,
    pub data: SharedData,
    /// Raw weights (intercept last) if this party learned them.
    pub weights: Option<Vec<f64>>,
}

pub fn run_party_training(
    s: &mut Session,
    local: Option<&Dataset>,
    partition: Partition,
    cfg: &TrainConfig,
    reveal: &RevealTo,
) -> Result<PartyRun> {
    let data = share_dataset(s, local, partition)?;
    let output = s.train(&data.x, &data.y, cfg)?;
    let weights = reveal_weights(s, &output.state.w, reveal)?;
    Ok(PartyRun {
        output,
        data,
        weights,
    })
}

/// Training in the simulator with `parts[i]` held by party `i`.
pub struct SimTraining {
    pub weights: Vec<f64>,
    pub stats: [CommStats; 3],
    /// Statistics of the training loop only, per party.
    pub train_stats: [CommStats; 3],
    pub rounds_per_step: Vec<u64>,
    pub class_weights: Option<ClassWeights>,
    /// Wall time of the training loop at party 0.
    pub train_time: Duration,
}

pub fn simulate_training(
    parts: &[Dataset],
    cfg: &TrainConfig,
    opts: &SimOptions,
) -> Result<SimTraining> {
    if parts.is_empty() || parts.len() > 3 {
        return Err(Error::InvalidArgument(format!(
            "{} data blocks for 3 parties",
            parts.len()
        )));
    }
    let opts = SimOptions {
        codec: cfg.codec()?,
        ..opts.clone()
    };
    let report = simulate(&opts, |s| {
        let local = parts.get(s.party().index());
        let data = share_dataset(s, local, Partition::Horizontal)?;
        let start = Instant::now();
        let out = s.train(&data.x, &data.y, cfg)?;
        let elapsed = start.elapsed();
        let w = reveal_weights(s, &out.state.w, &RevealTo::All)?;
        Ok((
            w.expect("revealed to all"),
            out.stats,
            out.rounds_per_step,
            out.class_weights,
            elapsed,
        ))
    })?;
    let mut outs = report.outputs.into_iter();
    let (weights, s0, rounds_per_step, class_weights, elapsed) = outs.next().expect("party 0");
    let rest: Vec<_> = outs.collect();
    for (w, ..) in &rest {
        if *w != weights {
            return Err(Error::Integrity(
                "parties revealed different weights".into(),
            ));
        }
    }
    Ok(SimTraining {
        weights,
        stats: report.stats,
        train_stats: [s0, rest[0].1.clone(), rest[1].1.clone()],
        rounds_per_step,
        class_weights,
        train_time: elapsed,
    })
}

/// Model file written after training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub frac_bits: u32,
    pub weights: Vec<f64>,
    pub intercept: Option<f64>,
    pub feature_names: Option<Vec<String>>,
    pub sigmoid_kind: crate::piecewise::SigmoidKind,
    pub iterations: usize,
}

/// Communication summary written after a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatsFile {
    pub party: usize,
    pub iterations: usize,
    pub stats: CommStats,
    pub train_stats: CommStats,
    pub rounds_per_iteration: f64,
    pub bytes_per_iteration: f64,
    pub modeled_lan_seconds: f64,
    pub modeled_wan_seconds: f64,
    pub class_weights: Option<ClassWeights>,
}

/// Average rounds of a training step, 0 when no step ran.
pub fn mean_rounds(rounds_per_step: &[u64]) -> f64 {
    if rounds_per_step.is_empty() {
        return 0.0;
    }
    rounds_per_step.iter().sum::<u64>() as f64 / rounds_per_step.len() as f64
}

impl StatsFile {
    pub fn new(party: PartyId, run: &PartyRun, total: &CommStats, iterations: usize) -> Self {
        let t = &run.output.stats;
        let it = iterations.max(1) as f64;
        StatsFile {
            party: party.index(),
            iterations,
            stats: total.clone(),
            train_stats: t.clone(),
            rounds_per_iteration: mean_rounds(&run.output.rounds_per_step),
            bytes_per_iteration: t.total_bytes_sent() as f64 / it,
            modeled_lan_seconds: LatencyModel::lan().modeled_seconds(total),
            modeled_wan_seconds: LatencyModel::wan().modeled_seconds(total),
            class_weights: run.output.class_weights,
        }
    }
}

/// One party's share of the trained weights, persisted when nobody learns
/// them in the clear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SharesFile {
    pub party: usize,
    pub frac_bits: u32,
    pub share: ArithShare,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reveal_to_parsing() {
        assert_eq!("all".parse::<RevealTo>().unwrap(), RevealTo::All);
        assert_eq!("none".parse::<RevealTo>().unwrap(), RevealTo::Nobody);
        let p = "2,0,2".parse::<RevealTo>().unwrap();
        assert_eq!(p, RevealTo::Parties(vec![PartyId::ALL[0], PartyId::ALL[2]]));
        assert!(p.includes(PartyId::ALL[0]) && !p.includes(PartyId::ALL[1]));
        assert!("3".parse::<RevealTo>().is_err());
        assert!("x".parse::<Partition>().is_err());
    }
}
