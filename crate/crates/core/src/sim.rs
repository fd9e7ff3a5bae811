//! Runs all three parties of a protocol in one process, one thread each,
//! over the in-memory transport.

use std::sync::Arc;
use std::thread;
use std::time::Duration;

use crate::error::{Error, Result};
use crate::ring::FixedPointCodec;
use crate::session::{Auditor, Session, SessionParams, TraceEvent};
use crate::transport::sim::SimHub;
use crate::transport::{CommStats, PartyId};

#[derive(Clone, Debug)]
pub struct SimOptions {
    /// Per-party seeds for key derivation and local sampling.
    pub seeds: [u64; 3],
    pub session_id: u64,
    pub codec: FixedPointCodec,
    pub checked_reveal: bool,
    /// Collect every party's share views and check cross-party invariants.
    pub audit: bool,
    pub trace: bool,
    /// Sleep at every barrier, emulating real link latency.
    pub barrier_delay: Option<Duration>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            seeds: [11, 22, 33],
            session_id: 1,
            codec: FixedPointCodec::default(),
            checked_reveal: true,
            audit: false,
            trace: false,
            barrier_delay: None,
        }
    }
}

impl SimOptions {
    pub fn with_seed(seed: u64) -> Self {
        SimOptions {
            seeds: [
                seed.wrapping_mul(3).wrapping_add(1),
                seed.wrapping_mul(3).wrapping_add(2),
                seed.wrapping_mul(3).wrapping_add(3),
            ],
            ..SimOptions::default()
        }
    }
}

pub struct SimReport<R> {
    /// Outputs indexed by party id.
    pub outputs: Vec<R>,
    pub stats: [CommStats; 3],
    pub traces: [Vec<TraceEvent>; 3],
    pub auditor: Option<Arc<Auditor>>,
}

/// Desyncs and lost connections are usually fallout from another party's
/// failure; report the root cause when there is one.
fn is_secondary(e: &Error) -> bool {
    matches!(e, Error::Desync(_) | Error::ConnectionLost(_))
}

pub fn simulate<R, F>(opts: &SimOptions, f: F) -> Result<SimReport<R>>
where
    R: Send,
    F: Fn(&mut Session) -> Result<R> + Sync,
{
    let hub = SimHub::new();
    let endpoints = hub.endpoints();
    let auditor = opts.audit.then(Auditor::new);
    let f = &f;

    let results: Vec<Result<(R, CommStats, Vec<TraceEvent>)>> = thread::scope(|scope| {
        let handles: Vec<_> = endpoints
            .into_iter()
            .map(|ep| {
                let auditor = auditor.clone();
                thread::Builder::new()
                    .name(format!("sim-{}", ep.party()))
                    .spawn_scoped(scope, move || {
                        let party = ep.party();
                        let params = SessionParams {
                            party,
                            session_id: opts.session_id,
                            seed: opts.seeds[party.index()],
                            codec: opts.codec,
                            checked_reveal: opts.checked_reveal,
                        };
                        let mut session = Session::establish(Box::new(ep), &params)?;
                        session.network().set_barrier_delay(opts.barrier_delay);
                        session.set_auditor(auditor);
                        if opts.trace {
                            session.enable_trace();
                        }
                        let out = f(&mut session)?;
                        let stats = session.stats().clone();
                        let trace = session.take_trace();
                        Ok((out, stats, trace))
                    })
                    .expect("spawn simulator thread")
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Desync("party thread panicked".into())))
            })
            .collect()
    });

    let mut outputs = Vec::with_capacity(3);
    let mut stats: [CommStats; 3] = Default::default();
    let mut traces: [Vec<TraceEvent>; 3] = Default::default();
    let mut first_err: Option<Error> = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok((o, s, t)) => {
                outputs.push(o);
                stats[i] = s;
                traces[i] = t;
            }
            Err(e) => {
                let replace = match &first_err {
                    None => true,
                    Some(prev) => is_secondary(prev) && !is_secondary(&e),
                };
                if replace {
                    first_err = Some(e);
                }
            }
        }
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    Ok(SimReport {
        outputs,
        stats,
        traces,
        auditor,
    })
}

/// Party ids in order, for building per-party inputs.
pub fn parties() -> [PartyId; 3] {
    PartyId::ALL
}
