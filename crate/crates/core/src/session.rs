//! Per-party protocol state: network, key material, codec and optional
//! simulator instrumentation.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arith::ArithShare;
use crate::boolean::BoolShare;
use crate::error::{Error, Result};
use crate::randomness::{derive_key, key_to_words, words_to_key, PrfKeys};
use crate::ring::FixedPointCodec;
use crate::transport::{CommStats, Network, PartyId, Transport};

#[derive(Clone, Debug)]
pub struct SessionParams {
    pub party: PartyId,
    pub session_id: u64,
    pub seed: u64,
    pub codec: FixedPointCodec,
    /// Reveal sends both copies of the missing share and compares them.
    pub checked_reveal: bool,
}

/// One entry of the operation trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub op: String,
    pub shape: Vec<usize>,
    pub rounds: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum DepositKind {
    Arith,
    Bool,
    Zero,
    XorZero,
}

struct Deposit {
    op: &'static str,
    kind: DepositKind,
    first: Vec<u64>,
    second: Vec<u64>,
}

#[derive(Default)]
struct AuditState {
    next_seq: [u64; 3],
    pending: HashMap<u64, [Option<Deposit>; 3]>,
    checked: u64,
    zero_checked: u64,
    violations: Vec<String>,
}

/// Cross-party invariant checker. Only usable when all three parties run in
/// one process: each party deposits its local view after every operation
/// and the auditor checks replication consistency and zero sums once all
/// three views of an operation are in.
#[derive(Default)]
pub struct Auditor {
    state: Mutex<AuditState>,
}

impl Auditor {
    pub fn new() -> Arc<Auditor> {
        Arc::new(Auditor::default())
    }

    fn deposit(&self, party: PartyId, d: Deposit) {
        let mut st = self.state.lock().unwrap_or_else(|e| e.into_inner());
        let seq = st.next_seq[party.index()];
        st.next_seq[party.index()] += 1;
        let slot = st.pending.entry(seq).or_default();
        slot[party.index()] = Some(d);
        if slot.iter().all(Option::is_some) {
            let views = st.pending.remove(&seq).unwrap().map(Option::unwrap);
            st.checked += 1;
            if matches!(views[0].kind, DepositKind::Zero | DepositKind::XorZero) {
                st.zero_checked += 1;
            }
            if let Some(v) = check_views(seq, &views) {
                st.violations.push(v);
            }
        }
    }

    /// Number of fully checked operations.
    pub fn checked(&self) -> u64 {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).checked
    }

    /// How many of the checked operations were zero sharings.
    pub fn zero_checked(&self) -> u64 {
        self.state
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .zero_checked
    }

    pub fn violations(&self) -> Vec<String> {
        self.state
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .violations
            .clone()
    }

    /// Operations that only some parties reported.
    pub fn unmatched(&self) -> usize {
        self.state
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .pending
            .len()
    }
}

fn check_views(seq: u64, v: &[Deposit; 3]) -> Option<String> {
    if v.iter().any(|d| d.op != v[0].op || d.kind != v[0].kind) {
        return Some(format!(
            "op #{seq}: parties disagree on the operation ({}, {}, {})",
            v[0].op, v[1].op, v[2].op
        ));
    }
    match v[0].kind {
        DepositKind::Arith | DepositKind::Bool => {
            for i in 0..3 {
                let j = (i + 1) % 3;
                if v[i].second != v[j].first {
                    return Some(format!(
                        "op #{seq} ({}): P{i}'s second component differs from P{j}'s first",
                        v[0].op
                    ));
                }
            }
            None
        }
        DepositKind::Zero => {
            let bad = (0..v[0].first.len()).any(|k| {
                v[0].first[k]
                    .wrapping_add(v[1].first[k])
                    .wrapping_add(v[2].first[k])
                    != 0
            });
            bad.then(|| format!("op #{seq}: zero sharing does not sum to zero"))
        }
        DepositKind::XorZero => {
            let bad =
                (0..v[0].first.len()).any(|k| v[0].first[k] ^ v[1].first[k] ^ v[2].first[k] != 0);
            bad.then(|| format!("op #{seq}: xor zero sharing does not cancel"))
        }
    }
}

/// State of one party in a three-party session.
pub struct Session {
    pub(crate) net: Network,
    pub(crate) prf: PrfKeys,
    pub(crate) local_rng: ChaCha20Rng,
    codec: FixedPointCodec,
    checked_reveal: bool,
    audit: Option<Arc<Auditor>>,
    trace: Option<Vec<TraceEvent>>,
}

fn local_seed(seed: u64, session_id: u64, party: PartyId) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"aby3-local-rng");
    h.update(seed.to_le_bytes());
    h.update(session_id.to_le_bytes());
    h.update([party.index() as u8]);
    h.finalize().into()
}

impl Session {
    /// Runs key setup over `transport`: every party sends its own PRF key to
    /// the previous party. Statistics are reset afterwards so they only
    /// cover the computation itself.
    pub fn establish(transport: Box<dyn Transport>, params: &SessionParams) -> Result<Session> {
        let me = params.party;
        let mut net = Network::new(me, params.session_id, transport);
        let own = derive_key(params.seed, params.session_id, me);
        let [k0, k1] = key_to_words(&own);
        net.send_control(me.prev(), &[k0, k1, params.codec.frac_bits() as u64])?;
        net.barrier()?;
        let got = net.recv_control(me.next())?;
        if got.len() != 3 {
            return Err(Error::Handshake("malformed key setup message".into()));
        }
        if got[2] != params.codec.frac_bits() as u64 {
            return Err(Error::Config(format!(
                "{} uses {} fractional bits, we use {}",
                me.next(),
                got[2],
                params.codec.frac_bits()
            )));
        }
        let next = words_to_key(&got[..2]);
        net.reset_stats();
        Ok(Session {
            net,
            prf: PrfKeys::new(me, own, next),
            local_rng: ChaCha20Rng::from_seed(local_seed(params.seed, params.session_id, me)),
            codec: params.codec,
            checked_reveal: params.checked_reveal,
            audit: None,
            trace: None,
        })
    }

    pub fn party(&self) -> PartyId {
        self.net.party()
    }

    pub fn codec(&self) -> FixedPointCodec {
        self.codec
    }

    pub fn frac_bits(&self) -> u32 {
        self.codec.frac_bits()
    }

    pub fn stats(&self) -> &CommStats {
        self.net.stats()
    }

    pub fn reset_stats(&mut self) {
        self.net.reset_stats();
    }

    pub fn network(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn checked_reveal(&self) -> bool {
        self.checked_reveal
    }

    pub fn set_auditor(&mut self, auditor: Option<Arc<Auditor>>) {
        self.audit = auditor;
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
    }

    pub fn take_trace(&mut self) -> Vec<TraceEvent> {
        self.trace.take().unwrap_or_default()
    }

    pub(crate) fn trace(&mut self, op: &str, shape: &[usize]) {
        let rounds = self.net.stats().rounds;
        if let Some(t) = self.trace.as_mut() {
            t.push(TraceEvent {
                op: op.to_string(),
                shape: shape.to_vec(),
                rounds,
            });
        }
    }

    pub(crate) fn barrier(&mut self) -> Result<()> {
        self.net.barrier()
    }

    pub(crate) fn audit_arith(&self, op: &'static str, x: &ArithShare) {
        if let Some(a) = &self.audit {
            a.deposit(
                self.party(),
                Deposit {
                    op,
                    kind: DepositKind::Arith,
                    first: x.first().data().to_vec(),
                    second: x.second().data().to_vec(),
                },
            );
        }
    }

    pub(crate) fn audit_bool(&self, op: &'static str, x: &BoolShare) {
        if let Some(a) = &self.audit {
            a.deposit(
                self.party(),
                Deposit {
                    op,
                    kind: DepositKind::Bool,
                    first: x.first().data().to_vec(),
                    second: x.second().data().to_vec(),
                },
            );
        }
    }

    pub(crate) fn audit_zero(&self, op: &'static str, words: &[u64], xor: bool) {
        if let Some(a) = &self.audit {
            a.deposit(
                self.party(),
                Deposit {
                    op,
                    kind: if xor {
                        DepositKind::XorZero
                    } else {
                        DepositKind::Zero
                    },
                    first: words.to_vec(),
                    second: Vec::new(),
                },
            );
        }
    }
}
