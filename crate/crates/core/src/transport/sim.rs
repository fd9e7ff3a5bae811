//! In-memory transport for running all three parties in one process.
//!
//! Receives block until a frame arrives. When every live party is blocked on
//! an empty queue (or has exited) the hub declares a protocol desync and all
//! blocked receivers fail instead of hanging.

use std::collections::VecDeque;
use std::sync::{Arc, Condvar, Mutex, MutexGuard};

use super::{PartyId, Transport};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Status {
    Running,
    Waiting(PartyId),
    Done,
}

struct HubState {
    /// `queues[from][to]`
    queues: [[VecDeque<Vec<u8>>; 3]; 3],
    status: [Status; 3],
    failure: Option<String>,
}

impl HubState {
    fn deadlock(&self) -> Option<String> {
        let mut waiting = Vec::new();
        for p in PartyId::ALL {
            match self.status[p.index()] {
                Status::Running => return None,
                Status::Done => {}
                Status::Waiting(from) => {
                    if !self.queues[from.index()][p.index()].is_empty() {
                        return None;
                    }
                    waiting.push(format!("{p} waits on {from}"));
                }
            }
        }
        if waiting.is_empty() {
            None
        } else {
            Some(format!("all live parties blocked ({})", waiting.join(", ")))
        }
    }
}

pub struct SimHub {
    state: Mutex<HubState>,
    cv: Condvar,
}

impl SimHub {
    pub fn new() -> Arc<SimHub> {
        Arc::new(SimHub {
            state: Mutex::new(HubState {
                queues: Default::default(),
                status: [Status::Running; 3],
                failure: None,
            }),
            cv: Condvar::new(),
        })
    }

    /// One endpoint per party. Dropping an endpoint marks that party done.
    pub fn endpoints(self: &Arc<Self>) -> [SimEndpoint; 3] {
        PartyId::ALL.map(|me| SimEndpoint {
            hub: Arc::clone(self),
            me,
        })
    }

    fn lock(&self) -> MutexGuard<'_, HubState> {
        // a panicking party thread is reported by the caller; keep the hub usable
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }
}

pub struct SimEndpoint {
    hub: Arc<SimHub>,
    me: PartyId,
}

impl SimEndpoint {
    pub fn party(&self) -> PartyId {
        self.me
    }
}

impl Transport for SimEndpoint {
    fn send_frame(&mut self, to: PartyId, frame: Vec<u8>) -> Result<()> {
        let mut st = self.hub.lock();
        if st.status[to.index()] == Status::Done {
            return Err(Error::ConnectionLost(format!("{to} has exited")));
        }
        st.queues[self.me.index()][to.index()].push_back(frame);
        drop(st);
        self.hub.cv.notify_all();
        Ok(())
    }

    fn recv_frame(&mut self, from: PartyId) -> Result<Vec<u8>> {
        let me = self.me.index();
        let mut st = self.hub.lock();
        loop {
            if let Some(frame) = st.queues[from.index()][me].pop_front() {
                st.status[me] = Status::Running;
                return Ok(frame);
            }
            if let Some(msg) = st.failure.clone() {
                st.status[me] = Status::Running;
                return Err(Error::Desync(msg));
            }
            st.status[me] = Status::Waiting(from);
            if let Some(msg) = st.deadlock() {
                st.failure = Some(msg.clone());
                st.status[me] = Status::Running;
                drop(st);
                self.hub.cv.notify_all();
                return Err(Error::Desync(msg));
            }
            st = self.hub.cv.wait(st).unwrap_or_else(|e| e.into_inner());
        }
    }
}

impl Drop for SimEndpoint {
    fn drop(&mut self) {
        let mut st = self.hub.lock();
        st.status[self.me.index()] = Status::Done;
        if st.failure.is_none() {
            if let Some(msg) = st.deadlock() {
                st.failure = Some(msg);
            }
        }
        drop(st);
        self.hub.cv.notify_all();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frames_arrive_in_order() {
        let hub = SimHub::new();
        let [mut a, mut b, _c] = hub.endpoints();
        let p1 = PartyId::new(1).unwrap();
        let p0 = PartyId::new(0).unwrap();
        a.send_frame(p1, vec![1]).unwrap();
        a.send_frame(p1, vec![2]).unwrap();
        assert_eq!(b.recv_frame(p0).unwrap(), vec![1]);
        assert_eq!(b.recv_frame(p0).unwrap(), vec![2]);
    }

    #[test]
    fn detects_everyone_waiting() {
        let hub = SimHub::new();
        let eps = hub.endpoints();
        let handles: Vec<_> = eps
            .into_iter()
            .map(|mut ep| {
                std::thread::spawn(move || {
                    let from = ep.party().next();
                    ep.recv_frame(from)
                })
            })
            .collect();
        for h in handles {
            assert!(matches!(h.join().unwrap(), Err(Error::Desync(_))));
        }
    }

    #[test]
    fn exited_peer_unblocks_receiver() {
        let hub = SimHub::new();
        let [mut a, b, c] = hub.endpoints();
        drop(c);
        let h = std::thread::spawn(move || {
            std::thread::sleep(std::time::Duration::from_millis(20));
            drop(b);
        });
        let r = a.recv_frame(PartyId::new(1).unwrap());
        h.join().unwrap();
        assert!(matches!(r, Err(Error::Desync(_))));
    }
}
