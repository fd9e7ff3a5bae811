//! Three-party replicated secret sharing over Z_2^64 with fixed-point
//! arithmetic, and a privacy-preserving logistic regression trainer built
//! on it.
//!
//! Every protocol is written once against [`Session`] and runs unchanged
//! over TCP ([`transport::tcp`]) or the in-process simulator ([`sim`]).

pub mod arith;
pub mod boolean;
pub mod driver;
pub mod error;
pub mod evaluation;
pub mod par;
pub mod piecewise;
pub mod randomness;
pub mod ring;
pub mod session;
pub mod sim;
pub mod trainer;
pub mod transport;

pub use arith::{ArithShare, Coeffs};
pub use boolean::BoolShare;
pub use error::{Error, Result};
pub use piecewise::{IndicatorMode, PiecewiseSpec, SigmoidKind};
pub use ring::{FixedPointCodec, RingTensor, RingValue};
pub use session::{Auditor, Session, SessionParams, TraceEvent};
pub use sim::{simulate, SimOptions, SimReport};
pub use trainer::{ClassWeights, ModelState, TrainConfig};
pub use transport::{CommStats, LatencyModel, PartyId};
