//! Packet-level simulator and cost model for predictive vertical handoffs
//! with selective buffer delivery, alongside FMIPv6 baselines.
//!
//! [`scenario`] loads a run description, [`sim::run`] executes it and
//! [`report`] turns the result into summaries and cost breakdowns. The
//! closed-form model lives in [`cost`] and the finalize algorithm in
//! [`timing`].

pub mod cost;
pub mod protocols;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod simcore;
pub mod timing;
pub mod trace;
pub mod traffic;

pub use protocols::ProtocolKind;
pub use scenario::Scenario;
pub use sim::{run, RunResult};
