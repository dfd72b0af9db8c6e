//! Traffic sources and sinks: constant-bit-rate UDP and a compact TCP model.

pub mod stats;
pub mod tcp;
pub mod udp;

pub use stats::{impact_from, measure_impact, FlowStats, Impact, ImpactError, Window};
pub use tcp::{RecvOutcome, TcpConfig, TcpFlow, TcpReceiver};
pub use udp::UdpFlow;
