//! Handoff protocol state machines for the mobile node and access routers.
//!
//! Nodes are passive: the simulator hands them frames and timer expiries
//! together with a [`Ctx`] through which they send, arm timers and trace.

pub mod buffer;
pub mod messages;
pub mod mn;
pub mod nar;
pub mod packet;
pub mod par;
pub mod receipt;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::simcore::SimTime;
use crate::timing::{Tier, TimingInputs};
use crate::trace::TraceEvent;

pub use buffer::{NarBuffer, StoreOutcome};
pub use messages::{SignalKind, SignalPayload, SignalingMessage};
pub use mn::MnState;
pub use nar::NarState;
pub use packet::{DataPacket, Frame, PathTag, TcpAck, TcpSegment};
pub use par::ParState;
pub use receipt::{CounterRanges, FilterVerdict, ReceiptSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    #[serde(alias = "fmipv6")]
    Fmipv6Predictive,
    #[serde(alias = "reactive")]
    Fmipv6Reactive,
    #[serde(alias = "bicast")]
    Fmipv6Bicast,
    #[serde(alias = "safetynet")]
    SafetyNet,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 4] =
        [ProtocolKind::SafetyNet, ProtocolKind::Fmipv6Predictive, ProtocolKind::Fmipv6Bicast, ProtocolKind::Fmipv6Reactive];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Fmipv6Predictive => "fmipv6_predictive",
            ProtocolKind::Fmipv6Reactive => "fmipv6_reactive",
            ProtocolKind::Fmipv6Bicast => "fmipv6_bicast",
            ProtocolKind::SafetyNet => "safety_net",
        }
    }

    pub fn is_predictive(self) -> bool {
        self != ProtocolKind::Fmipv6Reactive
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        match norm.as_str() {
            "fmipv6_predictive" | "fmipv6" => Ok(ProtocolKind::Fmipv6Predictive),
            "fmipv6_reactive" | "reactive" => Ok(ProtocolKind::Fmipv6Reactive),
            "fmipv6_bicast" | "bicast" => Ok(ProtocolKind::Fmipv6Bicast),
            "safety_net" | "safetynet" => Ok(ProtocolKind::SafetyNet),
            _ => Err(format!("unknown protocol `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Cn,
    Par,
    Nar(usize),
    Mn,
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Cn => f.write_str("cn"),
            NodeId::Par => f.write_str("par"),
            NodeId::Nar(i) => write!(f, "nar{i}"),
            NodeId::Mn => f.write_str("mn"),
        }
    }
}

/// Unidirectional links of the topology.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinkId {
    CnPar,
    ParCn,
    ParNar(usize),
    NarPar(usize),
    ParMn,
    MnPar,
    NarMn(usize),
    MnNar(usize),
}

impl LinkId {
    pub fn src(self) -> NodeId {
        match self {
            LinkId::CnPar => NodeId::Cn,
            LinkId::ParCn | LinkId::ParNar(_) | LinkId::ParMn => NodeId::Par,
            LinkId::NarPar(i) | LinkId::NarMn(i) => NodeId::Nar(i),
            LinkId::MnPar | LinkId::MnNar(_) => NodeId::Mn,
        }
    }

    pub fn dst(self) -> NodeId {
        match self {
            LinkId::ParCn => NodeId::Cn,
            LinkId::CnPar | LinkId::NarPar(_) | LinkId::MnPar => NodeId::Par,
            LinkId::ParNar(i) | LinkId::MnNar(i) => NodeId::Nar(i),
            LinkId::ParMn | LinkId::NarMn(_) => NodeId::Mn,
        }
    }

    /// Over-the-air (wireless) as opposed to over-the-wire.
    pub fn is_air(self) -> bool {
        matches!(self, LinkId::ParMn | LinkId::MnPar | LinkId::NarMn(_) | LinkId::MnNar(_))
    }

    pub fn medium(self) -> &'static str {
        if self.is_air() {
            "air"
        } else {
            "wire"
        }
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}>{}", self.src(), self.dst())
    }
}

/// Timer tokens; each belongs to the node that armed it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Timer {
    /// Start the handoff (mobile node).
    Initiate,
    /// Resend RtSolPr if no PrRtAdv arrived; carries the attempt number.
    RtSolPrRetry(u32),
    /// Proceed without FBAck.
    FbackTimeout,
    /// Link-layer attachment to the given nAR completed.
    AttachDone(usize),
    /// Periodic finalize evaluation.
    DecisionPoll,
    /// Tolerable delay elapsed.
    ToleranceDeadline,
    /// The given nAR comes into radio range.
    Reachable(usize),
    /// pAR ends bicasting.
    BicastExpiry,
    /// nAR discards an untouched buffer; carries a generation number.
    BufferIdle(u64),
}

impl Timer {
    pub fn label(&self) -> String {
        match self {
            Timer::Initiate => "initiate".into(),
            Timer::RtSolPrRetry(n) => format!("rtsolpr_retry#{n}"),
            Timer::FbackTimeout => "fback_timeout".into(),
            Timer::AttachDone(i) => format!("attach_done:nar{i}"),
            Timer::DecisionPoll => "decision_poll".into(),
            Timer::ToleranceDeadline => "tolerance_deadline".into(),
            Timer::Reachable(i) => format!("reachable:nar{i}"),
            Timer::BicastExpiry => "bicast_expiry".into(),
            Timer::BufferIdle(g) => format!("buffer_idle#{g}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HandoffPhase {
    Idle,
    Discovering,
    Initiated,
    LinkSwitching,
    Attached,
    Finalized,
}

impl HandoffPhase {
    pub fn as_str(self) -> &'static str {
        match self {
            HandoffPhase::Idle => "idle",
            HandoffPhase::Discovering => "discovering",
            HandoffPhase::Initiated => "initiated",
            HandoffPhase::LinkSwitching => "link_switching",
            HandoffPhase::Attached => "attached",
            HandoffPhase::Finalized => "finalized",
        }
    }
}

/// Phase machine state shared by every protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct HandoffState {
    pub phase: HandoffPhase,
    pub targets: Vec<usize>,
    pub episode_start: Option<SimTime>,
    pub episode_end: Option<SimTime>,
}

impl Default for HandoffState {
    fn default() -> Self {
        HandoffState { phase: HandoffPhase::Idle, targets: Vec::new(), episode_start: None, episode_end: None }
    }
}

/// How the mobile node decides when to finalize.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FinalizePolicy {
    /// Finalize toward the first target as soon as the handoff is set up.
    #[default]
    Immediate,
    /// Keep using the pAR until the timing algorithm says otherwise.
    Algorithm,
}

/// Static description of one nAR as the protocols see it.
#[derive(Clone, Debug, PartialEq)]
pub struct NarInfo {
    pub name: String,
    pub tier: Tier,
    pub accept_handoff: bool,
    pub buffer_capacity: usize,
    pub downlink_bps: u64,
    /// Round trip between the mobile node and this nAR, seconds.
    pub air_rtt_s: f64,
    /// One-way CN to MN latency once attached here, seconds.
    pub path_latency_s: f64,
}

/// Protocol parameters derived from a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ProtocolConfig {
    pub protocol: ProtocolKind,
    pub with_ah: bool,
    pub par_tier: Tier,
    pub par_downlink_bps: u64,
    pub nars: Vec<NarInfo>,
    pub targets: Vec<usize>,
    pub rtsolpr_retry: SimTime,
    pub fback_timeout: SimTime,
    pub bicast_timer: SimTime,
    pub buffer_idle_timeout: SimTime,
    pub policy: FinalizePolicy,
    pub loss_budget: Option<u64>,
    pub poll: SimTime,
    /// Use the TCP smoothed RTT as the MN-CN latency estimate.
    pub use_srtt: bool,
}

/// What a node may do while handling an event.
pub trait Ctx {
    fn now(&self) -> SimTime;
    fn send(&mut self, link: LinkId, frame: Frame);
    fn set_timer(&mut self, node: NodeId, after: SimTime, timer: Timer);
    fn note(&mut self, node: NodeId, event: TraceEvent, detail: String);
    /// Records a node-local event concerning one packet.
    fn note_packet(&mut self, node: NodeId, event: TraceEvent, packet: &DataPacket, detail: &str);
    /// Hands a packet to the mobile node's application.
    fn deliver(&mut self, packet: DataPacket, via: LinkId);
    /// Forces the pAR downlink loss for the rest of the run.
    fn start_handoff_loss(&mut self);
    /// Link-layer attachment delay, jitter included.
    fn attach_delay(&mut self) -> SimTime;
    /// Remaining window and smoothed RTT of a TCP flow, if any.
    fn tcp_snapshot(&self) -> Option<(u64, Option<f64>)>;
}

/// Inputs for the tolerable delay given a TCP snapshot.
pub fn timing_inputs(cfg: &ProtocolConfig, target: usize, snapshot: (u64, Option<f64>), missed_bytes: u64) -> TimingInputs {
    let nar = &cfg.nars[target];
    let (remaining, srtt) = snapshot;
    let latency = match (cfg.use_srtt, srtt) {
        (true, Some(s)) => s,
        _ => nar.path_latency_s,
    };
    TimingInputs {
        remaining_window_bytes: remaining,
        par_bandwidth_bps: cfg.par_downlink_bps as f64,
        mn_cn_latency_s: latency,
        buffer_delivery_s: crate::timing::buffer_delivery_time(missed_bytes, nar.downlink_bps as f64, nar.air_rtt_s),
    }
}

#[cfg(test)]
pub(crate) mod testctx {
    //! A recording context for exercising single nodes.
    use super::*;

    #[derive(Default)]
    pub struct RecCtx {
        pub now: SimTime,
        pub sent: Vec<(LinkId, Frame)>,
        pub timers: Vec<(NodeId, SimTime, Timer)>,
        pub notes: Vec<(NodeId, TraceEvent, String)>,
        pub packet_notes: Vec<(NodeId, TraceEvent, DataPacket, String)>,
        pub delivered: Vec<DataPacket>,
        pub loss_started: bool,
        pub snapshot: Option<(u64, Option<f64>)>,
    }

    impl RecCtx {
        pub fn take_sent(&mut self) -> Vec<(LinkId, Frame)> {
            std::mem::take(&mut self.sent)
        }

        pub fn signals(&self) -> Vec<(LinkId, SignalKind)> {
            self.sent
                .iter()
                .filter_map(|(l, f)| match f {
                    Frame::Signal(m) => Some((*l, m.kind)),
                    _ => None,
                })
                .collect()
        }
    }

    impl Ctx for RecCtx {
        fn now(&self) -> SimTime {
            self.now
        }
        fn send(&mut self, link: LinkId, frame: Frame) {
            self.sent.push((link, frame));
        }
        fn set_timer(&mut self, node: NodeId, after: SimTime, timer: Timer) {
            self.timers.push((node, self.now + after, timer));
        }
        fn note(&mut self, node: NodeId, event: TraceEvent, detail: String) {
            self.notes.push((node, event, detail));
        }
        fn note_packet(&mut self, node: NodeId, event: TraceEvent, packet: &DataPacket, detail: &str) {
            self.packet_notes.push((node, event, packet.clone(), detail.to_string()));
        }
        fn deliver(&mut self, packet: DataPacket, _via: LinkId) {
            self.delivered.push(packet);
        }
        fn start_handoff_loss(&mut self) {
            self.loss_started = true;
        }
        fn attach_delay(&mut self) -> SimTime {
            SimTime::from_millis(200)
        }
        fn tcp_snapshot(&self) -> Option<(u64, Option<f64>)> {
            self.snapshot
        }
    }

    pub fn config(protocol: ProtocolKind, targets: Vec<usize>) -> ProtocolConfig {
        let nar = |name: &str, tier| NarInfo {
            name: name.into(),
            tier,
            accept_handoff: true,
            buffer_capacity: 0,
            downlink_bps: 4_000_000,
            air_rtt_s: 0.004,
            path_latency_s: 0.02,
        };
        ProtocolConfig {
            protocol,
            with_ah: true,
            par_tier: Tier::Wlan,
            par_downlink_bps: 4_000_000,
            nars: vec![nar("WLAN2", Tier::Wlan), nar("WWAN", Tier::Wwan)],
            targets,
            rtsolpr_retry: SimTime::from_millis(100),
            fback_timeout: SimTime::from_millis(50),
            bicast_timer: SimTime::from_millis(500),
            buffer_idle_timeout: SimTime::from_millis(1000),
            policy: FinalizePolicy::Immediate,
            loss_budget: Some(10),
            poll: SimTime::from_millis(10),
            use_srtt: false,
        }
    }

    pub fn udp_packet(id: u64) -> DataPacket {
        DataPacket {
            id,
            flow_id: 0,
            counter: None,
            payload_bytes: 100,
            header_bytes: packet::UDP_HEADER_BYTES,
            path: PathTag::DirectFromPar,
            tunnel_overhead_bytes: 0,
            tcp: None,
        }
    }
}
