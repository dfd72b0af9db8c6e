//! Per-run summaries, cost accounting from the trace, parameter sweeps and
//! protocol comparisons.

use serde::Serialize;

use crate::cost::{data_overhead, CostError, CostReport, DataOverheadParams};
use crate::protocols::packet::TUNNEL_OVERHEAD_BYTES;
use crate::protocols::{LinkId, NodeId, PathTag, ProtocolKind};
use crate::scenario::{Scenario, ScenarioError, TrafficSpec};
use crate::sim::RunResult;
use crate::simcore::SimTime;
use crate::trace::{FrameKind, TraceEvent};
use crate::traffic::{measure_impact, Window};

/// One row of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub scenario: String,
    pub protocol: String,
    pub seed: u64,
    pub sent_packets: u64,
    pub delivered_unique: u64,
    pub app_losses: u64,
    pub app_duplicates: u64,
    pub handoff_latency_ms: Option<f64>,
    pub stop_latency_ms: Option<f64>,
    pub decision: Option<String>,
    pub decision_reason: Option<String>,
    pub target: Option<String>,
    pub finalize_ms: Option<f64>,
    pub tolerable_delay_ms: Option<f64>,
    pub hard_disconnect: bool,
    pub aborted: bool,
    pub episode_losses: u64,
    pub flushed_packets: u64,
    pub flushed_bytes: u64,
    pub unrecoverable: u64,
    pub tcp_timeouts: Option<u32>,
    pub tcp_fast_retransmits: Option<u32>,
    pub progress_handoff: Option<u64>,
    pub progress_reference: Option<u64>,
    pub resent_handoff: Option<u64>,
    pub impact_pct: Option<f64>,
    pub ota_signaling_bytes: u64,
    pub otw_signaling_bytes: u64,
    pub total_ota_bytes: u64,
}

fn ms(t: SimTime) -> f64 {
    t.as_millis_f64()
}

/// Measurement windows of a scenario.
pub fn windows(sc: &Scenario) -> (Window, Window) {
    let m = &sc.measurement;
    (
        Window::from_millis(m.handoff_window_ms[0], m.handoff_window_ms[1]),
        Window::from_millis(m.reference_window_ms[0], m.reference_window_ms[1]),
    )
}

pub fn summarize(res: &RunResult) -> RunSummary {
    let sc = &res.scenario;
    let h = &res.handoff;
    let name = |i: usize| sc.nars[i].name.clone();
    let (hw, rw) = windows(sc);
    let impact = measure_impact(&res.stats, hw, rw).ok();
    let cost = simulated_cost(res);
    let tcp = res.tcp.as_ref();
    RunSummary {
        scenario: sc.name.clone(),
        protocol: sc.protocol.as_str().to_string(),
        seed: sc.seed,
        sent_packets: res.stats.sent_packets,
        delivered_unique: match (&res.tcp, &sc.traffic) {
            (Some(t), TrafficSpec::Tcp { tcp: cfg, .. }) => t.final_rcv_nxt / cfg.segment_bytes as u64,
            _ => res.stats.delivered_unique(),
        },
        app_losses: if tcp.is_some() { 0 } else { res.app_losses() },
        app_duplicates: res.app_duplicates(),
        handoff_latency_ms: h.handoff_latency().map(ms),
        stop_latency_ms: h.stop_latency().map(ms),
        decision: h.decision.as_ref().map(|d| d.label.to_string()),
        decision_reason: h.decision.as_ref().and_then(|d| d.reason.map(str::to_string)),
        target: h.decision.as_ref().and_then(|d| d.target).map(name),
        finalize_ms: h.decision.as_ref().map(|d| ms(d.at)),
        tolerable_delay_ms: h.tolerable_delay_s.map(|s| s * 1e3),
        hard_disconnect: h.decision.as_ref().is_some_and(|d| d.label == "hard_disconnect"),
        aborted: h.aborted,
        episode_losses: h.episode_losses,
        flushed_packets: res.nars.iter().map(|n| n.flushed_packets).sum(),
        flushed_bytes: res.nars.iter().map(|n| n.flushed_bytes).sum(),
        unrecoverable: res.nars.iter().map(|n| n.unrecoverable.len() as u64).sum(),
        tcp_timeouts: tcp.map(|t| t.timeouts),
        tcp_fast_retransmits: tcp.map(|t| t.fast_retransmits),
        progress_handoff: impact.map(|i| i.progress_handoff),
        progress_reference: impact.map(|i| i.progress_reference),
        resent_handoff: impact.map(|i| i.resent_handoff),
        impact_pct: impact.map(|i| i.impact * 100.0),
        ota_signaling_bytes: cost.ota_signaling_bytes,
        otw_signaling_bytes: cost.otw_signaling_bytes,
        total_ota_bytes: cost.total_ota_bytes,
    }
}

/// Cost breakdown counted from the trace.
///
/// The handoff spans forwarding start to the FNA being sent; old-link data
/// runs until direct delivery stops; tunnel and baseline bytes are taken
/// over the handoff span to line up with the analytic model, which counts
/// payload plus the 40 B tunnel header per packet.
pub fn simulated_cost(res: &RunResult) -> CostReport {
    let h = &res.handoff;
    let fwd = h.forwarding_start.unwrap_or(SimTime::MAX);
    let fna = h.fna_sent.unwrap_or(SimTime::MAX);
    let direct_off = h.direct_off.unwrap_or(SimTime::MAX);
    let (hw, _) = windows(&res.scenario);
    let mut r = CostReport {
        protocol: res.scenario.protocol.as_str().to_string(),
        handoff_latency_ms: h.handoff_latency().map_or(0.0, ms),
        stop_latency_ms: h.stop_latency().map_or(0.0, ms),
        ..Default::default()
    };
    for rec in res.trace.iter() {
        let Some(link) = rec.link else {
            if rec.node == NodeId::Mn && rec.is_data() && rec.time >= fwd {
                let dup = match rec.event {
                    TraceEvent::Dup => true,
                    TraceEvent::Drop => rec.detail == "detached",
                    TraceEvent::Deliver => rec.detail.ends_with("duplicate"),
                    _ => false,
                };
                if dup {
                    r.duplicate_bytes += rec.payload_bytes;
                }
            }
            continue;
        };
        match (rec.event, rec.frame) {
            (TraceEvent::Signal, _) if link.is_air() => r.ota_signaling_bytes += rec.bytes,
            (TraceEvent::Signal, _) => r.otw_signaling_bytes += rec.bytes,
            (TraceEvent::Send, Some(FrameKind::Data)) => {
                let in_handoff = rec.time >= fwd && rec.time < fna;
                match link {
                    LinkId::ParMn if rec.time >= fwd && rec.time < direct_off => r.ota_old_link_data_bytes += rec.payload_bytes,
                    LinkId::ParNar(_) if in_handoff => r.otw_tunnel_bytes += rec.payload_bytes + TUNNEL_OVERHEAD_BYTES as u64,
                    LinkId::CnPar if in_handoff && rec.detail != "resend" => r.baseline_data_bytes += rec.payload_bytes,
                    _ => {}
                }
            }
            (TraceEvent::Flush, _) => r.ota_new_link_data_bytes += rec.payload_bytes,
            _ => {}
        }
    }
    let resends = if res.tcp.is_some() { Some(res.stats.resent_in(hw)) } else { None };
    r.with_resends(resends.or(Some(0)))
}

/// Analytic model fed with the latencies and loss this run exhibited.
pub fn analytic_cost_for(res: &RunResult) -> Result<CostReport, CostError> {
    let sc = &res.scenario;
    let (rate, payload) = match &sc.traffic {
        TrafficSpec::Udp { rate_bps, payload_bytes, .. } => (*rate_bps as f64, *payload_bytes),
        TrafficSpec::Tcp { tcp, .. } => (sc.par.downlink.bandwidth_bps as f64, tcp.segment_bytes),
    };
    let h = &res.handoff;
    let p = DataOverheadParams {
        protocol: sc.protocol,
        rate_bps: rate,
        payload_bytes: payload,
        handoff_latency_s: h.handoff_latency().map_or(0.0, |t| t.as_secs_f64()),
        stop_latency_s: h.stop_latency().map_or(0.0, |t| t.as_secs_f64()),
        num_targets: sc.handoff.targets.len(),
        bicast_timer_s: sc.handoff.bicast_timer_ms / 1e3,
        par_loss_prob: sc.handoff.par_downlink_loss.unwrap_or(0.0),
    };
    data_overhead(&p)
}

/// Counters the chosen nAR buffered before the FNA reached it, minus those
/// the mobile node received directly before sending the FNA. Computed from
/// the trace alone.
pub fn expected_flush_counters(res: &RunResult) -> Vec<u64> {
    let (Some(nar), Some(fna)) = (res.handoff.attached_to, res.handoff.fna_sent) else {
        return Vec::new();
    };
    let mut stored = std::collections::BTreeSet::new();
    let mut direct = std::collections::BTreeSet::new();
    for rec in res.trace.iter() {
        let Some(c) = rec.counter else { continue };
        if rec.node == NodeId::Nar(nar) && rec.event == TraceEvent::Buffer {
            stored.insert(c);
        }
        if rec.node == NodeId::Mn && rec.event == TraceEvent::Recv && rec.link == Some(LinkId::ParMn) && rec.time < fna {
            direct.insert(c);
        }
    }
    stored.difference(&direct).copied().collect()
}

/// Counters the nAR actually flushed, in flush order.
pub fn flushed_counters(res: &RunResult) -> Vec<u64> {
    res.trace
        .iter()
        .filter(|r| r.event == TraceEvent::Flush && r.path == Some(PathTag::FlushedFromBuffer))
        .filter_map(|r| r.counter)
        .collect()
}

/// Quantity a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Link-layer attach latency in ms.
    HandoffLatency,
    /// pAR downlink loss during the handoff.
    LossProb,
    /// One-way latency of the pAR air links in ms.
    ParLatency,
    /// Bicast timer in ms.
    StopTimer,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [SweepAxis::HandoffLatency, SweepAxis::LossProb, SweepAxis::ParLatency, SweepAxis::StopTimer];

    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::HandoffLatency => "handoff_latency",
            SweepAxis::LossProb => "loss_prob",
            SweepAxis::ParLatency => "par_latency",
            SweepAxis::StopTimer => "stop_timer",
        }
    }

    /// Copy of `sc` with this axis set to `value`.
    pub fn apply(self, sc: &Scenario, value: f64) -> Result<Scenario, ScenarioError> {
        let mut s = sc.clone();
        match self {
            SweepAxis::HandoffLatency => s.handoff.attach_latency_ms = value,
            SweepAxis::LossProb => s.handoff.par_downlink_loss = Some(value),
            SweepAxis::ParLatency => {
                s.par.downlink.latency_ms = value;
                s.par.uplink.latency_ms = value;
            }
            SweepAxis::StopTimer => s.handoff.bicast_timer_ms = value,
        }
        s.validate()?;
        Ok(s)
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown axis `{s}`; expected one of handoff_latency, loss_prob, par_latency, stop_timer"))
    }
}

/// One member simulation of a sweep.
#[derive(Clone, Debug)]
pub struct SweepJob {
    pub axis: SweepAxis,
    pub value: f64,
    pub scenario: Scenario,
}

/// Jobs ordered by value, then protocol.
pub fn sweep_jobs(
    base: &Scenario,
    axis: SweepAxis,
    values: &[f64],
    protocols: &[ProtocolKind],
) -> Result<Vec<SweepJob>, ScenarioError> {
    let mut jobs = Vec::new();
    for &v in values {
        for &p in protocols {
            let sc = axis.apply(&fit_targets(&base.with_protocol(p)), v)?;
            jobs.push(SweepJob { axis, value: v, scenario: sc });
        }
    }
    Ok(jobs)
}

/// Baselines accept one target; keep only the first.
pub fn fit_targets(sc: &Scenario) -> Scenario {
    let mut s = sc.clone();
    if s.protocol != ProtocolKind::SafetyNet {
        s.handoff.targets.truncate(1);
    }
    s
}

/// One row of a sweep's `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub protocol: String,
    pub seed: u64,
    pub app_losses: u64,
    pub app_duplicates: u64,
    pub handoff_latency_ms: Option<f64>,
    pub stop_latency_ms: Option<f64>,
    pub flushed_bytes: u64,
    pub impact_pct: Option<f64>,
    pub ota_signaling: u64,
    pub otw_signaling: u64,
    pub ota_old: u64,
    pub ota_new: u64,
    pub otw_tunnel: u64,
    pub duplicate_bytes: u64,
    pub resend_bytes: u64,
    pub total_ota: u64,
}

pub fn sweep_row(job: &SweepJob, res: &RunResult) -> SweepRow {
    let s = summarize(res);
    let c = simulated_cost(res);
    SweepRow {
        axis: job.axis,
        value: job.value,
        protocol: s.protocol,
        seed: s.seed,
        app_losses: s.app_losses,
        app_duplicates: s.app_duplicates,
        handoff_latency_ms: s.handoff_latency_ms,
        stop_latency_ms: s.stop_latency_ms,
        flushed_bytes: s.flushed_bytes,
        impact_pct: s.impact_pct,
        ota_signaling: c.ota_signaling_bytes,
        otw_signaling: c.otw_signaling_bytes,
        ota_old: c.ota_old_link_data_bytes,
        ota_new: c.ota_new_link_data_bytes,
        otw_tunnel: c.otw_tunnel_bytes,
        duplicate_bytes: c.duplicate_bytes,
        resend_bytes: c.resend_bytes,
        total_ota: c.total_ota_bytes,
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CompareError {
    #[error("scenarios `{0}` and `{1}` differ in more than the protocol")]
    Heterogeneous(String, String),
    #[error("nothing to compare")]
    Empty,
}

/// Checks that scenarios differ only in protocol (and the target list
/// baselines must trim).
pub fn check_comparable(scenarios: &[Scenario]) -> Result<(), CompareError> {
    let first = scenarios.first().ok_or(CompareError::Empty)?;
    let norm = |s: &Scenario| {
        let mut s = s.clone();
        s.protocol = ProtocolKind::SafetyNet;
        s.handoff.targets.truncate(1);
        s.name = String::new();
        s
    };
    let base = norm(first);
    for s in &scenarios[1..] {
        if norm(s) != base {
            return Err(CompareError::Heterogeneous(first.name.clone(), s.name.clone()));
        }
    }
    Ok(())
}

/// One row of a side-by-side protocol comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareRow {
    pub protocol: String,
    pub progress_handoff: Option<u64>,
    pub progress_reference: Option<u64>,
    pub resent_handoff: Option<u64>,
    pub impact_pct: Option<f64>,
    pub total_ota_bytes: u64,
    pub app_losses: u64,
    pub app_duplicates: u64,
}

pub fn compare_row(res: &RunResult) -> CompareRow {
    let s = summarize(res);
    CompareRow {
        protocol: s.protocol,
        progress_handoff: s.progress_handoff,
        progress_reference: s.progress_reference,
        resent_handoff: s.resent_handoff,
        impact_pct: s.impact_pct,
        total_ota_bytes: s.total_ota_bytes,
        app_losses: s.app_losses,
        app_duplicates: s.app_duplicates,
    }
}

/// One row of `cost.csv`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub protocol: String,
    pub handoff_latency_ms: f64,
    pub par_latency_ms: f64,
    pub ota_signaling: u64,
    pub otw_signaling: u64,
    pub ota_old: u64,
    pub ota_new: u64,
    pub otw_tunnel: u64,
    pub total: u64,
}

/// Analytic costs at one operating point; the pAR latency stands in for
/// the stop latency.
pub fn cost_row(
    protocol: ProtocolKind,
    handoff_latency_ms: f64,
    par_latency_ms: f64,
    rate_bps: f64,
    num_targets: usize,
) -> Result<CostRow, CostError> {
    let mut p = DataOverheadParams::new(protocol, rate_bps, handoff_latency_ms / 1e3, par_latency_ms / 1e3);
    p.num_targets = num_targets;
    let r = data_overhead(&p)?;
    Ok(CostRow {
        protocol: protocol.as_str().to_string(),
        handoff_latency_ms,
        par_latency_ms,
        ota_signaling: r.ota_signaling_bytes,
        otw_signaling: r.otw_signaling_bytes,
        ota_old: r.ota_old_link_data_bytes,
        ota_new: r.ota_new_link_data_bytes,
        otw_tunnel: r.otw_tunnel_bytes,
        total: r.total_ota_bytes,
    })
}

/// Cost rows over a latency grid for each protocol.
pub fn cost_curves(
    protocols: &[ProtocolKind],
    latencies_ms: &[f64],
    par_latency_ms: f64,
    rate_bps: f64,
    num_targets: usize,
) -> Result<Vec<CostRow>, CostError> {
    let mut rows = Vec::new();
    for &p in protocols {
        let n = if p == ProtocolKind::SafetyNet { num_targets } else { 1 };
        for &l in latencies_ms {
            rows.push(cost_row(p, l, par_latency_ms, rate_bps, n)?);
        }
    }
    Ok(rows)
}
