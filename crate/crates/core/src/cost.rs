//! Closed-form signaling and data overhead model for one handoff.
//!
//! Data components are counted in payload bytes. A window of `d` seconds at
//! `rate` bits/s holds `ceil(rate * d / (8 * payload))` packets; boundary
//! packets count whole, which matches the simulator's packet-granular
//! accounting.

use serde::Serialize;

use crate::protocols::messages::{SignalKind, FBU_BYTES_PER_EXTRA_TARGET};
use crate::protocols::packet::TUNNEL_OVERHEAD_BYTES;
use crate::protocols::ProtocolKind;

/// Bytes the IPsec Authentication Header adds to every message.
pub const AH_BYTES: u64 = 24;

/// Plain and authenticated sizes for the eight signaling messages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MessageSizeTable {
    entries: [(SignalKind, u64, u64); 8],
}

impl MessageSizeTable {
    pub const STANDARD: MessageSizeTable = MessageSizeTable {
        entries: [
            (SignalKind::FBU, 112, 136),
            (SignalKind::FBAck, 72, 96),
            (SignalKind::HI, 112, 136),
            (SignalKind::HAck, 72, 96),
            (SignalKind::RtSolPr, 64, 88),
            (SignalKind::PrRtAdv, 80, 104),
            (SignalKind::FNA, 64, 88),
            (SignalKind::StopBicast, 48, 72),
        ],
    };

    pub const fn size(&self, kind: SignalKind, with_ah: bool) -> u64 {
        let mut i = 0;
        while i < self.entries.len() {
            let (k, plain, ah) = self.entries[i];
            if k as u8 == kind as u8 {
                return if with_ah { ah } else { plain };
            }
            i += 1;
        }
        panic!("message kind missing from size table")
    }

    pub fn rows(&self) -> impl Iterator<Item = (SignalKind, u64, u64)> + '_ {
        self.entries.iter().copied()
    }
}

fn ah(kind: SignalKind) -> u64 {
    MessageSizeTable::STANDARD.size(kind, true)
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum CostError {
    #[error("at least one target router is required")]
    NoTargets,
    #[error("{0} supports exactly one target router, got {1}")]
    SingleTargetOnly(&'static str, usize),
    #[error("parameter `{0}` must be finite and non-negative")]
    Negative(&'static str),
}

fn check_targets(protocol: ProtocolKind, n: usize) -> Result<(), CostError> {
    if n == 0 {
        return Err(CostError::NoTargets);
    }
    if n > 1 && protocol != ProtocolKind::SafetyNet {
        return Err(CostError::SingleTargetOnly(protocol.as_str(), n));
    }
    Ok(())
}

/// Over-the-air signaling bytes for one handoff, Authentication Header on.
pub fn ota_signaling(protocol: ProtocolKind, num_targets: usize) -> Result<u64, CostError> {
    check_targets(protocol, num_targets)?;
    let fbu = ah(SignalKind::FBU) + FBU_BYTES_PER_EXTRA_TARGET * (num_targets as u64 - 1);
    let predictive = ah(SignalKind::RtSolPr) + ah(SignalKind::PrRtAdv) + fbu + ah(SignalKind::FBAck) + ah(SignalKind::FNA);
    Ok(match protocol {
        ProtocolKind::SafetyNet => predictive + ah(SignalKind::StopBicast),
        ProtocolKind::Fmipv6Predictive | ProtocolKind::Fmipv6Bicast => predictive,
        // no discovery; FNA and FBU go up the new link, FBAck comes back on it
        ProtocolKind::Fmipv6Reactive => ah(SignalKind::FNA) + fbu + ah(SignalKind::FBAck),
    })
}

/// Over-the-wire signaling bytes for a SafetyNet handoff: one HI/HAck pair
/// per target plus the relayed StopBicast.
pub fn otw_signaling(num_targets: usize) -> u64 {
    assert!(num_targets >= 1, "at least one target router is required");
    let per_target = ah(SignalKind::HI) + ah(SignalKind::HAck);
    per_target * num_targets as u64 + ah(SignalKind::StopBicast)
}

/// Over-the-wire signaling for any protocol.
pub fn otw_signaling_for(protocol: ProtocolKind, num_targets: usize) -> Result<u64, CostError> {
    check_targets(protocol, num_targets)?;
    let hi_hack = ah(SignalKind::HI) + ah(SignalKind::HAck);
    Ok(match protocol {
        ProtocolKind::SafetyNet => otw_signaling(num_targets),
        ProtocolKind::Fmipv6Predictive | ProtocolKind::Fmipv6Bicast => hi_hack,
        // the nAR relays the FBU to the pAR and the FBAck back
        ProtocolKind::Fmipv6Reactive => ah(SignalKind::FBU) + hi_hack + ah(SignalKind::FBAck),
    })
}

/// Inputs of the analytic data-overhead model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DataOverheadParams {
    pub protocol: ProtocolKind,
    /// Application rate in payload bits/s.
    pub rate_bps: f64,
    /// Payload bytes per packet, used for packet quantization.
    pub payload_bytes: u32,
    /// From forwarding start to the FNA being sent.
    pub handoff_latency_s: f64,
    /// From the FNA being sent to StopBicast reaching the pAR.
    pub stop_latency_s: f64,
    pub num_targets: usize,
    pub bicast_timer_s: f64,
    /// Loss on the previous router's downlink while the handoff runs.
    pub par_loss_prob: f64,
}

impl DataOverheadParams {
    /// A 100 B-payload flow with one target and no loss.
    pub fn new(protocol: ProtocolKind, rate_bps: f64, handoff_latency_s: f64, stop_latency_s: f64) -> Self {
        DataOverheadParams {
            protocol,
            rate_bps,
            payload_bytes: 100,
            handoff_latency_s,
            stop_latency_s,
            num_targets: 1,
            bicast_timer_s: 0.5,
            par_loss_prob: 0.0,
        }
    }

    fn validate(&self) -> Result<(), CostError> {
        let fields = [
            ("rate_bps", self.rate_bps),
            ("handoff_latency_s", self.handoff_latency_s),
            ("stop_latency_s", self.stop_latency_s),
            ("bicast_timer_s", self.bicast_timer_s),
            ("par_loss_prob", self.par_loss_prob),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(CostError::Negative(name));
            }
        }
        if self.payload_bytes == 0 {
            return Err(CostError::Negative("payload_bytes"));
        }
        check_targets(self.protocol, self.num_targets)
    }

    /// Packets a window of `secs` holds, boundary packets counted whole.
    pub fn packets_in(&self, secs: f64) -> u64 {
        let exact = self.rate_bps * secs / (8.0 * self.payload_bytes as f64);
        // shave float noise so exact multiples do not round up
        (exact - 1e-9).ceil().max(0.0) as u64
    }

    fn bytes_in(&self, secs: f64) -> u64 {
        self.packets_in(secs) * self.payload_bytes as u64
    }
}

/// Byte breakdown of one handoff.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CostReport {
    pub protocol: String,
    pub handoff_latency_ms: f64,
    pub stop_latency_ms: f64,
    pub ota_signaling_bytes: u64,
    pub otw_signaling_bytes: u64,
    /// Data the pAR sends over the old air link because of the handoff.
    pub ota_old_link_data_bytes: u64,
    /// Data flushed from the nAR buffer over the new air link.
    pub ota_new_link_data_bytes: u64,
    /// Tunneled bytes between pAR and nAR(s), 40 B per packet included.
    pub otw_tunnel_bytes: u64,
    /// Bytes carried over the air that the mobile node already had; a
    /// subset of the two data components, not added to the total.
    pub duplicate_bytes: u64,
    pub resend_bytes: u64,
    /// Set when no resend figure was supplied.
    pub resends_missing: bool,
    pub total_ota_bytes: u64,
    /// Data the CN sent during the handoff, which must cross the air once
    /// under any protocol.
    pub baseline_data_bytes: u64,
    /// `total_ota_bytes - baseline_data_bytes`: what the handoff adds.
    pub overhead_ota_bytes: u64,
}

impl CostReport {
    /// Recomputes both totals from the components.
    pub fn finish(&mut self) {
        self.total_ota_bytes =
            self.ota_signaling_bytes + self.ota_old_link_data_bytes + self.ota_new_link_data_bytes + self.resend_bytes;
        self.overhead_ota_bytes = self.total_ota_bytes.saturating_sub(self.baseline_data_bytes);
    }

    pub fn with_resends(mut self, resend_bytes: Option<u64>) -> Self {
        self.resend_bytes = resend_bytes.unwrap_or(0);
        self.resends_missing = resend_bytes.is_none();
        self.finish();
        self
    }
}

/// Analytic per-protocol data costs, with signaling filled in.
pub fn data_overhead(p: &DataOverheadParams) -> Result<CostReport, CostError> {
    p.validate()?;
    let h = p.handoff_latency_s;
    let handoff_pkts = p.packets_in(h);
    let handoff_bytes = handoff_pkts * p.payload_bytes as u64;
    let tunnel = (handoff_bytes + TUNNEL_OVERHEAD_BYTES as u64 * handoff_pkts) * p.num_targets as u64;
    let (old, new, dup, otw_tunnel) = match p.protocol {
        ProtocolKind::SafetyNet => {
            let lost = (handoff_pkts as f64 * p.par_loss_prob).round() as u64 * p.payload_bytes as u64;
            let tail = p.bytes_in(p.stop_latency_s);
            (handoff_bytes + tail, lost, tail, tunnel)
        }
        ProtocolKind::Fmipv6Predictive => (0, handoff_bytes, 0, tunnel),
        ProtocolKind::Fmipv6Bicast => {
            let direct = p.bytes_in(p.bicast_timer_s);
            // direct copies beyond the handoff reach a detached interface,
            // and every buffered packet was already seen directly
            let wasted = direct.saturating_sub(handoff_bytes) + handoff_bytes.min(direct);
            (direct, handoff_bytes, wasted, tunnel)
        }
        // the window before forwarding starts is simply lost
        ProtocolKind::Fmipv6Reactive => (0, 0, 0, 0),
    };
    let mut r = CostReport {
        protocol: p.protocol.as_str().to_string(),
        handoff_latency_ms: h * 1e3,
        stop_latency_ms: p.stop_latency_s * 1e3,
        ota_signaling_bytes: ota_signaling(p.protocol, p.num_targets)?,
        otw_signaling_bytes: otw_signaling_for(p.protocol, p.num_targets)?,
        ota_old_link_data_bytes: old,
        ota_new_link_data_bytes: new,
        otw_tunnel_bytes: otw_tunnel,
        duplicate_bytes: dup,
        resend_bytes: 0,
        resends_missing: false,
        total_ota_bytes: 0,
        baseline_data_bytes: handoff_bytes,
        overhead_ota_bytes: 0,
    };
    r.finish();
    Ok(r)
}

/// Analytic costs plus resend bytes observed in a simulation.
pub fn experimental_total(p: &DataOverheadParams, resend_bytes: Option<u64>) -> Result<CostReport, CostError> {
    Ok(data_overhead(p)?.with_resends(resend_bytes))
}
