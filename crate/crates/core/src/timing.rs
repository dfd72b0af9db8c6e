//! Handoff timing: how long an upward vertical handoff may be postponed,
//! and when to stop waiting.

use serde::{Deserialize, Serialize};

use crate::simcore::SimTime;

/// Access technology tier, ordered from cheapest to costliest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Wlan,
    Wwan,
}

impl Tier {
    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Wlan => "wlan",
            Tier::Wwan => "wwan",
        }
    }
}

/// Inputs to the tolerable-delay computation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimingInputs {
    /// Remaining transfer window in bytes.
    pub remaining_window_bytes: u64,
    /// Bottleneck bandwidth before the handoff, bits/s.
    pub par_bandwidth_bps: f64,
    /// Mobile-to-correspondent latency via the new router, seconds.
    pub mn_cn_latency_s: f64,
    /// Time to deliver missed packets from the new router's buffer, seconds.
    pub buffer_delivery_s: f64,
}

/// Seconds the finalization may be delayed. Negative means "finalize now".
pub fn tolerable_delay(inputs: &TimingInputs) -> f64 {
    assert!(inputs.par_bandwidth_bps > 0.0, "bottleneck bandwidth must be positive");
    inputs.remaining_window_bytes as f64 * 8.0 / inputs.par_bandwidth_bps - inputs.mn_cn_latency_s - inputs.buffer_delivery_s
}

/// Round trip to the new router plus serialization of the missed bytes,
/// assuming the new link is otherwise idle.
pub fn buffer_delivery_time(missed_bytes: u64, nar_bandwidth_bps: f64, nar_rtt_s: f64) -> f64 {
    assert!(nar_bandwidth_bps > 0.0, "new-link bandwidth must be positive");
    nar_rtt_s + missed_bytes as f64 * 8.0 / nar_bandwidth_bps
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FinalizeReason {
    PreferredNetworkAppeared,
    LossBudgetExhausted,
    ToleranceExpired,
}

impl FinalizeReason {
    pub fn as_str(self) -> &'static str {
        match self {
            FinalizeReason::PreferredNetworkAppeared => "preferred_network_appeared",
            FinalizeReason::LossBudgetExhausted => "loss_budget_exhausted",
            FinalizeReason::ToleranceExpired => "tolerance_expired",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FinalizeDecision {
    KeepWaiting,
    FinalizeHorizontal {
        target: usize,
        reason: FinalizeReason,
    },
    FinalizeVertical {
        target: usize,
        reason: FinalizeReason,
    },
    /// Finalization was forced but no candidate router is reachable.
    HardDisconnect {
        reason: FinalizeReason,
    },
}

impl FinalizeDecision {
    pub fn target(&self) -> Option<usize> {
        match *self {
            FinalizeDecision::FinalizeHorizontal { target, .. } | FinalizeDecision::FinalizeVertical { target, .. } => {
                Some(target)
            }
            _ => None,
        }
    }

    pub fn reason(&self) -> Option<FinalizeReason> {
        match *self {
            FinalizeDecision::FinalizeHorizontal { reason, .. }
            | FinalizeDecision::FinalizeVertical { reason, .. }
            | FinalizeDecision::HardDisconnect { reason } => Some(reason),
            FinalizeDecision::KeepWaiting => None,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FinalizeDecision::KeepWaiting => "keep_waiting",
            FinalizeDecision::FinalizeHorizontal { .. } => "finalize_horizontal",
            FinalizeDecision::FinalizeVertical { .. } => "finalize_vertical",
            FinalizeDecision::HardDisconnect { .. } => "hard_disconnect",
        }
    }
}

/// A handoff target as seen by the decision function.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub nar: usize,
    pub tier: Tier,
    pub reachable: bool,
}

/// Snapshot the decision function evaluates.
#[derive(Clone, Debug)]
pub struct DecisionContext<'a> {
    pub clock: SimTime,
    pub episode_start: SimTime,
    pub current_tier: Tier,
    pub candidates: &'a [Candidate],
    /// Present for loss-intolerant (TCP) flows.
    pub tolerance: Option<TimingInputs>,
    pub loss_budget: Option<u64>,
    pub losses_so_far: u64,
}

/// Decides whether to keep using the previous router or finalize now.
///
/// A reachable candidate no costlier than the current network wins outright.
/// Otherwise exhausting the loss budget or the tolerable delay forces a move
/// to the cheapest reachable candidate.
pub fn decide_finalize(ctx: &DecisionContext<'_>) -> FinalizeDecision {
    let reachable = || ctx.candidates.iter().filter(|c| c.reachable);
    if let Some(c) = reachable().filter(|c| c.tier <= ctx.current_tier).min_by_key(|c| c.tier) {
        return FinalizeDecision::FinalizeHorizontal { target: c.nar, reason: FinalizeReason::PreferredNetworkAppeared };
    }
    let forced = if ctx.loss_budget.is_some_and(|b| ctx.losses_so_far >= b) {
        Some(FinalizeReason::LossBudgetExhausted)
    } else if ctx
        .tolerance
        .is_some_and(|t| ctx.clock.saturating_sub(ctx.episode_start) >= SimTime::from_secs_f64(tolerable_delay(&t).max(0.0)))
    {
        Some(FinalizeReason::ToleranceExpired)
    } else {
        None
    };
    match forced {
        None => FinalizeDecision::KeepWaiting,
        Some(reason) => match reachable().min_by_key(|c| c.tier) {
            Some(c) => FinalizeDecision::FinalizeVertical { target: c.nar, reason },
            None => FinalizeDecision::HardDisconnect { reason },
        },
    }
}
