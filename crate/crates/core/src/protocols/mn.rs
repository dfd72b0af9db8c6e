//! Mobile node: discovery, handoff initiation, the finalize decision,
//! attachment and duplicate filtering.

use serde::Serialize;

use super::messages::{SignalKind, SignalPayload, SignalingMessage};
use super::packet::{DataPacket, Frame};
use super::receipt::{FilterVerdict, ReceiptSet};
use super::{
    timing_inputs, Ctx, FinalizePolicy, HandoffPhase, HandoffState, LinkId, NodeId, ProtocolConfig, ProtocolKind, Timer,
};
use crate::simcore::SimTime;
use crate::timing::{decide_finalize, tolerable_delay, Candidate, DecisionContext, FinalizeDecision, TimingInputs};
use crate::trace::TraceEvent;

/// Give up discovery after this many RtSolPr attempts.
const MAX_RTSOLPR_ATTEMPTS: u32 = 20;

/// The outcome of the finalize decision.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecisionRecord {
    pub at: SimTime,
    /// `immediate`, `finalize_horizontal`, `finalize_vertical` or `hard_disconnect`.
    pub label: &'static str,
    pub reason: Option<&'static str>,
    pub target: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct MnState {
    pub hs: HandoffState,
    old_up: bool,
    attached_to: Option<usize>,
    switching_to: Option<usize>,
    receipt: ReceiptSet,
    reachable: Vec<bool>,
    episode_losses: u64,
    loss_times: Vec<SimTime>,
    decision: Option<DecisionRecord>,
    frozen_inputs: Option<TimingInputs>,
    fna_sent: Option<SimTime>,
    aborted: bool,
}

impl MnState {
    pub fn new(reachable: Vec<bool>) -> Self {
        MnState {
            hs: HandoffState::default(),
            old_up: true,
            attached_to: None,
            switching_to: None,
            receipt: ReceiptSet::new(),
            reachable,
            episode_losses: 0,
            loss_times: Vec::new(),
            decision: None,
            frozen_inputs: None,
            fna_sent: None,
            aborted: false,
        }
    }

    pub fn phase(&self) -> HandoffPhase {
        self.hs.phase
    }

    pub fn receipt(&self) -> &ReceiptSet {
        &self.receipt
    }

    pub fn decision(&self) -> Option<&DecisionRecord> {
        self.decision.as_ref()
    }

    pub fn attached_to(&self) -> Option<usize> {
        self.attached_to
    }

    pub fn old_link_up(&self) -> bool {
        self.old_up
    }

    pub fn fna_sent(&self) -> Option<SimTime> {
        self.fna_sent
    }

    pub fn aborted(&self) -> bool {
        self.aborted
    }

    pub fn episode_losses(&self) -> u64 {
        self.episode_losses
    }

    /// Times of old-link losses counted toward the loss budget.
    pub fn loss_times(&self) -> &[SimTime] {
        &self.loss_times
    }

    /// Inputs of the tolerable delay, frozen when the episode started.
    pub fn frozen_inputs(&self) -> Option<TimingInputs> {
        self.frozen_inputs
    }

    pub fn hard_disconnect(&self) -> bool {
        self.decision.as_ref().is_some_and(|d| d.label == "hard_disconnect")
    }

    /// Link for acks and other upstream traffic.
    pub fn uplink(&self) -> Option<LinkId> {
        match self.attached_to {
            Some(n) => Some(LinkId::MnNar(n)),
            None if self.old_up => Some(LinkId::MnPar),
            None => None,
        }
    }

    fn waiting(&self) -> bool {
        self.hs.phase == HandoffPhase::Initiated && self.hs.episode_start.is_some() && self.decision.is_none()
    }

    fn set_phase(&mut self, ctx: &mut dyn Ctx, phase: HandoffPhase) {
        self.hs.phase = phase;
        ctx.note(NodeId::Mn, TraceEvent::Phase, phase.as_str().into());
    }

    fn signal(&self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx, link: LinkId, kind: SignalKind, payload: SignalPayload) {
        ctx.send(link, Frame::Signal(SignalingMessage::new(kind, cfg.with_ah, payload)));
    }

    pub fn on_timer(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx, timer: Timer) {
        match timer {
            Timer::Initiate => self.initiate(cfg, ctx),
            Timer::RtSolPrRetry(n) if self.hs.phase == HandoffPhase::Discovering => {
                if n >= MAX_RTSOLPR_ATTEMPTS {
                    self.aborted = true;
                    self.set_phase(ctx, HandoffPhase::Idle);
                    return;
                }
                self.signal(cfg, ctx, LinkId::MnPar, SignalKind::RtSolPr, SignalPayload::Empty);
                ctx.set_timer(NodeId::Mn, cfg.rtsolpr_retry, Timer::RtSolPrRetry(n + 1));
            }
            Timer::FbackTimeout if self.hs.phase == HandoffPhase::Initiated && self.hs.episode_start.is_none() => {
                ctx.note(NodeId::Mn, TraceEvent::Phase, "fback_missing".into());
                self.start_episode(cfg, ctx);
            }
            Timer::AttachDone(n) => self.attach(cfg, ctx, n),
            Timer::DecisionPoll if self.waiting() => {
                self.evaluate(cfg, ctx);
                if self.waiting() {
                    ctx.set_timer(NodeId::Mn, cfg.poll, Timer::DecisionPoll);
                }
            }
            Timer::ToleranceDeadline => self.evaluate(cfg, ctx),
            Timer::Reachable(n) => {
                if let Some(r) = self.reachable.get_mut(n) {
                    *r = true;
                }
                self.evaluate(cfg, ctx);
            }
            _ => {}
        }
    }

    /// Starts discovery (predictive) or loses the old link (reactive).
    pub fn initiate(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx) {
        if self.hs.phase != HandoffPhase::Idle {
            return;
        }
        assert!(!cfg.targets.is_empty(), "handoff needs at least one target");
        self.hs.targets = cfg.targets.clone();
        if cfg.protocol.is_predictive() {
            self.signal(cfg, ctx, LinkId::MnPar, SignalKind::RtSolPr, SignalPayload::Empty);
            ctx.set_timer(NodeId::Mn, cfg.rtsolpr_retry, Timer::RtSolPrRetry(1));
            self.set_phase(ctx, HandoffPhase::Discovering);
        } else {
            self.old_up = false;
            self.set_phase(ctx, HandoffPhase::Initiated);
            self.hs.episode_start = Some(ctx.now());
            self.finalize_first_reachable(ctx);
        }
    }

    pub fn on_signal(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx, msg: SignalingMessage) {
        match (msg.kind, msg.payload) {
            (SignalKind::PrRtAdv, SignalPayload::Candidates(c)) if self.hs.phase == HandoffPhase::Discovering => {
                self.hs.targets.retain(|t| c.contains(t));
                if self.hs.targets.is_empty() {
                    self.aborted = true;
                    self.set_phase(ctx, HandoffPhase::Idle);
                    return;
                }
                let targets = SignalPayload::Targets(self.hs.targets.clone());
                self.signal(cfg, ctx, LinkId::MnPar, SignalKind::FBU, targets);
                ctx.set_timer(NodeId::Mn, cfg.fback_timeout, Timer::FbackTimeout);
                self.set_phase(ctx, HandoffPhase::Initiated);
            }
            (SignalKind::FBAck, SignalPayload::Ack { accepted }) => {
                if !cfg.protocol.is_predictive() {
                    if self.hs.phase == HandoffPhase::Attached {
                        self.set_phase(ctx, HandoffPhase::Finalized);
                    }
                } else if self.hs.phase == HandoffPhase::Initiated && self.hs.episode_start.is_none() {
                    if accepted {
                        self.start_episode(cfg, ctx);
                    } else {
                        self.aborted = true;
                        self.set_phase(ctx, HandoffPhase::Idle);
                    }
                }
            }
            _ => {}
        }
    }

    fn start_episode(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx) {
        self.hs.episode_start = Some(ctx.now());
        ctx.note(NodeId::Mn, TraceEvent::Phase, "episode_start".into());
        match cfg.policy {
            FinalizePolicy::Immediate => self.finalize_first_reachable(ctx),
            FinalizePolicy::Algorithm => {
                if let Some(snap) = ctx.tcp_snapshot() {
                    let probe = self.hs.targets.iter().copied().find(|&t| self.reachable[t]).unwrap_or(self.hs.targets[0]);
                    let inputs = timing_inputs(cfg, probe, snap, 0);
                    let tt = tolerable_delay(&inputs);
                    self.frozen_inputs = Some(inputs);
                    ctx.note(NodeId::Mn, TraceEvent::Decision, format!("tolerable_delay_s={tt:.6}"));
                    ctx.set_timer(NodeId::Mn, SimTime::from_secs_f64(tt.max(0.0)), Timer::ToleranceDeadline);
                }
                self.evaluate(cfg, ctx);
                if self.waiting() {
                    ctx.set_timer(NodeId::Mn, cfg.poll, Timer::DecisionPoll);
                }
            }
        }
    }

    fn finalize_first_reachable(&mut self, ctx: &mut dyn Ctx) {
        let target = self.hs.targets.iter().copied().find(|&t| self.reachable[t]);
        let rec = DecisionRecord {
            at: ctx.now(),
            label: if target.is_some() { "immediate" } else { "hard_disconnect" },
            reason: None,
            target,
        };
        self.record(ctx, rec);
        if let Some(t) = target {
            self.switch_to(ctx, t);
        }
    }

    fn record(&mut self, ctx: &mut dyn Ctx, rec: DecisionRecord) {
        let target = rec.target.map_or("-".to_string(), |t| format!("nar{t}"));
        ctx.note(NodeId::Mn, TraceEvent::Decision, format!("{} {} {}", rec.label, target, rec.reason.unwrap_or("-")));
        self.decision = Some(rec);
    }

    /// Runs the timing algorithm if a decision is still pending.
    pub fn evaluate(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx) {
        if !self.waiting() {
            return;
        }
        let cands: Vec<Candidate> =
            self.hs.targets.iter().map(|&t| Candidate { nar: t, tier: cfg.nars[t].tier, reachable: self.reachable[t] }).collect();
        let dc = DecisionContext {
            clock: ctx.now(),
            episode_start: self.hs.episode_start.expect("waiting implies an episode"),
            current_tier: cfg.par_tier,
            candidates: &cands,
            tolerance: self.frozen_inputs,
            loss_budget: cfg.loss_budget,
            losses_so_far: self.episode_losses,
        };
        let d = decide_finalize(&dc);
        if d == FinalizeDecision::KeepWaiting {
            return;
        }
        let rec = DecisionRecord { at: ctx.now(), label: d.label(), reason: d.reason().map(|r| r.as_str()), target: d.target() };
        self.record(ctx, rec);
        if let Some(t) = d.target() {
            self.switch_to(ctx, t);
        }
    }

    fn switch_to(&mut self, ctx: &mut dyn Ctx, target: usize) {
        self.switching_to = Some(target);
        self.set_phase(ctx, HandoffPhase::LinkSwitching);
        let delay = ctx.attach_delay();
        ctx.set_timer(NodeId::Mn, delay, Timer::AttachDone(target));
    }

    fn attach(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx, nar: usize) {
        if self.switching_to != Some(nar) || self.attached_to.is_some() {
            return;
        }
        self.attached_to = Some(nar);
        self.hs.episode_end = Some(ctx.now());
        self.fna_sent = Some(ctx.now());
        let up = LinkId::MnNar(nar);
        match cfg.protocol {
            ProtocolKind::SafetyNet => {
                let ranges = SignalPayload::Received(self.receipt.to_ranges().into_vec());
                self.signal(cfg, ctx, up, SignalKind::FNA, ranges);
                if self.old_up {
                    let stop = SignalPayload::Router { nar, accepted: true };
                    self.signal(cfg, ctx, LinkId::MnPar, SignalKind::StopBicast, stop);
                }
            }
            ProtocolKind::Fmipv6Reactive => {
                self.signal(cfg, ctx, up, SignalKind::FNA, SignalPayload::Empty);
                self.signal(cfg, ctx, up, SignalKind::FBU, SignalPayload::Targets(vec![nar]));
            }
            _ => self.signal(cfg, ctx, up, SignalKind::FNA, SignalPayload::Empty),
        }
        self.old_up = false;
        self.set_phase(ctx, HandoffPhase::Attached);
    }

    /// A pAR downlink frame was lost while the decision is pending.
    pub fn on_old_link_loss(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx) {
        if !self.waiting() {
            return;
        }
        self.episode_losses += 1;
        self.loss_times.push(ctx.now());
        self.evaluate(cfg, ctx);
    }

    /// Data arriving over either interface; marked duplicates stop here.
    pub fn on_data(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx, pkt: DataPacket, via: LinkId) {
        match via {
            LinkId::ParMn if !self.old_up => {
                ctx.note_packet(NodeId::Mn, TraceEvent::Drop, &pkt, "detached");
                return;
            }
            LinkId::NarMn(n) if self.attached_to != Some(n) => {
                ctx.note_packet(NodeId::Mn, TraceEvent::Drop, &pkt, "not attached");
                return;
            }
            LinkId::NarMn(_) if self.hs.phase == HandoffPhase::Attached && cfg.protocol.is_predictive() => {
                self.set_phase(ctx, HandoffPhase::Finalized);
            }
            _ => {}
        }
        match self.receipt.filter(pkt.counter) {
            FilterVerdict::DeliverToApp => ctx.deliver(pkt, via),
            FilterVerdict::DropDuplicate => ctx.note_packet(NodeId::Mn, TraceEvent::Dup, &pkt, "counter duplicate"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::packet::PathTag;
    use super::super::testctx::{config, udp_packet, RecCtx};
    use super::*;

    fn run_to_fbu(cfg: &ProtocolConfig, mn: &mut MnState, ctx: &mut RecCtx) {
        mn.on_timer(cfg, ctx, Timer::Initiate);
        assert_eq!(ctx.signals(), vec![(LinkId::MnPar, SignalKind::RtSolPr)]);
        assert_eq!(mn.phase(), HandoffPhase::Discovering);
        ctx.take_sent();
        mn.on_signal(cfg, ctx, SignalingMessage::new(SignalKind::PrRtAdv, true, SignalPayload::Candidates(vec![0, 1])));
        assert_eq!(mn.phase(), HandoffPhase::Initiated);
    }

    #[test]
    fn fbu_names_all_targets() {
        let cfg = config(ProtocolKind::SafetyNet, vec![0, 1]);
        let mut mn = MnState::new(vec![true, true]);
        let mut ctx = RecCtx::default();
        run_to_fbu(&cfg, &mut mn, &mut ctx);
        match &ctx.sent[0].1 {
            Frame::Signal(m) => {
                assert_eq!(m.kind, SignalKind::FBU);
                assert_eq!(m.size_bytes(), 168);
            }
            f => panic!("unexpected {f:?}"),
        }
    }

    #[test]
    fn lost_advertisement_is_retried() {
        let cfg = config(ProtocolKind::SafetyNet, vec![0]);
        let mut mn = MnState::new(vec![true, true]);
        let mut ctx = RecCtx::default();
        mn.on_timer(&cfg, &mut ctx, Timer::Initiate);
        ctx.take_sent();
        mn.on_timer(&cfg, &mut ctx, Timer::RtSolPrRetry(1));
        assert_eq!(ctx.signals(), vec![(LinkId::MnPar, SignalKind::RtSolPr)]);
        assert!(ctx.timers.iter().any(|(_, _, t)| *t == Timer::RtSolPrRetry(2)));
    }

    #[test]
    fn safetynet_attach_sends_fna_with_ranges_and_direct_stop() {
        let cfg = config(ProtocolKind::SafetyNet, vec![0]);
        let mut mn = MnState::new(vec![true, true]);
        let mut ctx = RecCtx::default();
        run_to_fbu(&cfg, &mut mn, &mut ctx);
        for c in [1, 2, 3, 7, 8] {
            let mut p = udp_packet(c);
            p.counter = Some(c);
            mn.on_data(&cfg, &mut ctx, p, LinkId::ParMn);
        }
        mn.on_signal(&cfg, &mut ctx, SignalingMessage::new(SignalKind::FBAck, true, SignalPayload::Ack { accepted: true }));
        assert_eq!(mn.phase(), HandoffPhase::LinkSwitching);
        ctx.take_sent();
        ctx.now = SimTime::from_millis(200);
        mn.on_timer(&cfg, &mut ctx, Timer::AttachDone(0));
        assert_eq!(mn.phase(), HandoffPhase::Attached);
        assert_eq!(ctx.signals(), vec![(LinkId::MnNar(0), SignalKind::FNA), (LinkId::MnPar, SignalKind::StopBicast)]);
        match &ctx.sent[0].1 {
            Frame::Signal(m) => assert_eq!(m.payload, SignalPayload::Received(vec![(1, 3), (7, 8)])),
            f => panic!("unexpected {f:?}"),
        }
        assert!(!mn.old_link_up());
        assert_eq!(mn.uplink(), Some(LinkId::MnNar(0)));
    }

    #[test]
    fn duplicates_filtered_and_detached_dropped() {
        let cfg = config(ProtocolKind::SafetyNet, vec![0]);
        let mut mn = MnState::new(vec![true, true]);
        let mut ctx = RecCtx::default();
        for c in [5, 6, 6, 7] {
            let mut p = udp_packet(c);
            p.counter = Some(c);
            mn.on_data(&cfg, &mut ctx, p, LinkId::ParMn);
        }
        assert_eq!(ctx.delivered.iter().map(|p| p.counter.unwrap()).collect::<Vec<_>>(), [5, 6, 7]);
        mn.old_up = false;
        mn.on_data(&cfg, &mut ctx, udp_packet(9), LinkId::ParMn);
        assert_eq!(ctx.delivered.len(), 3);
        assert_eq!(ctx.packet_notes.last().unwrap().3, "detached");
    }

    #[test]
    fn unmarked_copies_pass_through() {
        let cfg = config(ProtocolKind::Fmipv6Bicast, vec![0]);
        let mut mn = MnState::new(vec![true]);
        let mut ctx = RecCtx::default();
        mn.on_data(&cfg, &mut ctx, udp_packet(1), LinkId::ParMn);
        mn.on_data(&cfg, &mut ctx, udp_packet(1), LinkId::ParMn);
        assert_eq!(ctx.delivered.len(), 2);
    }

    #[test]
    fn reactive_sends_fna_and_fbu_after_attach() {
        let cfg = config(ProtocolKind::Fmipv6Reactive, vec![0]);
        let mut mn = MnState::new(vec![true, true]);
        let mut ctx = RecCtx::default();
        mn.on_timer(&cfg, &mut ctx, Timer::Initiate);
        assert!(ctx.signals().is_empty(), "no FBU before the link switch");
        assert_eq!(mn.phase(), HandoffPhase::LinkSwitching);
        mn.on_timer(&cfg, &mut ctx, Timer::AttachDone(0));
        assert_eq!(ctx.signals(), vec![(LinkId::MnNar(0), SignalKind::FNA), (LinkId::MnNar(0), SignalKind::FBU)]);
    }

    #[test]
    fn path_b_budget_forces_vertical() {
        let mut cfg = config(ProtocolKind::SafetyNet, vec![0, 1]);
        cfg.policy = FinalizePolicy::Algorithm;
        let mut mn = MnState::new(vec![false, true]);
        let mut ctx = RecCtx::default();
        run_to_fbu(&cfg, &mut mn, &mut ctx);
        mn.on_signal(&cfg, &mut ctx, SignalingMessage::new(SignalKind::FBAck, true, SignalPayload::Ack { accepted: true }));
        assert!(mn.decision().is_none());
        for _ in 0..9 {
            mn.on_old_link_loss(&cfg, &mut ctx);
        }
        assert!(mn.decision().is_none());
        mn.on_old_link_loss(&cfg, &mut ctx);
        let d = mn.decision().unwrap();
        assert_eq!((d.label, d.target), ("finalize_vertical", Some(1)));
    }

    #[test]
    fn path_a_reachability_forces_horizontal() {
        let mut cfg = config(ProtocolKind::SafetyNet, vec![0, 1]);
        cfg.policy = FinalizePolicy::Algorithm;
        let mut mn = MnState::new(vec![false, true]);
        let mut ctx = RecCtx::default();
        run_to_fbu(&cfg, &mut mn, &mut ctx);
        mn.on_signal(&cfg, &mut ctx, SignalingMessage::new(SignalKind::FBAck, true, SignalPayload::Ack { accepted: true }));
        mn.on_timer(&cfg, &mut ctx, Timer::Reachable(0));
        let d = mn.decision().unwrap();
        assert_eq!((d.label, d.target), ("finalize_horizontal", Some(0)));
    }

    #[test]
    fn negative_fback_aborts() {
        let cfg = config(ProtocolKind::Fmipv6Predictive, vec![0]);
        let mut mn = MnState::new(vec![true]);
        let mut ctx = RecCtx::default();
        run_to_fbu(&cfg, &mut mn, &mut ctx);
        mn.on_signal(&cfg, &mut ctx, SignalingMessage::new(SignalKind::FBAck, true, SignalPayload::Ack { accepted: false }));
        assert!(mn.aborted());
        assert_eq!(mn.phase(), HandoffPhase::Idle);
    }

    #[test]
    fn flushed_copy_after_direct_is_dropped() {
        let cfg = config(ProtocolKind::SafetyNet, vec![0]);
        let mut mn = MnState::new(vec![true]);
        let mut ctx = RecCtx::default();
        let mut p = udp_packet(9);
        p.counter = Some(9);
        mn.on_data(&cfg, &mut ctx, p.clone(), LinkId::ParMn);
        mn.attached_to = Some(0);
        mn.on_data(&cfg, &mut ctx, p.with_path(PathTag::FlushedFromBuffer), LinkId::NarMn(0));
        assert_eq!(ctx.delivered.len(), 1);
    }
}
