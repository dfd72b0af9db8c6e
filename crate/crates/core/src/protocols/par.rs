//! Previous access router: answers discovery, sets up forwarding toward the
//! target routers and decides which copies of each CN packet to emit.

use super::messages::{SignalKind, SignalPayload, SignalingMessage};
use super::packet::{DataPacket, Frame, PathTag};
use super::{Ctx, LinkId, NodeId, ProtocolConfig, ProtocolKind, Timer};
use crate::simcore::SimTime;
use crate::trace::TraceEvent;

#[derive(Clone, Debug, Default)]
pub struct ParState {
    targets: Vec<usize>,
    pending_hacks: usize,
    accepted: Vec<usize>,
    /// Reactive mode: the nAR that relayed the FBU.
    relay: Option<usize>,
    forwarding: bool,
    direct: bool,
    marking: bool,
    tunnel_to: Vec<usize>,
    next_counter: u64,
    stopped: bool,
    fback_sent: bool,
    forwarding_start: Option<SimTime>,
    direct_off: Option<SimTime>,
    stop_received: Option<SimTime>,
}

impl ParState {
    pub fn new() -> Self {
        ParState { next_counter: 1, ..Default::default() }
    }

    pub fn forwarding_start(&self) -> Option<SimTime> {
        self.forwarding_start
    }

    pub fn direct_off(&self) -> Option<SimTime> {
        self.direct_off
    }

    pub fn stop_received(&self) -> Option<SimTime> {
        self.stop_received
    }

    pub fn is_bicasting(&self) -> bool {
        self.forwarding && self.direct
    }

    pub fn tunnel_targets(&self) -> &[usize] {
        &self.tunnel_to
    }

    /// Last counter value assigned, 0 before marking starts.
    pub fn last_counter(&self) -> u64 {
        self.next_counter - 1
    }

    fn signal(&self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx, link: LinkId, kind: SignalKind, payload: SignalPayload) {
        ctx.send(link, Frame::Signal(SignalingMessage::new(kind, cfg.with_ah, payload)));
    }

    /// A packet from the CN destined to the mobile node's previous address.
    pub fn on_cn_data(&mut self, ctx: &mut dyn Ctx, mut pkt: DataPacket) {
        if !self.forwarding {
            ctx.send(LinkId::ParMn, Frame::Data(pkt.with_path(PathTag::DirectFromPar)));
            return;
        }
        if self.marking {
            pkt.counter = Some(self.next_counter);
            self.next_counter += 1;
        }
        if self.direct {
            ctx.send(LinkId::ParMn, Frame::Data(pkt.with_path(PathTag::DirectFromPar)));
        }
        for &n in &self.tunnel_to {
            ctx.send(LinkId::ParNar(n), Frame::Data(pkt.with_path(PathTag::TunneledToNar)));
        }
    }

    pub fn on_signal(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx, msg: SignalingMessage, via: LinkId) {
        match (msg.kind, msg.payload) {
            (SignalKind::RtSolPr, _) => {
                let cands = (0..cfg.nars.len()).collect();
                self.signal(cfg, ctx, LinkId::ParMn, SignalKind::PrRtAdv, SignalPayload::Candidates(cands));
            }
            (SignalKind::FBU, SignalPayload::Targets(t)) => self.on_fbu(cfg, ctx, t, None),
            (SignalKind::FBU, SignalPayload::RelayedFbu { nar }) => self.on_fbu(cfg, ctx, vec![nar], Some(nar)),
            (SignalKind::HAck, SignalPayload::Router { nar, accepted }) => self.on_hack(cfg, ctx, nar, accepted),
            (SignalKind::StopBicast, SignalPayload::Router { nar, .. }) => self.on_stop_bicast(ctx, nar, via),
            (kind, _) => ctx.note(NodeId::Par, TraceEvent::Drop, format!("unexpected {}", kind.as_str())),
        }
    }

    /// Sends HI to every target; a repeated FBU only repeats the FBAck.
    pub fn on_fbu(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx, targets: Vec<usize>, relay: Option<usize>) {
        if !self.targets.is_empty() {
            if self.fback_sent {
                self.send_fback(cfg, ctx);
            }
            return;
        }
        self.targets = targets;
        self.relay = relay;
        self.pending_hacks = self.targets.len();
        for &n in &self.targets {
            self.signal(cfg, ctx, LinkId::ParNar(n), SignalKind::HI, SignalPayload::Router { nar: n, accepted: true });
        }
    }

    pub fn on_hack(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx, nar: usize, accepted: bool) {
        if !self.targets.contains(&nar) || self.pending_hacks == 0 {
            return;
        }
        self.pending_hacks -= 1;
        if accepted {
            self.accepted.push(nar);
            if !self.forwarding {
                self.start_forwarding(cfg, ctx);
            }
            if !self.stopped {
                self.tunnel_to.push(nar);
            }
        } else {
            ctx.note(NodeId::Par, TraceEvent::Phase, format!("handoff_denied:nar{nar}"));
        }
        if self.pending_hacks == 0 {
            self.send_fback(cfg, ctx);
        }
    }

    fn start_forwarding(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx) {
        self.forwarding = true;
        self.forwarding_start = Some(ctx.now());
        ctx.start_handoff_loss();
        match cfg.protocol {
            ProtocolKind::Fmipv6Predictive | ProtocolKind::Fmipv6Reactive => self.direct = false,
            ProtocolKind::Fmipv6Bicast => {
                self.direct = cfg.bicast_timer > SimTime::ZERO;
                if self.direct {
                    ctx.set_timer(NodeId::Par, cfg.bicast_timer, Timer::BicastExpiry);
                }
            }
            ProtocolKind::SafetyNet => {
                self.direct = true;
                self.marking = true;
            }
        }
        if !self.direct {
            self.direct_off = Some(ctx.now());
        }
        ctx.note(NodeId::Par, TraceEvent::Phase, "forwarding_start".into());
    }

    fn send_fback(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx) {
        self.fback_sent = true;
        let payload = SignalPayload::Ack { accepted: !self.accepted.is_empty() };
        let link = match self.relay {
            Some(n) => LinkId::ParNar(n),
            None => LinkId::ParMn,
        };
        self.signal(cfg, ctx, link, SignalKind::FBAck, payload);
    }

    /// First StopBicast ends direct delivery and narrows the tunnel to the
    /// chosen router; later copies are no-ops.
    pub fn on_stop_bicast(&mut self, ctx: &mut dyn Ctx, nar: usize, via: LinkId) {
        if self.stopped {
            ctx.note(NodeId::Par, TraceEvent::Phase, format!("stop_bicast_repeat via {via}"));
            return;
        }
        self.stopped = true;
        self.stop_received = Some(ctx.now());
        self.turn_direct_off(ctx);
        self.tunnel_to.retain(|&n| n == nar);
        ctx.note(NodeId::Par, TraceEvent::Phase, format!("stop_bicast:nar{nar} via {via}"));
    }

    pub fn on_timer(&mut self, ctx: &mut dyn Ctx, timer: Timer) {
        if timer == Timer::BicastExpiry && self.direct {
            self.turn_direct_off(ctx);
            ctx.note(NodeId::Par, TraceEvent::Phase, "bicast_expired".into());
        }
    }

    fn turn_direct_off(&mut self, ctx: &mut dyn Ctx) {
        if self.direct {
            self.direct = false;
            self.direct_off = Some(ctx.now());
            ctx.note(NodeId::Par, TraceEvent::Phase, "direct_off".into());
        }
    }
}
