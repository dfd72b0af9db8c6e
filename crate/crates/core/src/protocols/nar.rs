//! New access router: accepts handoffs, buffers tunneled packets and
//! flushes them once the mobile node announces itself.

use super::buffer::{NarBuffer, StoreOutcome};
use super::messages::{SignalKind, SignalPayload, SignalingMessage};
use super::packet::{DataPacket, Frame, PathTag};
use super::receipt::CounterRanges;
use super::{Ctx, LinkId, NodeId, ProtocolConfig, ProtocolKind, Timer};
use crate::trace::TraceEvent;

#[derive(Clone, Debug)]
pub struct NarState {
    idx: usize,
    buffer: NarBuffer,
    active: bool,
    attached: bool,
    idle_gen: u64,
    flushed_packets: u64,
    flushed_bytes: u64,
    unrecoverable: Vec<u64>,
    discarded: u64,
}

impl NarState {
    pub fn new(idx: usize, buffer_capacity: usize) -> Self {
        NarState {
            idx,
            buffer: NarBuffer::new(idx, buffer_capacity),
            active: false,
            attached: false,
            idle_gen: 0,
            flushed_packets: 0,
            flushed_bytes: 0,
            unrecoverable: Vec::new(),
            discarded: 0,
        }
    }

    fn node(&self) -> NodeId {
        NodeId::Nar(self.idx)
    }

    pub fn buffer(&self) -> &NarBuffer {
        &self.buffer
    }

    pub fn is_attached(&self) -> bool {
        self.attached
    }

    pub fn flushed_packets(&self) -> u64 {
        self.flushed_packets
    }

    /// Payload bytes sent from the buffer.
    pub fn flushed_bytes(&self) -> u64 {
        self.flushed_bytes
    }

    /// Counters the mobile node missed that overflow had already evicted.
    pub fn unrecoverable(&self) -> &[u64] {
        &self.unrecoverable
    }

    pub fn discarded(&self) -> u64 {
        self.discarded
    }

    fn signal(&self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx, link: LinkId, kind: SignalKind, payload: SignalPayload) {
        ctx.send(link, Frame::Signal(SignalingMessage::new(kind, cfg.with_ah, payload)));
    }

    pub fn on_signal(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx, msg: SignalingMessage) {
        let up = LinkId::NarPar(self.idx);
        let down = LinkId::NarMn(self.idx);
        match (msg.kind, msg.payload) {
            (SignalKind::HI, _) => {
                let accepted = cfg.nars[self.idx].accept_handoff;
                self.active = accepted;
                self.signal(cfg, ctx, up, SignalKind::HAck, SignalPayload::Router { nar: self.idx, accepted });
            }
            (SignalKind::FNA, payload) => self.on_fna(cfg, ctx, payload),
            // reactive mode: relay the mobile node's FBU, and the answer back
            (SignalKind::FBU, _) => {
                self.signal(cfg, ctx, up, SignalKind::FBU, SignalPayload::RelayedFbu { nar: self.idx });
            }
            (SignalKind::FBAck, payload) => self.signal(cfg, ctx, down, SignalKind::FBAck, payload),
            (kind, _) => ctx.note(self.node(), TraceEvent::Drop, format!("unexpected {}", kind.as_str())),
        }
    }

    /// Flushes the buffer: everything for the baselines, only what the
    /// mobile node lacks for SafetyNet, which then stops the bicast.
    pub fn on_fna(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx, payload: SignalPayload) {
        if self.attached {
            return;
        }
        self.attached = true;
        let flush = match (cfg.protocol, payload) {
            (ProtocolKind::SafetyNet, SignalPayload::Received(r)) => {
                let (missing, lost) = self.buffer.take_missing(&CounterRanges::from_ranges(&r));
                for &c in &lost {
                    ctx.note(self.node(), TraceEvent::Drop, format!("unrecoverable counter {c}"));
                }
                self.unrecoverable = lost;
                missing
            }
            _ => self.buffer.take_all(),
        };
        for (_, pkt) in flush {
            self.flushed_packets += 1;
            self.flushed_bytes += pkt.payload_bytes as u64;
            ctx.send(LinkId::NarMn(self.idx), Frame::Data(pkt.with_path(PathTag::FlushedFromBuffer)));
        }
        if cfg.protocol == ProtocolKind::SafetyNet {
            let stop = SignalPayload::Router { nar: self.idx, accepted: true };
            self.signal(cfg, ctx, LinkId::NarPar(self.idx), SignalKind::StopBicast, stop);
        }
    }

    /// A packet arriving through the tunnel from the pAR.
    pub fn on_tunneled(&mut self, cfg: &ProtocolConfig, ctx: &mut dyn Ctx, pkt: DataPacket) {
        if self.attached {
            ctx.send(LinkId::NarMn(self.idx), Frame::Data(pkt.with_path(PathTag::PostHandoffDirect)));
            return;
        }
        if !self.active {
            ctx.note_packet(self.node(), TraceEvent::Drop, &pkt, "no handoff");
            return;
        }
        let outcome = self.buffer.store(pkt.clone());
        let stored = pkt.with_path(PathTag::TunneledToNar);
        match outcome {
            StoreOutcome::Stored => ctx.note_packet(self.node(), TraceEvent::Buffer, &stored, "stored"),
            StoreOutcome::StoredEvicting { packet, .. } => {
                ctx.note_packet(self.node(), TraceEvent::Buffer, &stored, "stored");
                ctx.note_packet(self.node(), TraceEvent::Drop, &packet, "evicted");
            }
            StoreOutcome::Duplicate => ctx.note_packet(self.node(), TraceEvent::Dup, &stored, "buffer duplicate"),
        }
        self.idle_gen += 1;
        ctx.set_timer(self.node(), cfg.buffer_idle_timeout, Timer::BufferIdle(self.idle_gen));
    }

    pub fn on_timer(&mut self, ctx: &mut dyn Ctx, timer: Timer) {
        if let Timer::BufferIdle(g) = timer {
            if g == self.idle_gen && !self.attached && self.active {
                self.active = false;
                let n = self.buffer.discard();
                self.discarded += n as u64;
                ctx.note(self.node(), TraceEvent::Phase, format!("buffer_discarded:{n}"));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::testctx::{config, udp_packet, RecCtx};
    use super::*;

    fn marked(c: u64) -> DataPacket {
        let mut p = udp_packet(c).with_path(PathTag::TunneledToNar);
        p.counter = Some(c);
        p
    }

    fn active(protocol: ProtocolKind) -> (ProtocolConfig, NarState, RecCtx) {
        let cfg = config(protocol, vec![0]);
        let mut nar = NarState::new(0, 0);
        let mut ctx = RecCtx::default();
        nar.on_signal(&cfg, &mut ctx, SignalingMessage::simple(SignalKind::HI, true));
        assert_eq!(ctx.signals(), vec![(LinkId::NarPar(0), SignalKind::HAck)]);
        ctx.take_sent();
        (cfg, nar, ctx)
    }

    fn flushed_counters(ctx: &RecCtx) -> Vec<u64> {
        ctx.sent
            .iter()
            .filter_map(|(_, f)| match f {
                Frame::Data(p) if p.path == PathTag::FlushedFromBuffer => p.counter,
                _ => None,
            })
            .collect()
    }

    #[test]
    fn buffers_in_order_and_ignores_duplicates() {
        let (cfg, mut nar, mut ctx) = active(ProtocolKind::SafetyNet);
        for c in [1, 2, 3, 2] {
            nar.on_tunneled(&cfg, &mut ctx, marked(c));
        }
        assert_eq!(nar.buffer().keys().collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(nar.buffer().byte_total(), 300);
    }

    #[test]
    fn safetynet_flushes_only_missing_then_stops_bicast() {
        let (cfg, mut nar, mut ctx) = active(ProtocolKind::SafetyNet);
        for c in 1..=10 {
            nar.on_tunneled(&cfg, &mut ctx, marked(c));
        }
        let recv = CounterRanges::from_sorted([1, 2, 3, 7, 8]).into_vec();
        nar.on_fna(&cfg, &mut ctx, SignalPayload::Received(recv));
        assert_eq!(flushed_counters(&ctx), [4, 5, 6, 9, 10]);
        assert_eq!(nar.flushed_bytes(), 500);
        assert_eq!(ctx.signals(), vec![(LinkId::NarPar(0), SignalKind::StopBicast)]);
    }

    #[test]
    fn bicast_flushes_everything_even_if_received() {
        let (cfg, mut nar, mut ctx) = active(ProtocolKind::Fmipv6Bicast);
        for c in 1..=10 {
            nar.on_tunneled(&cfg, &mut ctx, udp_packet(c).with_path(PathTag::TunneledToNar));
        }
        nar.on_fna(&cfg, &mut ctx, SignalPayload::Empty);
        assert_eq!(nar.flushed_packets(), 10);
        assert!(ctx.signals().is_empty());
    }

    #[test]
    fn forwards_after_attach() {
        let (cfg, mut nar, mut ctx) = active(ProtocolKind::Fmipv6Predictive);
        nar.on_fna(&cfg, &mut ctx, SignalPayload::Empty);
        nar.on_tunneled(&cfg, &mut ctx, udp_packet(7).with_path(PathTag::TunneledToNar));
        match &ctx.sent[0] {
            (LinkId::NarMn(0), Frame::Data(p)) => {
                assert_eq!(p.path, PathTag::PostHandoffDirect);
                assert_eq!(p.tunnel_overhead_bytes, 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn idle_buffer_is_discarded() {
        let (cfg, mut nar, mut ctx) = active(ProtocolKind::SafetyNet);
        nar.on_tunneled(&cfg, &mut ctx, marked(1));
        nar.on_tunneled(&cfg, &mut ctx, marked(2));
        nar.on_timer(&mut ctx, Timer::BufferIdle(1));
        assert_eq!(nar.buffer().len(), 2, "stale generation ignored");
        nar.on_timer(&mut ctx, Timer::BufferIdle(2));
        assert!(nar.buffer().is_empty());
        assert_eq!(nar.discarded(), 2);
    }

    #[test]
    fn denied_handoff_buffers_nothing() {
        let mut cfg = config(ProtocolKind::SafetyNet, vec![0]);
        cfg.nars[0].accept_handoff = false;
        let mut nar = NarState::new(0, 0);
        let mut ctx = RecCtx::default();
        nar.on_signal(&cfg, &mut ctx, SignalingMessage::simple(SignalKind::HI, true));
        match &ctx.sent[0].1 {
            Frame::Signal(m) => assert_eq!(m.payload, SignalPayload::Router { nar: 0, accepted: false }),
            f => panic!("unexpected {f:?}"),
        }
        nar.on_tunneled(&cfg, &mut ctx, marked(1));
        assert!(nar.buffer().is_empty());
    }
}
