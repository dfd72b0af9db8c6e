//! The simulated world: four kinds of node joined by directed links, one
//! traffic flow and the event loop that drives them.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::protocols::mn::DecisionRecord;
use crate::protocols::packet::{DataPacket, Frame, PathTag, TcpAck, TcpSegment, TCP_HEADER_BYTES};
use crate::protocols::{Ctx, HandoffPhase, LinkId, MnState, NarState, NodeId, ParState, ProtocolConfig, Timer};
use crate::scenario::{Scenario, ScenarioError, TrafficSpec};
use crate::simcore::{EventQueue, Link, SimRng, SimTime, TxOutcome};
use crate::timing::{tolerable_delay, TimingInputs};
use crate::trace::{Trace, TraceEvent, TraceRecord};
use crate::traffic::{FlowStats, TcpFlow, TcpReceiver, UdpFlow};

/// Seed offset separating the attach-jitter stream from the loss stream, so
/// jitter never perturbs which frames are lost.
const JITTER_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// UDP packets sent this close to the end of a run are not yet counted as
/// lost when still undelivered.
pub const DRAIN: SimTime = SimTime::from_millis(1000);

#[derive(Clone, Debug)]
enum Event {
    Arrive { link: LinkId, frame: Frame },
    LostNotice { link: LinkId, frame: Frame },
    Timer { node: NodeId, timer: Timer },
    CnUdp,
    CnTcpStart,
    CnTcpRto,
}

/// Links, clock, randomness and trace; the context every node acts through.
struct Fabric {
    queue: EventQueue<Event>,
    links: BTreeMap<LinkId, Link>,
    loss_rng: SimRng,
    jitter_rng: SimRng,
    trace: Trace,
    delivered: Vec<(DataPacket, LinkId)>,
    tcp_snapshot: Option<(u64, Option<f64>)>,
    attach_latency: SimTime,
    attach_jitter_ms: f64,
    handoff_loss: (Option<f64>, Option<f64>),
}

impl Fabric {
    fn transmit(&mut self, link: LinkId, frame: Frame, detail: &str) {
        let now = self.queue.now();
        let event = match &frame {
            Frame::Signal(_) => TraceEvent::Signal,
            Frame::Data(p) if p.path == PathTag::FlushedFromBuffer => TraceEvent::Flush,
            _ => TraceEvent::Send,
        };
        let mut rec = TraceRecord::for_frame(now, link.src(), event, link, &frame);
        rec.detail = detail.to_string();
        self.trace.push(rec);
        let l = self.links.get_mut(&link).unwrap_or_else(|| panic!("no link {link}"));
        match l.transmit(frame.wire_bytes(), now, &mut self.loss_rng) {
            TxOutcome::Delivered { arrival } => {
                self.queue.schedule(arrival, Event::Arrive { link, frame });
            }
            TxOutcome::Lost { at } => {
                self.queue.schedule(at, Event::LostNotice { link, frame });
            }
            TxOutcome::QueueDrop => {
                let mut rec = TraceRecord::for_frame(now, link.src(), TraceEvent::Drop, link, &frame);
                rec.detail = "queue full".into();
                self.trace.push(rec);
            }
        }
    }
}

impl Ctx for Fabric {
    fn now(&self) -> SimTime {
        self.queue.now()
    }

    fn send(&mut self, link: LinkId, frame: Frame) {
        self.transmit(link, frame, "");
    }

    fn set_timer(&mut self, node: NodeId, after: SimTime, timer: Timer) {
        self.queue.schedule_in(after, Event::Timer { node, timer });
    }

    fn note(&mut self, node: NodeId, event: TraceEvent, detail: String) {
        self.trace.push(TraceRecord::bare(self.queue.now(), node, event, detail));
    }

    fn note_packet(&mut self, node: NodeId, event: TraceEvent, packet: &DataPacket, detail: &str) {
        self.trace.push(TraceRecord::for_packet(self.queue.now(), node, event, packet, detail));
    }

    fn deliver(&mut self, packet: DataPacket, via: LinkId) {
        self.delivered.push((packet, via));
    }

    fn start_handoff_loss(&mut self) {
        let (down, up) = self.handoff_loss;
        if let Some(p) = down {
            self.links.get_mut(&LinkId::ParMn).expect("par downlink").set_loss_override(Some(p));
        }
        if let Some(p) = up {
            self.links.get_mut(&LinkId::MnPar).expect("par uplink").set_loss_override(Some(p));
        }
    }

    fn attach_delay(&mut self) -> SimTime {
        if self.attach_jitter_ms > 0.0 {
            let j = self.jitter_rng.uniform_range(0.0, self.attach_jitter_ms);
            self.attach_latency + SimTime::from_millis_f64(j)
        } else {
            self.attach_latency
        }
    }

    fn tcp_snapshot(&self) -> Option<(u64, Option<f64>)> {
        self.tcp_snapshot
    }
}

enum Source {
    Udp(UdpFlow),
    Tcp { flow: Box<TcpFlow>, receiver: TcpReceiver, rto_armed: Option<SimTime>, resends_seen: usize },
}

/// Sender-side TCP results.
#[derive(Clone, Debug, Default, Serialize)]
pub struct TcpOutcome {
    pub timeouts: u32,
    pub fast_retransmits: u32,
    pub resent_bytes: u64,
    pub receiver_duplicates: u64,
    pub final_rcv_nxt: u64,
    /// `(time, seq)` of every segment reaching the mobile node.
    #[serde(skip)]
    pub seq_log: Vec<(SimTime, u64)>,
    /// `(time, seq)` of every segment the CN sent.
    #[serde(skip)]
    pub send_log: Vec<(SimTime, u64)>,
}

/// Handoff milestones and the finalize outcome.
#[derive(Clone, Debug, Default, Serialize)]
pub struct HandoffOutcome {
    pub initiated_at: Option<SimTime>,
    pub forwarding_start: Option<SimTime>,
    pub episode_start: Option<SimTime>,
    pub fna_sent: Option<SimTime>,
    pub direct_off: Option<SimTime>,
    pub stop_received: Option<SimTime>,
    pub finalized_at: Option<SimTime>,
    pub phase: Option<HandoffPhase>,
    pub decision: Option<DecisionRecord>,
    pub aborted: bool,
    pub attached_to: Option<usize>,
    pub episode_losses: u64,
    #[serde(skip)]
    pub loss_times: Vec<SimTime>,
    #[serde(skip)]
    pub frozen_inputs: Option<TimingInputs>,
    pub tolerable_delay_s: Option<f64>,
}

impl HandoffOutcome {
    /// Forwarding start to FNA sent.
    pub fn handoff_latency(&self) -> Option<SimTime> {
        Some(self.fna_sent?.saturating_sub(self.forwarding_start?))
    }

    /// FNA sent to the pAR learning it may stop bicasting.
    pub fn stop_latency(&self) -> Option<SimTime> {
        Some(self.stop_received?.saturating_sub(self.fna_sent?))
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct NarOutcome {
    pub name: String,
    pub flushed_packets: u64,
    pub flushed_bytes: u64,
    pub unrecoverable: Vec<u64>,
    pub discarded: u64,
    pub evicted: usize,
}

/// Everything a run produced.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub scenario: Scenario,
    pub trace: Trace,
    pub stats: FlowStats,
    pub tcp: Option<TcpOutcome>,
    pub handoff: HandoffOutcome,
    pub nars: Vec<NarOutcome>,
    /// `(packet id, send time)` of every UDP datagram.
    pub udp_send_times: Vec<(u64, SimTime)>,
}

impl RunResult {
    pub fn end(&self) -> SimTime {
        SimTime::from_millis_f64(self.scenario.duration_ms)
    }

    /// UDP datagrams sent at least [`DRAIN`] before the end that never
    /// reached the application.
    pub fn app_losses(&self) -> u64 {
        let cutoff = self.end().saturating_sub(DRAIN);
        let got = self.stats.delivered_ids();
        self.udp_send_times.iter().filter(|(id, t)| *t <= cutoff && !got.contains(id)).count() as u64
    }

    pub fn app_duplicates(&self) -> u64 {
        self.stats.duplicate_count
    }
}

/// One simulation instance.
pub struct World {
    scenario: Scenario,
    cfg: ProtocolConfig,
    fabric: Fabric,
    par: ParState,
    nars: Vec<NarState>,
    mn: MnState,
    source: Source,
    stats: FlowStats,
    next_id: u64,
    udp_send_times: Vec<(u64, SimTime)>,
    tcp_send_log: Vec<(SimTime, u64)>,
    tcp_high: u64,
    initiated_at: Option<SimTime>,
    finalized_at: Option<SimTime>,
}

impl World {
    pub fn new(scenario: &Scenario) -> Result<World, ScenarioError> {
        scenario.validate()?;
        let sc = scenario.clone();
        let cfg = sc.protocol_config();
        let mut links = BTreeMap::new();
        links.insert(LinkId::CnPar, Link::new(sc.backbone.cn_par.clone()));
        links.insert(LinkId::ParCn, Link::new(sc.backbone.cn_par.clone()));
        links.insert(LinkId::ParMn, Link::new(sc.par.downlink.clone()));
        links.insert(LinkId::MnPar, Link::new(sc.par.uplink.clone()));
        for (i, n) in sc.nars.iter().enumerate() {
            links.insert(LinkId::ParNar(i), Link::new(sc.backhaul(i).clone()));
            links.insert(LinkId::NarPar(i), Link::new(sc.backhaul(i).clone()));
            links.insert(LinkId::NarMn(i), Link::new(n.downlink.clone()));
            links.insert(LinkId::MnNar(i), Link::new(n.uplink.clone()));
        }
        let mut fabric = Fabric {
            queue: EventQueue::new(),
            links,
            loss_rng: SimRng::new(sc.seed),
            jitter_rng: SimRng::new(sc.seed ^ JITTER_STREAM),
            trace: Trace::new(),
            delivered: Vec::new(),
            tcp_snapshot: None,
            attach_latency: SimTime::from_millis_f64(sc.handoff.attach_latency_ms),
            attach_jitter_ms: sc.handoff.attach_jitter_ms,
            handoff_loss: (sc.handoff.par_downlink_loss, sc.handoff.par_uplink_loss),
        };
        let source = match &sc.traffic {
            TrafficSpec::Udp { rate_bps, payload_bytes, start_ms } => {
                let flow = UdpFlow::new(1, *rate_bps, *payload_bytes, SimTime::from_millis_f64(*start_ms));
                if let Some(t) = flow.next_departure() {
                    fabric.queue.schedule(t, Event::CnUdp);
                }
                Source::Udp(flow)
            }
            TrafficSpec::Tcp { start_ms, tcp } => {
                fabric.queue.schedule(SimTime::from_millis_f64(*start_ms), Event::CnTcpStart);
                Source::Tcp { flow: Box::new(TcpFlow::new(tcp)), receiver: TcpReceiver::new(), rto_armed: None, resends_seen: 0 }
            }
        };
        if sc.handoff.enabled {
            let at = SimTime::from_millis_f64(sc.handoff.initiate_ms);
            fabric.queue.schedule(at, Event::Timer { node: NodeId::Mn, timer: Timer::Initiate });
        }
        for (i, n) in sc.nars.iter().enumerate() {
            if let (false, Some(ms)) = (n.reachable, n.reachable_from_ms) {
                let at = SimTime::from_millis_f64(ms);
                fabric.queue.schedule(at, Event::Timer { node: NodeId::Mn, timer: Timer::Reachable(i) });
            }
        }
        let nars = (0..sc.nars.len()).map(|i| NarState::new(i, sc.buffer_capacity(i))).collect();
        let mn = MnState::new(sc.nars.iter().map(|n| n.reachable).collect());
        Ok(World {
            scenario: sc,
            cfg,
            fabric,
            par: ParState::new(),
            nars,
            mn,
            source,
            stats: FlowStats::new(),
            next_id: 1,
            udp_send_times: Vec::new(),
            tcp_send_log: Vec::new(),
            tcp_high: 0,
            initiated_at: None,
            finalized_at: None,
        })
    }

    pub fn run(mut self) -> RunResult {
        let end = SimTime::from_millis_f64(self.scenario.duration_ms);
        while let Some((_, ev)) = self.fabric.queue.pop_until(end) {
            self.refresh_snapshot();
            self.dispatch(ev);
            self.drain_deliveries();
            self.sync_tcp();
            if self.finalized_at.is_none() && self.mn.phase() == HandoffPhase::Finalized {
                self.finalized_at = Some(self.fabric.now());
            }
        }
        self.finish()
    }

    fn refresh_snapshot(&mut self) {
        if let Source::Tcp { flow, .. } = &self.source {
            self.fabric.tcp_snapshot = Some((flow.remaining_window(), flow.srtt()));
        }
    }

    fn alloc_id(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    fn dispatch(&mut self, ev: Event) {
        let now = self.fabric.now();
        match ev {
            Event::Arrive { link, frame } => {
                self.fabric.trace.push(TraceRecord::for_frame(now, link.dst(), TraceEvent::Recv, link, &frame));
                self.route(link, frame);
            }
            Event::LostNotice { link, frame } => {
                let is_data = matches!(frame, Frame::Data(_));
                self.fabric.trace.push(TraceRecord::for_frame(now, link.src(), TraceEvent::Loss, link, &frame));
                if link == LinkId::ParMn && is_data {
                    self.mn.on_old_link_loss(&self.cfg, &mut self.fabric);
                }
            }
            Event::Timer { node, timer } => {
                self.fabric.note(node, TraceEvent::Timer, timer.label());
                match node {
                    NodeId::Mn => {
                        if timer == Timer::Initiate {
                            self.initiated_at = Some(now);
                        }
                        self.mn.on_timer(&self.cfg, &mut self.fabric, timer);
                    }
                    NodeId::Par => self.par.on_timer(&mut self.fabric, timer),
                    NodeId::Nar(i) => self.nars[i].on_timer(&mut self.fabric, timer),
                    NodeId::Cn => {}
                }
            }
            Event::CnUdp => {
                let id = self.alloc_id();
                if let Source::Udp(flow) = &mut self.source {
                    let pkt = flow.tick(now, id);
                    self.stats.record_sent(pkt.payload_bytes as u64);
                    self.udp_send_times.push((id, now));
                    if let Some(next) = flow.next_departure() {
                        self.fabric.queue.schedule(next, Event::CnUdp);
                    }
                    self.fabric.send(LinkId::CnPar, Frame::Data(pkt));
                }
            }
            Event::CnTcpStart => {
                if let Source::Tcp { flow, .. } = &mut self.source {
                    let segs = flow.send_available(now);
                    self.send_segments(segs);
                }
            }
            Event::CnTcpRto => {
                if let Source::Tcp { flow, rto_armed, .. } = &mut self.source {
                    if *rto_armed == Some(now) {
                        *rto_armed = None;
                    }
                    if flow.rto_deadline().is_some_and(|d| d <= now) {
                        let seg = flow.on_timeout(now);
                        self.send_segments(vec![seg]);
                    }
                }
            }
        }
    }

    fn route(&mut self, link: LinkId, frame: Frame) {
        match (link.dst(), frame) {
            (NodeId::Par, Frame::Data(p)) => self.par.on_cn_data(&mut self.fabric, p),
            (NodeId::Par, Frame::Signal(m)) => self.par.on_signal(&self.cfg, &mut self.fabric, m, link),
            (NodeId::Par, Frame::Ack(a)) => self.fabric.send(LinkId::ParCn, Frame::Ack(a)),
            (NodeId::Nar(i), Frame::Data(p)) => self.nars[i].on_tunneled(&self.cfg, &mut self.fabric, p),
            (NodeId::Nar(i), Frame::Signal(m)) => self.nars[i].on_signal(&self.cfg, &mut self.fabric, m),
            (NodeId::Nar(i), Frame::Ack(a)) => self.fabric.send(LinkId::NarPar(i), Frame::Ack(a)),
            (NodeId::Mn, Frame::Data(p)) => self.mn.on_data(&self.cfg, &mut self.fabric, p, link),
            (NodeId::Mn, Frame::Signal(m)) => {
                if link == LinkId::ParMn && !self.mn.old_link_up() {
                    let now = self.fabric.now();
                    let mut rec = TraceRecord::for_frame(now, NodeId::Mn, TraceEvent::Drop, link, &Frame::Signal(m));
                    rec.detail = "detached".into();
                    self.fabric.trace.push(rec);
                } else {
                    self.mn.on_signal(&self.cfg, &mut self.fabric, m);
                }
            }
            (NodeId::Cn, Frame::Ack(a)) => {
                let now = self.fabric.now();
                if let Source::Tcp { flow, .. } = &mut self.source {
                    let segs = flow.on_ack(a.ack, now);
                    self.send_segments(segs);
                }
            }
            (node, f) => {
                let now = self.fabric.now();
                let mut rec = TraceRecord::for_frame(now, node, TraceEvent::Drop, link, &f);
                rec.detail = "unroutable".into();
                self.fabric.trace.push(rec);
            }
        }
    }

    fn send_segments(&mut self, segs: Vec<TcpSegment>) {
        let now = self.fabric.now();
        for seg in segs {
            let resend = seg.seq < self.tcp_high;
            self.tcp_high = self.tcp_high.max(seg.end());
            let id = self.alloc_id();
            let pkt = DataPacket {
                id,
                flow_id: 1,
                counter: None,
                payload_bytes: seg.len,
                header_bytes: TCP_HEADER_BYTES,
                path: PathTag::DirectFromPar,
                tunnel_overhead_bytes: 0,
                tcp: Some(seg),
            };
            if !resend {
                self.stats.record_sent(seg.len as u64);
            }
            self.tcp_send_log.push((now, seg.seq));
            self.fabric.transmit(LinkId::CnPar, Frame::Data(pkt), if resend { "resend" } else { "" });
        }
    }

    /// Hands delivered packets to the application and answers TCP data.
    fn drain_deliveries(&mut self) {
        let now = self.fabric.now();
        for (pkt, via) in std::mem::take(&mut self.fabric.delivered) {
            match &mut self.source {
                Source::Udp(_) => {
                    let fresh = self.stats.record_datagram(now, pkt.id, pkt.payload_bytes as u64);
                    let detail = if fresh { via.to_string() } else { format!("{via} duplicate") };
                    self.fabric.trace.push(TraceRecord::for_packet(now, NodeId::Mn, TraceEvent::Deliver, &pkt, &detail));
                }
                Source::Tcp { receiver, .. } => {
                    let seg = pkt.tcp.expect("tcp flow carries segments");
                    self.stats.record_arrival(now, seg.len as u64);
                    let out = receiver.on_segment(seg, now);
                    if out.delivered > 0 {
                        self.stats.record_progress(now, receiver.rcv_nxt());
                    }
                    let detail = if out.duplicate { format!("{via} duplicate") } else { via.to_string() };
                    self.fabric.trace.push(TraceRecord::for_packet(now, NodeId::Mn, TraceEvent::Deliver, &pkt, &detail));
                    match self.mn.uplink() {
                        Some(up) => self.fabric.send(up, Frame::Ack(TcpAck { ack: out.ack })),
                        None => self.fabric.note(NodeId::Mn, TraceEvent::Drop, format!("ack {} without uplink", out.ack)),
                    }
                }
            }
        }
    }

    /// Keeps one RTO event pending at the earliest deadline and copies new
    /// retransmissions into the flow statistics.
    fn sync_tcp(&mut self) {
        if let Source::Tcp { flow, rto_armed, resends_seen, .. } = &mut self.source {
            for &(t, b) in &flow.resend_log()[*resends_seen..] {
                self.stats.record_resend(t, b as u64);
            }
            *resends_seen = flow.resend_log().len();
            if let Some(d) = flow.rto_deadline() {
                if rto_armed.is_none_or(|a| d < a) {
                    let at = d.max(self.fabric.now());
                    self.fabric.queue.schedule(at, Event::CnTcpRto);
                    *rto_armed = Some(at);
                }
            }
        }
    }

    fn finish(self) -> RunResult {
        let mn = &self.mn;
        let handoff = HandoffOutcome {
            initiated_at: self.initiated_at,
            forwarding_start: self.par.forwarding_start(),
            episode_start: mn.hs.episode_start,
            fna_sent: mn.fna_sent(),
            direct_off: self.par.direct_off(),
            stop_received: self.par.stop_received(),
            finalized_at: self.finalized_at,
            phase: Some(mn.phase()),
            decision: mn.decision().cloned(),
            aborted: mn.aborted(),
            attached_to: mn.attached_to(),
            episode_losses: mn.episode_losses(),
            loss_times: mn.loss_times().to_vec(),
            frozen_inputs: mn.frozen_inputs(),
            tolerable_delay_s: mn.frozen_inputs().map(|i| tolerable_delay(&i)),
        };
        let nars = self
            .nars
            .iter()
            .zip(&self.scenario.nars)
            .map(|(n, spec)| NarOutcome {
                name: spec.name.clone(),
                flushed_packets: n.flushed_packets(),
                flushed_bytes: n.flushed_bytes(),
                unrecoverable: n.unrecoverable().to_vec(),
                discarded: n.discarded(),
                evicted: n.buffer().evicted().len(),
            })
            .collect();
        let tcp = match self.source {
            Source::Tcp { flow, receiver, .. } => Some(TcpOutcome {
                timeouts: flow.timeouts(),
                fast_retransmits: flow.fast_retransmits(),
                resent_bytes: flow.resent_bytes,
                receiver_duplicates: receiver.duplicates(),
                final_rcv_nxt: receiver.rcv_nxt(),
                seq_log: receiver.seq_log().to_vec(),
                send_log: self.tcp_send_log,
            }),
            Source::Udp(_) => None,
        };
        RunResult {
            scenario: self.scenario,
            trace: self.fabric.trace,
            stats: self.stats,
            tcp,
            handoff,
            nars,
            udp_send_times: self.udp_send_times,
        }
    }
}

/// Validates and runs a scenario.
pub fn run(scenario: &Scenario) -> Result<RunResult, ScenarioError> {
    Ok(World::new(scenario)?.run())
}
