//! Typed per-event trace with a fixed CSV projection.

use std::io::Write;

use serde::Serialize;

use crate::protocols::messages::SignalKind;
use crate::protocols::packet::{DataPacket, Frame, PathTag};
use crate::protocols::{LinkId, NodeId};
use crate::simcore::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceEvent {
    /// Data or ack frame put on a link.
    Send,
    /// Signaling message put on a link.
    Signal,
    /// Frame arrived at the far end of a link.
    Recv,
    /// Frame corrupted on a link.
    Loss,
    /// Frame discarded by a node or rejected by a full queue.
    Drop,
    /// Packet stored in an nAR buffer.
    Buffer,
    /// Buffered packet sent to the mobile node.
    Flush,
    /// Packet handed to the mobile node's application.
    Deliver,
    /// Duplicate caught at the mobile node.
    Dup,
    Decision,
    Phase,
    Timer,
}

impl TraceEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceEvent::Send => "send",
            TraceEvent::Signal => "signal",
            TraceEvent::Recv => "recv",
            TraceEvent::Loss => "loss",
            TraceEvent::Drop => "drop",
            TraceEvent::Buffer => "buffer",
            TraceEvent::Flush => "flush",
            TraceEvent::Deliver => "deliver",
            TraceEvent::Dup => "dup",
            TraceEvent::Decision => "decision",
            TraceEvent::Phase => "phase",
            TraceEvent::Timer => "timer",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Data,
    Ack,
    Signal,
}

impl FrameKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FrameKind::Data => "data",
            FrameKind::Ack => "ack",
            FrameKind::Signal => "signal",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub time: SimTime,
    pub node: NodeId,
    pub event: TraceEvent,
    pub link: Option<LinkId>,
    pub frame: Option<FrameKind>,
    pub message: Option<SignalKind>,
    pub packet_id: Option<u64>,
    pub counter: Option<u64>,
    pub tcp_seq: Option<u64>,
    /// Wire size of the frame, headers and tunnel overhead included.
    pub bytes: u64,
    pub payload_bytes: u64,
    pub path: Option<PathTag>,
    pub detail: String,
}

impl TraceRecord {
    pub fn bare(time: SimTime, node: NodeId, event: TraceEvent, detail: String) -> Self {
        TraceRecord {
            time,
            node,
            event,
            link: None,
            frame: None,
            message: None,
            packet_id: None,
            counter: None,
            tcp_seq: None,
            bytes: 0,
            payload_bytes: 0,
            path: None,
            detail,
        }
    }

    pub fn for_frame(time: SimTime, node: NodeId, event: TraceEvent, link: LinkId, frame: &Frame) -> Self {
        let mut r = TraceRecord::bare(time, node, event, String::new());
        r.link = Some(link);
        r.bytes = frame.wire_bytes();
        match frame {
            Frame::Data(p) => r.fill_packet(p),
            Frame::Ack(a) => {
                r.frame = Some(FrameKind::Ack);
                r.tcp_seq = Some(a.ack);
            }
            Frame::Signal(m) => {
                r.frame = Some(FrameKind::Signal);
                r.message = Some(m.kind);
            }
        }
        r
    }

    pub fn for_packet(time: SimTime, node: NodeId, event: TraceEvent, packet: &DataPacket, detail: &str) -> Self {
        let mut r = TraceRecord::bare(time, node, event, detail.to_string());
        r.bytes = packet.wire_bytes();
        r.fill_packet(packet);
        r
    }

    fn fill_packet(&mut self, p: &DataPacket) {
        self.frame = Some(FrameKind::Data);
        self.packet_id = Some(p.id);
        self.counter = p.counter;
        self.tcp_seq = p.tcp.map(|s| s.seq);
        self.payload_bytes = p.payload_bytes as u64;
        self.path = Some(p.path);
    }

    pub fn is_data(&self) -> bool {
        self.frame == Some(FrameKind::Data)
    }
}

/// Column order of `trace.csv`.
pub const CSV_HEADER: [&str; 14] = [
    "time_us",
    "node",
    "event",
    "link",
    "medium",
    "frame",
    "message",
    "packet_id",
    "counter",
    "tcp_seq",
    "bytes",
    "payload_bytes",
    "path",
    "detail",
];

#[derive(Clone, Debug, Default)]
pub struct Trace {
    records: Vec<TraceRecord>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, r: TraceRecord) {
        debug_assert!(self.records.last().is_none_or(|l| l.time <= r.time), "trace out of order");
        self.records.push(r);
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TraceRecord> {
        self.records.iter()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        let opt = |v: Option<u64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.records {
            w.write_record([
                r.time.as_micros().to_string(),
                r.node.to_string(),
                r.event.as_str().to_string(),
                r.link.map_or(String::new(), |l| l.to_string()),
                r.link.map_or("", |l| l.medium()).to_string(),
                r.frame.map_or("", |f| f.as_str()).to_string(),
                r.message.map_or("", |m| m.as_str()).to_string(),
                opt(r.packet_id),
                opt(r.counter),
                opt(r.tcp_seq),
                r.bytes.to_string(),
                r.payload_bytes.to_string(),
                r.path.map_or("", |p| p.as_str()).to_string(),
                r.detail.clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::messages::SignalingMessage;

    #[test]
    fn csv_has_fixed_header_and_one_row_per_record() {
        let mut t = Trace::new();
        let msg = Frame::Signal(SignalingMessage::simple(SignalKind::FNA, true));
        t.push(TraceRecord::for_frame(SimTime::from_millis(4200), NodeId::Mn, TraceEvent::Signal, LinkId::MnNar(0), &msg));
        t.push(TraceRecord::bare(SimTime::from_millis(4201), NodeId::Par, TraceEvent::Phase, "direct_off".into()));
        let csv = t.to_csv_string();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER.join(","));
        assert_eq!(lines[1], "4200000,mn,signal,mn>nar0,air,signal,FNA,,,,88,0,,");
        assert_eq!(lines.len(), 3);
    }
}
