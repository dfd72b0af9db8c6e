use serde::{Deserialize, Serialize};

use super::messages::SignalingMessage;

/// Per-packet tunnel encapsulation cost (outer IPv6 header).
pub const TUNNEL_OVERHEAD_BYTES: u32 = 40;
/// IPv6 + UDP headers carried by every UDP datagram.
pub const UDP_HEADER_BYTES: u32 = 48;
/// IPv6 + TCP headers carried by every TCP segment and ack.
pub const TCP_HEADER_BYTES: u32 = 60;

/// How a data packet travelled its last hop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathTag {
    DirectFromPar,
    TunneledToNar,
    FlushedFromBuffer,
    PostHandoffDirect,
}

impl PathTag {
    pub fn as_str(self) -> &'static str {
        match self {
            PathTag::DirectFromPar => "direct",
            PathTag::TunneledToNar => "tunneled",
            PathTag::FlushedFromBuffer => "flushed",
            PathTag::PostHandoffDirect => "forwarded",
        }
    }
}

/// Byte range of a TCP segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TcpSegment {
    pub seq: u64,
    pub len: u32,
}

impl TcpSegment {
    pub fn end(&self) -> u64 {
        self.seq + self.len as u64
    }
}

/// Application data from the correspondent node toward the mobile node.
#[derive(Clone, Debug, PartialEq)]
pub struct DataPacket {
    /// Unique per packet sent by the correspondent node; copies share it.
    pub id: u64,
    pub flow_id: u32,
    /// Handoff-episode marking applied by the previous router, if any.
    pub counter: Option<u64>,
    pub payload_bytes: u32,
    pub header_bytes: u32,
    pub path: PathTag,
    pub tunnel_overhead_bytes: u32,
    pub tcp: Option<TcpSegment>,
}

impl DataPacket {
    pub fn wire_bytes(&self) -> u64 {
        (self.payload_bytes + self.header_bytes + self.tunnel_overhead_bytes) as u64
    }

    /// Re-tags the packet for a new hop, keeping tunnel overhead exactly on
    /// tunneled hops.
    pub fn with_path(&self, path: PathTag) -> DataPacket {
        let mut p = self.clone();
        p.path = path;
        p.tunnel_overhead_bytes = if path == PathTag::TunneledToNar { TUNNEL_OVERHEAD_BYTES } else { 0 };
        p
    }
}

/// Cumulative TCP acknowledgment from the mobile node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TcpAck {
    pub ack: u64,
}

/// Anything that crosses a link.
#[derive(Clone, Debug, PartialEq)]
pub enum Frame {
    Data(DataPacket),
    Ack(TcpAck),
    Signal(SignalingMessage),
}

impl Frame {
    pub fn wire_bytes(&self) -> u64 {
        match self {
            Frame::Data(p) => p.wire_bytes(),
            Frame::Ack(_) => TCP_HEADER_BYTES as u64,
            Frame::Signal(m) => m.size_bytes(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt() -> DataPacket {
        DataPacket {
            id: 1,
            flow_id: 0,
            counter: Some(1),
            payload_bytes: 100,
            header_bytes: UDP_HEADER_BYTES,
            path: PathTag::DirectFromPar,
            tunnel_overhead_bytes: 0,
            tcp: None,
        }
    }

    #[test]
    fn tunnel_overhead_only_on_tunneled_hop() {
        let t = pkt().with_path(PathTag::TunneledToNar);
        assert_eq!(t.tunnel_overhead_bytes, 40);
        assert_eq!(t.wire_bytes(), 188);
        for path in [PathTag::DirectFromPar, PathTag::FlushedFromBuffer, PathTag::PostHandoffDirect] {
            assert_eq!(t.with_path(path).tunnel_overhead_bytes, 0);
        }
    }
}
