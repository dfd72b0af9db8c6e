use serde::{Deserialize, Serialize};

use crate::cost::MessageSizeTable;

/// Extra bytes in a Fast Binding Update per target router beyond the first.
pub const FBU_BYTES_PER_EXTRA_TARGET: u64 = 32;
/// Extra bytes in a Fast Neighbor Advertisement per received-counter range
/// beyond the first.
pub const FNA_BYTES_PER_EXTRA_RANGE: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SignalKind {
    FBU,
    FBAck,
    HI,
    HAck,
    RtSolPr,
    PrRtAdv,
    FNA,
    StopBicast,
}

impl SignalKind {
    pub const ALL: [SignalKind; 8] = [
        SignalKind::FBU,
        SignalKind::FBAck,
        SignalKind::HI,
        SignalKind::HAck,
        SignalKind::RtSolPr,
        SignalKind::PrRtAdv,
        SignalKind::FNA,
        SignalKind::StopBicast,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SignalKind::FBU => "FBU",
            SignalKind::FBAck => "FBAck",
            SignalKind::HI => "HI",
            SignalKind::HAck => "HAck",
            SignalKind::RtSolPr => "RtSolPr",
            SignalKind::PrRtAdv => "PrRtAdv",
            SignalKind::FNA => "FNA",
            SignalKind::StopBicast => "StopBicast",
        }
    }
}

/// Variant-specific contents of a signaling message.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum SignalPayload {
    #[default]
    Empty,
    /// Candidate routers advertised in a PrRtAdv (nAR indices).
    Candidates(Vec<usize>),
    /// Target routers named in an FBU.
    Targets(Vec<usize>),
    /// Handoff target for HI; also the nAR index answering with HAck.
    Router { nar: usize, accepted: bool },
    /// FBAck outcome.
    Ack { accepted: bool },
    /// Inclusive counter ranges the mobile node already holds.
    Received(Vec<(u64, u64)>),
    /// Reactive-mode FBU relayed by the nAR on behalf of the mobile node.
    RelayedFbu { nar: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalingMessage {
    pub kind: SignalKind,
    pub with_ah: bool,
    pub payload: SignalPayload,
}

impl SignalingMessage {
    pub fn new(kind: SignalKind, with_ah: bool, payload: SignalPayload) -> Self {
        SignalingMessage { kind, with_ah, payload }
    }

    pub fn simple(kind: SignalKind, with_ah: bool) -> Self {
        Self::new(kind, with_ah, SignalPayload::Empty)
    }

    pub fn size_bytes(&self) -> u64 {
        let base = MessageSizeTable::STANDARD.size(self.kind, self.with_ah);
        let extra = match (&self.kind, &self.payload) {
            (SignalKind::FBU, SignalPayload::Targets(t)) => FBU_BYTES_PER_EXTRA_TARGET * t.len().saturating_sub(1) as u64,
            (SignalKind::FNA, SignalPayload::Received(r)) => FNA_BYTES_PER_EXTRA_RANGE * r.len().saturating_sub(1) as u64,
            _ => 0,
        };
        base + extra
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fbu_grows_per_extra_target() {
        let one = SignalingMessage::new(SignalKind::FBU, true, SignalPayload::Targets(vec![0]));
        let two = SignalingMessage::new(SignalKind::FBU, true, SignalPayload::Targets(vec![0, 1]));
        assert_eq!(one.size_bytes(), 136);
        assert_eq!(two.size_bytes(), 168);
    }

    #[test]
    fn fna_list_extension() {
        let none = SignalingMessage::new(SignalKind::FNA, true, SignalPayload::Received(vec![]));
        let one = SignalingMessage::new(SignalKind::FNA, true, SignalPayload::Received(vec![(1, 10)]));
        let three = SignalingMessage::new(SignalKind::FNA, true, SignalPayload::Received(vec![(1, 3), (7, 8), (11, 11)]));
        assert_eq!(none.size_bytes(), 88);
        assert_eq!(one.size_bytes(), 88);
        assert_eq!(three.size_bytes(), 104);
    }
}
