use crate::protocols::packet::{DataPacket, PathTag, UDP_HEADER_BYTES};
use crate::simcore::SimTime;

/// Constant-bit-rate UDP source. The rate counts payload bits only.
#[derive(Clone, Debug)]
pub struct UdpFlow {
    pub flow_id: u32,
    pub rate_bps: u64,
    pub payload_bytes: u32,
    next_departure: SimTime,
    sent: u64,
}

impl UdpFlow {
    pub fn new(flow_id: u32, rate_bps: u64, payload_bytes: u32, start: SimTime) -> Self {
        UdpFlow { flow_id, rate_bps, payload_bytes, next_departure: start, sent: 0 }
    }

    /// Constant gap between departures; `None` for a silent (zero-rate) flow.
    pub fn interval(&self) -> Option<SimTime> {
        if self.rate_bps == 0 || self.payload_bytes == 0 {
            return None;
        }
        let us = (self.payload_bytes as u128 * 8 * 1_000_000) / self.rate_bps as u128;
        Some(SimTime::from_micros(us as u64))
    }

    pub fn next_departure(&self) -> Option<SimTime> {
        self.interval().map(|_| self.next_departure)
    }

    pub fn packets_sent(&self) -> u64 {
        self.sent
    }

    /// Emits the packet due at `clock` and advances the departure time.
    pub fn tick(&mut self, clock: SimTime, id: u64) -> DataPacket {
        debug_assert_eq!(clock, self.next_departure, "udp tick off schedule");
        let interval = self.interval().expect("tick on a silent flow");
        self.next_departure = clock + interval;
        self.sent += 1;
        DataPacket {
            id,
            flow_id: self.flow_id,
            counter: None,
            payload_bytes: self.payload_bytes,
            header_bytes: UDP_HEADER_BYTES,
            path: PathTag::DirectFromPar,
            tunnel_overhead_bytes: 0,
            tcp: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hundred_kbit_with_hundred_byte_payload_is_8ms() {
        let f = UdpFlow::new(0, 100_000, 100, SimTime::ZERO);
        assert_eq!(f.interval(), Some(SimTime::from_millis(8)));
    }

    #[test]
    fn zero_rate_never_departs() {
        let f = UdpFlow::new(0, 0, 100, SimTime::ZERO);
        assert_eq!(f.next_departure(), None);
    }

    #[test]
    fn ten_seconds_emit_1250_packets() {
        let mut f = UdpFlow::new(0, 100_000, 100, SimTime::ZERO);
        let end = SimTime::from_secs(10);
        let mut id = 0;
        while let Some(t) = f.next_departure().filter(|&t| t < end) {
            id += 1;
            f.tick(t, id);
        }
        assert_eq!(f.packets_sent(), 1250);
    }
}
