use std::collections::{BTreeMap, BTreeSet};

use super::packet::DataPacket;
use super::receipt::CounterRanges;

#[derive(Clone, Debug, PartialEq)]
pub enum StoreOutcome {
    Stored,
    /// Stored, but the oldest entry was evicted to make room.
    StoredEvicting {
        key: u64,
        packet: DataPacket,
    },
    Duplicate,
}

/// Packets tunneled to a new access router and held until the mobile node
/// announces itself.
///
/// Marked packets are keyed by their counter. Unmarked packets are keyed by
/// local arrival order, so a buffer never mixes the two within an episode.
#[derive(Clone, Debug)]
pub struct NarBuffer {
    owner: usize,
    capacity: usize,
    entries: BTreeMap<u64, DataPacket>,
    byte_total: u64,
    evicted: BTreeSet<u64>,
    next_local: u64,
}

impl NarBuffer {
    /// `capacity` in packets; 0 means unbounded.
    pub fn new(owner: usize, capacity: usize) -> Self {
        NarBuffer { owner, capacity, entries: BTreeMap::new(), byte_total: 0, evicted: BTreeSet::new(), next_local: 1 }
    }

    pub fn owner(&self) -> usize {
        self.owner
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Payload bytes held; tunnel headers are stripped on store.
    pub fn byte_total(&self) -> u64 {
        self.byte_total
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.keys().copied()
    }

    pub fn evicted(&self) -> &BTreeSet<u64> {
        &self.evicted
    }

    pub fn store(&mut self, mut packet: DataPacket) -> StoreOutcome {
        let key = match packet.counter {
            Some(c) => c,
            None => {
                let k = self.next_local;
                self.next_local += 1;
                k
            }
        };
        if self.entries.contains_key(&key) || self.evicted.contains(&key) {
            return StoreOutcome::Duplicate;
        }
        packet.tunnel_overhead_bytes = 0;
        self.byte_total += packet.payload_bytes as u64;
        self.entries.insert(key, packet);
        if self.capacity > 0 && self.entries.len() > self.capacity {
            let (k, p) = self.entries.pop_first().expect("non-empty");
            self.byte_total -= p.payload_bytes as u64;
            self.evicted.insert(k);
            return StoreOutcome::StoredEvicting { key: k, packet: p };
        }
        StoreOutcome::Stored
    }

    /// Empties the buffer in key order.
    pub fn take_all(&mut self) -> Vec<(u64, DataPacket)> {
        self.byte_total = 0;
        std::mem::take(&mut self.entries).into_iter().collect()
    }

    /// Removes and returns entries absent from `received`, plus evicted keys
    /// that the mobile node also never got (unrecoverable).
    pub fn take_missing(&mut self, received: &CounterRanges) -> (Vec<(u64, DataPacket)>, Vec<u64>) {
        let all = self.take_all();
        let missing = all.into_iter().filter(|(k, _)| !received.contains(*k)).collect();
        let lost = self.evicted.iter().copied().filter(|k| !received.contains(*k)).collect();
        (missing, lost)
    }

    pub fn discard(&mut self) -> usize {
        let n = self.entries.len();
        self.entries.clear();
        self.byte_total = 0;
        n
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::packet::{PathTag, UDP_HEADER_BYTES};

    fn marked(c: u64) -> DataPacket {
        DataPacket {
            id: c,
            flow_id: 0,
            counter: Some(c),
            payload_bytes: 100,
            header_bytes: UDP_HEADER_BYTES,
            path: PathTag::TunneledToNar,
            tunnel_overhead_bytes: 40,
            tcp: None,
        }
    }

    #[test]
    fn stores_in_counter_order_without_duplicates() {
        let mut b = NarBuffer::new(0, 0);
        for c in [1, 3, 2] {
            assert_eq!(b.store(marked(c)), StoreOutcome::Stored);
        }
        assert_eq!(b.store(marked(2)), StoreOutcome::Duplicate);
        assert_eq!(b.keys().collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(b.byte_total(), 300);
    }

    #[test]
    fn selective_take_is_set_difference() {
        let mut b = NarBuffer::new(0, 0);
        for c in 1..=10 {
            b.store(marked(c));
        }
        let received = CounterRanges::from_sorted([1, 2, 3, 7, 8]);
        let (flush, lost) = b.take_missing(&received);
        assert_eq!(flush.iter().map(|(k, _)| *k).collect::<Vec<_>>(), [4, 5, 6, 9, 10]);
        assert!(lost.is_empty());
        assert!(b.is_empty());
    }

    #[test]
    fn nothing_flushed_when_everything_received() {
        let mut b = NarBuffer::new(0, 0);
        for c in 1..=10 {
            b.store(marked(c));
        }
        let (flush, _) = b.take_missing(&CounterRanges::from_sorted(1..=10));
        assert!(flush.is_empty());
    }

    #[test]
    fn overflow_drops_oldest_and_reports_unrecoverable() {
        let mut b = NarBuffer::new(0, 3);
        for c in 1..=3 {
            b.store(marked(c));
        }
        assert!(matches!(b.store(marked(4)), StoreOutcome::StoredEvicting { key: 1, .. }));
        let (flush, lost) = b.take_missing(&CounterRanges::from_sorted([3]));
        assert_eq!(flush.iter().map(|(k, _)| *k).collect::<Vec<_>>(), [2, 4]);
        assert_eq!(lost, [1]);
    }

    #[test]
    fn store_strips_tunnel_overhead() {
        let mut b = NarBuffer::new(0, 0);
        b.store(marked(1));
        let (_, p) = &b.take_all()[0];
        assert_eq!(p.tunnel_overhead_bytes, 0);
    }
}
