use std::collections::BTreeSet;

/// Sorted, disjoint, non-adjacent inclusive counter ranges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CounterRanges(Vec<(u64, u64)>);

impl CounterRanges {
    pub fn from_sorted<I: IntoIterator<Item = u64>>(counters: I) -> Self {
        let mut out: Vec<(u64, u64)> = Vec::new();
        for c in counters {
            match out.last_mut() {
                Some((_, hi)) if c <= *hi => {}
                Some((_, hi)) if c == *hi + 1 => *hi = c,
                _ => out.push((c, c)),
            }
        }
        CounterRanges(out)
    }

    /// Accepts ranges from the wire, normalising order and overlaps.
    pub fn from_ranges(ranges: &[(u64, u64)]) -> Self {
        let mut v: Vec<(u64, u64)> = ranges.iter().copied().filter(|(lo, hi)| lo <= hi).collect();
        v.sort_unstable();
        let mut out: Vec<(u64, u64)> = Vec::with_capacity(v.len());
        for (lo, hi) in v {
            match out.last_mut() {
                Some((_, phi)) if lo <= phi.saturating_add(1) => *phi = (*phi).max(hi),
                _ => out.push((lo, hi)),
            }
        }
        CounterRanges(out)
    }

    pub fn contains(&self, c: u64) -> bool {
        let idx = self.0.partition_point(|&(_, hi)| hi < c);
        self.0.get(idx).is_some_and(|&(lo, _)| lo <= c)
    }

    pub fn ranges(&self) -> &[(u64, u64)] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<(u64, u64)> {
        self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// What the mobile node should do with an arriving data packet.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FilterVerdict {
    DeliverToApp,
    DropDuplicate,
}

/// Counters the mobile node has handed to its application during the
/// current handoff episode.
#[derive(Clone, Debug, Default)]
pub struct ReceiptSet {
    received: BTreeSet<u64>,
    highest_seen: u64,
}

impl ReceiptSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Duplicate filter. Unmarked packets pass untouched because nothing
    /// identifies their copies.
    pub fn filter(&mut self, counter: Option<u64>) -> FilterVerdict {
        let Some(c) = counter else {
            return FilterVerdict::DeliverToApp;
        };
        self.highest_seen = self.highest_seen.max(c);
        if self.received.insert(c) {
            FilterVerdict::DeliverToApp
        } else {
            FilterVerdict::DropDuplicate
        }
    }

    pub fn contains(&self, c: u64) -> bool {
        self.received.contains(&c)
    }

    pub fn highest_seen(&self) -> u64 {
        self.highest_seen
    }

    pub fn len(&self) -> usize {
        self.received.len()
    }

    pub fn is_empty(&self) -> bool {
        self.received.is_empty()
    }

    pub fn to_ranges(&self) -> CounterRanges {
        CounterRanges::from_sorted(self.received.iter().copied())
    }

    pub fn clear(&mut self) {
        self.received.clear();
        self.highest_seen = 0;
    }
}
