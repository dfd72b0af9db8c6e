use std::collections::BTreeSet;

use serde::Serialize;

use crate::simcore::SimTime;

/// Half-open measurement window `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Window {
    pub start: SimTime,
    pub end: SimTime,
}

impl Window {
    pub fn new(start: SimTime, end: SimTime) -> Self {
        assert!(end >= start, "window ends before it starts");
        Window { start, end }
    }

    pub fn from_millis(start_ms: f64, end_ms: f64) -> Self {
        Window::new(SimTime::from_millis_f64(start_ms), SimTime::from_millis_f64(end_ms))
    }

    pub fn len(&self) -> SimTime {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }

    pub fn contains(&self, t: SimTime) -> bool {
        t >= self.start && t < self.end
    }
}

/// Application-level view of one flow at the mobile node.
#[derive(Clone, Debug, Default)]
pub struct FlowStats {
    pub sent_packets: u64,
    pub sent_payload_bytes: u64,
    delivered_ids: BTreeSet<u64>,
    /// `(time, cumulative in-order application bytes)`.
    progress: Vec<(SimTime, u64)>,
    /// `(time, payload bytes)` for every delivery, duplicates included.
    arrivals: Vec<(SimTime, u64)>,
    resends: Vec<(SimTime, u64)>,
    pub duplicate_count: u64,
}

impl FlowStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_sent(&mut self, payload: u64) {
        self.sent_packets += 1;
        self.sent_payload_bytes += payload;
    }

    /// Records a datagram handed to the application; returns false for an
    /// application-level duplicate.
    pub fn record_datagram(&mut self, now: SimTime, id: u64, payload: u64) -> bool {
        self.arrivals.push((now, payload));
        if self.delivered_ids.insert(id) {
            let cum = self.progress.last().map_or(0, |&(_, c)| c) + payload;
            self.progress.push((now, cum));
            true
        } else {
            self.duplicate_count += 1;
            false
        }
    }

    /// Records in-order stream progress (TCP `rcv_nxt`).
    pub fn record_progress(&mut self, now: SimTime, cumulative: u64) {
        self.progress.push((now, cumulative));
    }

    pub fn record_arrival(&mut self, now: SimTime, payload: u64) {
        self.arrivals.push((now, payload));
    }

    pub fn record_resend(&mut self, now: SimTime, bytes: u64) {
        self.resends.push((now, bytes));
    }

    pub fn delivered_unique(&self) -> u64 {
        self.delivered_ids.len() as u64
    }

    pub fn delivered_ids(&self) -> &BTreeSet<u64> {
        &self.delivered_ids
    }

    pub fn goodput_bytes(&self) -> u64 {
        self.progress.last().map_or(0, |&(_, c)| c)
    }

    pub fn loss_count(&self) -> u64 {
        self.sent_packets.saturating_sub(self.delivered_unique())
    }

    fn cumulative_before(&self, t: SimTime) -> u64 {
        let idx = self.progress.partition_point(|&(at, _)| at < t);
        if idx == 0 {
            0
        } else {
            self.progress[idx - 1].1
        }
    }

    pub fn progress_in(&self, w: Window) -> u64 {
        self.cumulative_before(w.end).saturating_sub(self.cumulative_before(w.start))
    }

    pub fn resent_in(&self, w: Window) -> u64 {
        self.resends.iter().filter(|(t, _)| w.contains(*t)).map(|(_, b)| b).sum()
    }

    pub fn resent_total(&self) -> u64 {
        self.resends.iter().map(|(_, b)| b).sum()
    }

    /// Received application rate in bits/s per bin, duplicates included.
    pub fn received_rate(&self, bin: SimTime, until: SimTime) -> Vec<(SimTime, f64)> {
        let bin_us = bin.as_micros().max(1);
        let n = until.as_micros().div_ceil(bin_us) as usize;
        let mut bytes = vec![0u64; n];
        for &(t, b) in &self.arrivals {
            let i = (t.as_micros() / bin_us) as usize;
            if i < n {
                bytes[i] += b;
            }
        }
        let secs = bin.as_secs_f64();
        bytes.into_iter().enumerate().map(|(i, b)| (SimTime::from_micros(i as u64 * bin_us), b as f64 * 8.0 / secs)).collect()
    }

    pub fn progress_log(&self) -> &[(SimTime, u64)] {
        &self.progress
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Impact {
    pub progress_handoff: u64,
    pub progress_reference: u64,
    pub resent_handoff: u64,
    pub resent_reference: u64,
    /// `1 - handoff/reference`, clamped to `[0, 1]`.
    pub impact: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ImpactError {
    #[error("measurement windows differ in length")]
    UnequalWindows,
    #[error("no progress in the reference window; impact undefined")]
    ZeroReference,
}

/// Compares progress during the handoff window against an equally long
/// reference window.
pub fn measure_impact(stats: &FlowStats, handoff: Window, reference: Window) -> Result<Impact, ImpactError> {
    if handoff.len() != reference.len() {
        return Err(ImpactError::UnequalWindows);
    }
    let progress_handoff = stats.progress_in(handoff);
    let progress_reference = stats.progress_in(reference);
    if progress_reference == 0 {
        return Err(ImpactError::ZeroReference);
    }
    Ok(impact_from(progress_handoff, progress_reference, stats.resent_in(handoff), stats.resent_in(reference)))
}

pub fn impact_from(progress_handoff: u64, progress_reference: u64, resent_handoff: u64, resent_reference: u64) -> Impact {
    let ratio = progress_handoff as f64 / progress_reference as f64;
    Impact { progress_handoff, progress_reference, resent_handoff, resent_reference, impact: (1.0 - ratio).clamp(0.0, 1.0) }
}
