//! Single-flow NewReno-style TCP abstraction.
//!
//! The sender models slow start, congestion avoidance, fast retransmit and
//! recovery, and a retransmission timeout with exponential backoff. After a
//! timeout it goes back to `snd_una`, so segments the receiver may already
//! hold are sent again and counted as resent. The receiver acks every
//! segment immediately and buffers out-of-order data.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::protocols::packet::TcpSegment;
use crate::simcore::SimTime;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcpConfig {
    #[serde(default = "TcpConfig::default_segment")]
    pub segment_bytes: u32,
    #[serde(default = "TcpConfig::default_rwnd")]
    pub rwnd_bytes: u64,
    #[serde(default = "TcpConfig::default_init_cwnd")]
    pub init_cwnd_segments: u32,
    #[serde(default = "TcpConfig::default_init_rto")]
    pub init_rto_ms: f64,
    #[serde(default = "TcpConfig::default_min_rto")]
    pub min_rto_ms: f64,
    #[serde(default = "TcpConfig::default_max_rto")]
    pub max_rto_ms: f64,
}

impl TcpConfig {
    fn default_segment() -> u32 {
        1400
    }
    fn default_rwnd() -> u64 {
        65_535
    }
    fn default_init_cwnd() -> u32 {
        2
    }
    fn default_init_rto() -> f64 {
        1000.0
    }
    fn default_min_rto() -> f64 {
        200.0
    }
    fn default_max_rto() -> f64 {
        60_000.0
    }
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            segment_bytes: Self::default_segment(),
            rwnd_bytes: Self::default_rwnd(),
            init_cwnd_segments: Self::default_init_cwnd(),
            init_rto_ms: Self::default_init_rto(),
            min_rto_ms: Self::default_min_rto(),
            max_rto_ms: Self::default_max_rto(),
        }
    }
}

/// Sender state for a bulk transfer with unlimited data.
#[derive(Clone, Debug)]
pub struct TcpFlow {
    seg: u64,
    min_rto: SimTime,
    max_rto: SimTime,
    pub cwnd: u64,
    pub ssthresh: u64,
    pub rwnd: u64,
    srtt: Option<f64>,
    rttvar: f64,
    pub rto: SimTime,
    pub snd_una: u64,
    pub snd_nxt: u64,
    high_sent: u64,
    pub dupack_count: u32,
    in_recovery: bool,
    recover: u64,
    timed: Option<(u64, SimTime)>,
    rto_deadline: Option<SimTime>,
    pub resent_bytes: u64,
    resend_log: Vec<(SimTime, u32)>,
    timeouts: u32,
    fast_retransmits: u32,
}

impl TcpFlow {
    pub fn new(cfg: &TcpConfig) -> Self {
        let seg = cfg.segment_bytes as u64;
        TcpFlow {
            seg,
            min_rto: SimTime::from_millis_f64(cfg.min_rto_ms),
            max_rto: SimTime::from_millis_f64(cfg.max_rto_ms),
            cwnd: seg * cfg.init_cwnd_segments.max(1) as u64,
            ssthresh: u64::MAX / 2,
            rwnd: cfg.rwnd_bytes,
            srtt: None,
            rttvar: 0.0,
            rto: SimTime::from_millis_f64(cfg.init_rto_ms),
            snd_una: 0,
            snd_nxt: 0,
            high_sent: 0,
            dupack_count: 0,
            in_recovery: false,
            recover: 0,
            timed: None,
            rto_deadline: None,
            resent_bytes: 0,
            resend_log: Vec::new(),
            timeouts: 0,
            fast_retransmits: 0,
        }
    }

    pub fn segment_bytes(&self) -> u32 {
        self.seg as u32
    }

    pub fn flight(&self) -> u64 {
        self.snd_nxt - self.snd_una
    }

    pub fn window(&self) -> u64 {
        self.cwnd.min(self.rwnd)
    }

    /// Bytes the sender may still emit before stalling for an ack.
    pub fn remaining_window(&self) -> u64 {
        self.window().saturating_sub(self.flight())
    }

    pub fn srtt(&self) -> Option<f64> {
        self.srtt
    }

    pub fn highest_sent(&self) -> u64 {
        self.high_sent
    }

    pub fn rto_deadline(&self) -> Option<SimTime> {
        self.rto_deadline
    }

    pub fn timeouts(&self) -> u32 {
        self.timeouts
    }

    pub fn fast_retransmits(&self) -> u32 {
        self.fast_retransmits
    }

    /// Every retransmission with its send time and payload size.
    pub fn resend_log(&self) -> &[(SimTime, u32)] {
        &self.resend_log
    }

    fn emit(&mut self, seq: u64, now: SimTime) -> TcpSegment {
        let seg = TcpSegment { seq, len: self.seg as u32 };
        if seq < self.high_sent {
            self.resent_bytes += self.seg;
            self.resend_log.push((now, seg.len));
            // Karn: a retransmission overlapping the timed segment spoils the sample
            if self.timed.is_some_and(|(end, _)| seq < end) {
                self.timed = None;
            }
        } else if self.timed.is_none() {
            self.timed = Some((seg.end(), now));
        }
        self.high_sent = self.high_sent.max(seg.end());
        if self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + self.rto);
        }
        seg
    }

    /// Segments the window currently allows.
    pub fn send_available(&mut self, now: SimTime) -> Vec<TcpSegment> {
        let mut out = Vec::new();
        while self.flight() + self.seg <= self.window() {
            let s = self.emit(self.snd_nxt, now);
            self.snd_nxt = s.end();
            out.push(s);
        }
        out
    }

    fn sample_rtt(&mut self, r: f64) {
        match self.srtt {
            None => {
                self.srtt = Some(r);
                self.rttvar = r / 2.0;
            }
            Some(s) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (s - r).abs();
                self.srtt = Some(0.875 * s + 0.125 * r);
            }
        }
        self.recompute_rto();
    }

    fn recompute_rto(&mut self) {
        if let Some(s) = self.srtt {
            let rto = SimTime::from_secs_f64(s + 4.0 * self.rttvar);
            self.rto = rto.max(self.min_rto).min(self.max_rto);
        }
    }

    /// Processes a cumulative ack and returns what to (re)send.
    pub fn on_ack(&mut self, ack: u64, now: SimTime) -> Vec<TcpSegment> {
        let mut out = Vec::new();
        if ack > self.snd_una {
            let acked = ack - self.snd_una;
            if let Some((end, sent)) = self.timed {
                if ack >= end {
                    self.sample_rtt((now - sent).as_secs_f64());
                    self.timed = None;
                }
            }
            if self.srtt.is_some() {
                // clears any timeout backoff
                self.recompute_rto();
            }
            self.snd_una = ack;
            if self.snd_nxt < ack {
                self.snd_nxt = ack;
            }
            if self.in_recovery {
                if ack >= self.recover {
                    self.cwnd = self.ssthresh;
                    self.in_recovery = false;
                    self.dupack_count = 0;
                } else {
                    // partial ack: resend the next hole and deflate
                    out.push(self.emit(self.snd_una, now));
                    self.cwnd = self.cwnd.saturating_sub(acked) + self.seg;
                }
            } else {
                self.dupack_count = 0;
                if self.cwnd < self.ssthresh {
                    self.cwnd += acked.min(self.seg);
                } else {
                    self.cwnd += (self.seg * self.seg / self.cwnd).max(1);
                }
            }
            self.rto_deadline = if self.snd_una < self.high_sent { Some(now + self.rto) } else { None };
        } else if ack == self.snd_una && self.high_sent > self.snd_una {
            self.dupack_count += 1;
            if self.in_recovery {
                self.cwnd += self.seg;
            } else if self.dupack_count == 3 && self.snd_una >= self.recover {
                self.fast_retransmits += 1;
                self.ssthresh = (self.flight() / 2).max(2 * self.seg);
                self.recover = self.high_sent;
                self.in_recovery = true;
                out.push(self.emit(self.snd_una, now));
                self.cwnd = self.ssthresh + 3 * self.seg;
            }
        }
        out.extend(self.send_available(now));
        out
    }

    /// Retransmission timeout: back to one segment from `snd_una`.
    pub fn on_timeout(&mut self, now: SimTime) -> TcpSegment {
        self.timeouts += 1;
        self.ssthresh = (self.flight() / 2).max(2 * self.seg);
        self.cwnd = self.seg;
        self.snd_nxt = self.snd_una;
        self.in_recovery = false;
        self.dupack_count = 0;
        self.recover = self.high_sent;
        self.timed = None;
        self.rto = (self.rto + self.rto).min(self.max_rto);
        self.rto_deadline = None;
        let s = self.emit(self.snd_una, now);
        self.snd_nxt = s.end();
        s
    }
}

/// What the receiver did with one arriving segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RecvOutcome {
    pub ack: u64,
    /// New in-order bytes handed to the application.
    pub delivered: u64,
    pub duplicate: bool,
}

#[derive(Clone, Debug, Default)]
pub struct TcpReceiver {
    rcv_nxt: u64,
    ooo: BTreeMap<u64, u64>,
    duplicates: u64,
    progress: Vec<(SimTime, u64)>,
    seq_log: Vec<(SimTime, u64)>,
}

impl TcpReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rcv_nxt(&self) -> u64 {
        self.rcv_nxt
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    /// `(time, rcv_nxt)` after every advance of the in-order stream.
    pub fn progress_log(&self) -> &[(SimTime, u64)] {
        &self.progress
    }

    /// `(time, seq)` of every arriving segment.
    pub fn seq_log(&self) -> &[(SimTime, u64)] {
        &self.seq_log
    }

    pub fn on_segment(&mut self, seg: TcpSegment, now: SimTime) -> RecvOutcome {
        self.seq_log.push((now, seg.seq));
        let end = seg.end();
        if end <= self.rcv_nxt || self.ooo.get(&seg.seq).is_some_and(|&e| e >= end) {
            self.duplicates += 1;
            return RecvOutcome { ack: self.rcv_nxt, delivered: 0, duplicate: true };
        }
        let before = self.rcv_nxt;
        if seg.seq <= self.rcv_nxt {
            self.rcv_nxt = end;
            while let Some((&s, &e)) = self.ooo.first_key_value() {
                if s > self.rcv_nxt {
                    break;
                }
                self.rcv_nxt = self.rcv_nxt.max(e);
                self.ooo.pop_first();
            }
        } else {
            let e = self.ooo.entry(seg.seq).or_insert(end);
            *e = (*e).max(end);
        }
        let delivered = self.rcv_nxt - before;
        if delivered > 0 {
            self.progress.push((now, self.rcv_nxt));
        }
        RecvOutcome { ack: self.rcv_nxt, delivered, duplicate: false }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flow() -> TcpFlow {
        TcpFlow::new(&TcpConfig { segment_bytes: 1000, rwnd_bytes: 1_000_000, ..TcpConfig::default() })
    }

    #[test]
    fn initial_window_is_two_segments() {
        let mut f = flow();
        let segs = f.send_available(SimTime::ZERO);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[1].seq, 1000);
    }

    #[test]
    fn slow_start_grows_by_one_segment_per_ack() {
        let mut f = flow();
        f.send_available(SimTime::ZERO);
        let before = f.cwnd;
        let out = f.on_ack(1000, SimTime::from_millis(10));
        assert_eq!(f.cwnd, before + 1000);
        // one acked, window grew by one: two new segments
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn three_dupacks_trigger_fast_retransmit() {
        let mut f = flow();
        f.cwnd = 10_000;
        f.send_available(SimTime::ZERO);
        f.on_ack(1000, SimTime::from_millis(10));
        let flight = f.flight();
        let mut out = Vec::new();
        for _ in 0..3 {
            out = f.on_ack(1000, SimTime::from_millis(11));
        }
        assert_eq!(out[0], TcpSegment { seq: 1000, len: 1000 });
        assert_eq!(f.ssthresh, flight / 2);
        assert_eq!(f.fast_retransmits(), 1);
        assert_eq!(f.resent_bytes, 1000);
    }

    #[test]
    fn timeout_resends_one_segment_and_backs_off() {
        let mut f = flow();
        f.send_available(SimTime::ZERO);
        let rto0 = f.rto;
        let s = f.on_timeout(SimTime::from_secs(1));
        assert_eq!(s.seq, 0);
        assert_eq!(f.cwnd, 1000);
        assert_eq!(f.rto, rto0 + rto0);
        f.on_timeout(SimTime::from_secs(3));
        assert_eq!(f.rto, rto0 + rto0 + rto0 + rto0);
        assert_eq!(f.resent_bytes, 2000);
    }

    #[test]
    fn go_back_n_after_timeout_counts_resends() {
        let mut f = flow();
        f.cwnd = 4000;
        f.send_available(SimTime::ZERO);
        f.on_timeout(SimTime::from_secs(1));
        let out = f.on_ack(1000, SimTime::from_millis(1100));
        assert!(out.iter().all(|s| s.seq < 4000 || f.resent_bytes > 0));
        assert!(f.resent_bytes >= 2000);
    }

    #[test]
    fn rtt_sampling_sets_rto_floor() {
        let mut f = flow();
        f.send_available(SimTime::ZERO);
        f.on_ack(1000, SimTime::from_millis(10));
        assert_eq!(f.srtt(), Some(0.01));
        assert_eq!(f.rto, SimTime::from_millis(200));
    }

    #[test]
    fn receiver_reassembles_and_flags_duplicates() {
        let mut r = TcpReceiver::new();
        let t = SimTime::ZERO;
        assert_eq!(r.on_segment(TcpSegment { seq: 1000, len: 1000 }, t).ack, 0);
        let o = r.on_segment(TcpSegment { seq: 0, len: 1000 }, t);
        assert_eq!((o.ack, o.delivered), (2000, 2000));
        assert!(r.on_segment(TcpSegment { seq: 0, len: 1000 }, t).duplicate);
        assert_eq!(r.duplicates(), 1);
    }
}
