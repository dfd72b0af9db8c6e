//! Deterministic discrete-event machinery: virtual clock, event queue,
//! seeded randomness and the unidirectional link model.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Simulation time in integer microseconds since the start of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond; negative inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s <= 0.0 || !s.is_finite() {
            return SimTime::ZERO;
        }
        SimTime((s * 1e6).round() as u64)
    }

    pub fn from_millis_f64(ms: f64) -> Self {
        Self::from_secs_f64(ms / 1e3)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

/// Time a frame of `bytes` occupies a link of `bandwidth_bps`, rounded up
/// to whole microseconds so a busy link never looks idle early.
pub fn serialization_time(bytes: u64, bandwidth_bps: u64) -> SimTime {
    let bits = bytes as u128 * 8 * 1_000_000;
    let bw = bandwidth_bps as u128;
    SimTime(bits.div_ceil(bw) as u64)
}

struct Scheduled<T> {
    at: SimTime,
    seq: u64,
    payload: T,
}

impl<T> PartialEq for Scheduled<T> {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}

impl<T> Eq for Scheduled<T> {}

impl<T> PartialOrd for Scheduled<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T> Ord for Scheduled<T> {
    // BinaryHeap is a max-heap; invert so the earliest (at, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.at.cmp(&self.at).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Priority queue of pending events ordered by `(fire_at, seq)`.
///
/// `seq` is assigned at schedule time, so events sharing a timestamp fire
/// in the order they were scheduled.
pub struct EventQueue<T> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Scheduled<T>>,
}

impl<T> Default for EventQueue<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> EventQueue<T> {
    pub fn new() -> Self {
        EventQueue { now: SimTime::ZERO, next_seq: 0, heap: BinaryHeap::new() }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Enqueues `payload` to fire at `at`; returns its tie-break sequence number.
    ///
    /// Panics when `at` lies in the past: that is a bug in the caller.
    pub fn schedule(&mut self, at: SimTime, payload: T) -> u64 {
        assert!(at >= self.now, "event scheduled in the past: at {} but clock is {}", at, self.now);
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Scheduled { at, seq, payload });
        seq
    }

    pub fn schedule_in(&mut self, delay: SimTime, payload: T) -> u64 {
        let at = self.now + delay;
        self.schedule(at, payload)
    }

    /// Pops the next event if it fires no later than `t_end`, advancing the clock.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<(SimTime, T)> {
        match self.heap.peek() {
            Some(head) if head.at <= t_end => {
                let ev = self.heap.pop().expect("peeked");
                self.now = ev.at;
                Some((ev.at, ev.payload))
            }
            _ => None,
        }
    }

    /// Moves the clock forward to `t` once every event up to `t` has fired.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Seeded generator; identical seeds give identical draws on every platform.
#[derive(Clone, Debug)]
pub struct SimRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng { seed, inner: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Bernoulli trial. Always consumes one draw so traces do not depend on `p`
    /// reaching the degenerate values 0 or 1.
    pub fn chance(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }
}

/// Static description of a unidirectional link.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    pub bandwidth_bps: u64,
    pub latency_ms: f64,
    #[serde(default)]
    pub loss_prob: f64,
    /// Maximum frames in the link (queued plus in service); 0 means unbounded.
    #[serde(default)]
    pub queue_capacity: usize,
    /// Piecewise-constant loss probability changes at absolute times.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loss_schedule: Vec<LossStep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossStep {
    pub at_ms: f64,
    pub loss_prob: f64,
}

impl LinkParams {
    pub fn new(bandwidth_bps: u64, latency_ms: f64) -> Self {
        LinkParams { bandwidth_bps, latency_ms, loss_prob: 0.0, queue_capacity: 0, loss_schedule: Vec::new() }
    }

    pub fn with_loss(mut self, loss_prob: f64) -> Self {
        self.loss_prob = loss_prob;
        self
    }

    pub fn with_queue_capacity(mut self, frames: usize) -> Self {
        self.queue_capacity = frames;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.bandwidth_bps == 0 {
            return Err("bandwidth_bps must be > 0".into());
        }
        if self.latency_ms.is_nan() || self.latency_ms < 0.0 {
            return Err("latency_ms must be >= 0".into());
        }
        let probs = std::iter::once(self.loss_prob).chain(self.loss_schedule.iter().map(|s| s.loss_prob));
        for p in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("loss probability {p} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Result of offering a frame to a link.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TxOutcome {
    /// The frame reaches the far end at `arrival`.
    Delivered { arrival: SimTime },
    /// The frame occupied the link but was corrupted; `at` is when the far
    /// end would have received it.
    Lost { at: SimTime },
    /// Rejected at the queue tail.
    QueueDrop,
}

/// FIFO, work-conserving link with serialization, propagation and
/// i.i.d. loss applied after service.
#[derive(Clone, Debug)]
pub struct Link {
    params: LinkParams,
    propagation: SimTime,
    busy_until: SimTime,
    departures: VecDeque<SimTime>,
    loss_override: Option<f64>,
    frames_sent: u64,
    bytes_sent: u64,
}

impl Link {
    pub fn new(params: LinkParams) -> Self {
        assert!(params.bandwidth_bps > 0, "link bandwidth must be positive");
        let propagation = SimTime::from_millis_f64(params.latency_ms);
        Link {
            params,
            propagation,
            busy_until: SimTime::ZERO,
            departures: VecDeque::new(),
            loss_override: None,
            frames_sent: 0,
            bytes_sent: 0,
        }
    }

    pub fn params(&self) -> &LinkParams {
        &self.params
    }

    pub fn propagation(&self) -> SimTime {
        self.propagation
    }

    pub fn busy_until(&self) -> SimTime {
        self.busy_until
    }

    pub fn bandwidth_bps(&self) -> u64 {
        self.params.bandwidth_bps
    }

    pub fn frames_sent(&self) -> u64 {
        self.frames_sent
    }

    pub fn bytes_sent(&self) -> u64 {
        self.bytes_sent
    }

    /// Forces a loss probability regardless of the configured schedule.
    pub fn set_loss_override(&mut self, p: Option<f64>) {
        self.loss_override = p;
    }

    pub fn loss_prob_at(&self, now: SimTime) -> f64 {
        if let Some(p) = self.loss_override {
            return p;
        }
        let now_ms = now.as_millis_f64();
        self.params.loss_schedule.iter().rfind(|s| s.at_ms <= now_ms).map_or(self.params.loss_prob, |s| s.loss_prob)
    }

    /// Frames still occupying the link (waiting or in service) at `now`.
    pub fn backlog(&mut self, now: SimTime) -> usize {
        while self.departures.front().is_some_and(|&d| d <= now) {
            self.departures.pop_front();
        }
        self.departures.len()
    }

    pub fn transmit(&mut self, frame_bytes: u64, now: SimTime, rng: &mut SimRng) -> TxOutcome {
        assert!(frame_bytes > 0, "empty frame");
        let cap = self.params.queue_capacity;
        if cap > 0 && self.backlog(now) >= cap {
            return TxOutcome::QueueDrop;
        }
        let start = now.max(self.busy_until);
        let done = start + serialization_time(frame_bytes, self.params.bandwidth_bps);
        self.busy_until = done;
        self.departures.push_back(done);
        self.frames_sent += 1;
        self.bytes_sent += frame_bytes;
        let at = done + self.propagation;
        if rng.chance(self.loss_prob_at(now)) {
            TxOutcome::Lost { at }
        } else {
            TxOutcome::Delivered { arrival: at }
        }
    }
}
