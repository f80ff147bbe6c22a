//! Deterministic discrete-event engine.
//!
//! Time is an integer count of microseconds. Events that fire at the same
//! instant execute in the order they were scheduled. Randomness comes from
//! per-entity ChaCha streams so that adding an entity never perturbs the
//! draws of existing ones.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 802.11 time unit.
pub const TU_US: u64 = 1024;

/// A simulated instant in whole microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond.
    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1e6).round() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

impl Add<u64> for SimTime {
    type Output = SimTime;

    fn add(self, us: u64) -> SimTime {
        SimTime(self.0 + us)
    }
}

impl Sub for SimTime {
    type Output = u64;

    fn sub(self, other: SimTime) -> u64 {
        debug_assert!(self.0 >= other.0, "negative interval {} - {}", self.0, other.0);
        self.0 - other.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Handle returned by [`Scheduler::schedule`]; permits cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

impl EventHandle {
    pub fn sequence(self) -> u64 {
        self.0
    }
}

#[derive(Debug)]
struct Queued<E> {
    fire_at: SimTime,
    sequence: u64,
    action: E,
}

impl<E> PartialEq for Queued<E> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.sequence == other.sequence
    }
}

impl<E> Eq for Queued<E> {}

impl<E> PartialOrd for Queued<E> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Queued<E> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.fire_at, self.sequence).cmp(&(other.fire_at, other.sequence))
    }
}

/// Min-heap of timed events with FIFO tie-breaking.
///
/// `E` is the action descriptor; the owner of the scheduler interprets it.
#[derive(Debug)]
pub struct Scheduler<E> {
    now: SimTime,
    next_sequence: u64,
    heap: BinaryHeap<Reverse<Queued<E>>>,
    cancelled: HashSet<u64>,
    fired: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Scheduler {
            now: SimTime::ZERO,
            next_sequence: 0,
            heap: BinaryHeap::new(),
            cancelled: HashSet::new(),
            fired: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events popped so far (cancelled events excluded).
    pub fn fired(&self) -> u64 {
        self.fired
    }

    pub fn pending(&self) -> usize {
        self.heap.len() - self.cancelled.len()
    }

    /// Queues `action` to fire at `fire_at`. Scheduling before `now()` is a
    /// causality violation.
    pub fn schedule(&mut self, fire_at: SimTime, action: E) -> Result<EventHandle> {
        if fire_at < self.now {
            return Err(Error::Causality { now: self.now, requested: fire_at });
        }
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.heap.push(Reverse(Queued { fire_at, sequence, action }));
        Ok(EventHandle(sequence))
    }

    pub fn schedule_in(&mut self, delay_us: u64, action: E) -> Result<EventHandle> {
        self.schedule(self.now + delay_us, action)
    }

    /// Cancels a queued event. Cancelling an event that already fired is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        if handle.0 < self.next_sequence && self.heap.iter().any(|q| q.0.sequence == handle.0) {
            self.cancelled.insert(handle.0);
        }
    }

    /// Pops the next event with `fire_at <= end`, advancing the clock to it.
    pub fn pop_until(&mut self, end: SimTime) -> Option<(SimTime, E)> {
        loop {
            let head = self.heap.peek()?;
            if head.0.fire_at > end {
                return None;
            }
            let Reverse(q) = self.heap.pop().expect("peeked");
            if self.cancelled.remove(&q.sequence) {
                continue;
            }
            debug_assert!(q.fire_at >= self.now);
            self.now = q.fire_at;
            self.fired += 1;
            return Some((q.fire_at, q.action));
        }
    }

    /// Moves the clock forward without firing anything.
    pub fn advance_to(&mut self, t: SimTime) {
        if t > self.now {
            self.now = t;
        }
    }

    /// Executes all events with `fire_at <= end` through `handler`, then sets
    /// `now() == end`. The handler receives the scheduler so it can queue
    /// follow-up events.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F) -> Result<()>
    where
        F: FnMut(&mut Self, SimTime, E) -> Result<()>,
    {
        while let Some((t, action)) = self.pop_until(end) {
            handler(self, t, action)?;
        }
        self.advance_to(end);
        Ok(())
    }
}

/// Identifies one independent random stream within a seeded run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamId {
    Ap,
    Sta(u16),
    Traffic(u16),
}

impl StreamId {
    fn code(self) -> u64 {
        match self {
            StreamId::Ap => 1,
            StreamId::Sta(aid) => (2 << 32) | u64::from(aid),
            StreamId::Traffic(aid) => (3 << 32) | u64::from(aid),
        }
    }
}

/// Seeded pseudo-random stream. Identical `(seed, stream)` pairs yield
/// identical sequences on every platform.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: StreamId) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream.code());
        RngStream { rng }
    }

    /// Uniform integer on `[lo, hi]` inclusive.
    pub fn uniform_int(&mut self, lo: u32, hi: u32) -> Result<u32> {
        if lo > hi {
            return Err(Error::Contract(format!("uniform_int: lo {lo} > hi {hi}")));
        }
        Ok(self.rng.gen_range(lo..=hi))
    }

    /// Exponential sample with the given mean, in seconds.
    pub fn exponential(&mut self, mean_s: f64) -> Result<f64> {
        if !(mean_s > 0.0) || !mean_s.is_finite() {
            return Err(Error::Contract(format!("exponential: non-positive mean {mean_s}")));
        }
        let exp = Exp::new(1.0 / mean_s).map_err(|e| Error::Contract(e.to_string()))?;
        Ok(exp.sample(&mut self.rng))
    }
}
