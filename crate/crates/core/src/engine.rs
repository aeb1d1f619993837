//! Discrete-event kernel: virtual clock, ordered event queue and seeded
//! random streams.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation time with microsecond resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
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

    /// Rounds to the nearest microsecond. Negative or NaN inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            return SimTime::ZERO;
        }
        SimTime((s * 1e6).round() as u64)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
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
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

/// Handle returned by [`Scheduler::schedule`]; unique for the life of the scheduler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventHandle(u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CancelResult {
    Cancelled,
    AlreadyFired,
    AlreadyCancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cannot schedule at {at}, clock is already at {now}")]
    PastTime { now: SimTime, at: SimTime },
    #[error("handler fault at {at}: {reason}")]
    Handler { at: SimTime, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub events_fired: u64,
    pub final_clock: SimTime,
}

struct Queued<E> {
    at: SimTime,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Queued<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
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
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Event queue ordered by `(fire_at, insertion sequence)`.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<Queued<E>>>,
    live: HashSet<u64>,
    cancelled: HashSet<u64>,
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
            next_seq: 0,
            heap: BinaryHeap::new(),
            live: HashSet::new(),
            cancelled: HashSet::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events queued and not cancelled.
    pub fn pending(&self) -> usize {
        self.live.len()
    }

    pub fn schedule(&mut self, event: E, at: SimTime) -> Result<EventHandle, SimError> {
        if at < self.now {
            return Err(SimError::PastTime { now: self.now, at });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Queued { at, seq, event }));
        self.live.insert(seq);
        Ok(EventHandle(seq))
    }

    /// Schedules `event` at `now() + delay`.
    pub fn schedule_in(&mut self, event: E, delay: SimTime) -> EventHandle {
        let at = self.now + delay;
        self.schedule(event, at).expect("relative schedule is never in the past")
    }

    pub fn cancel(&mut self, handle: EventHandle) -> CancelResult {
        if self.live.remove(&handle.0) {
            self.cancelled.insert(handle.0);
            CancelResult::Cancelled
        } else if self.cancelled.contains(&handle.0) {
            CancelResult::AlreadyCancelled
        } else {
            CancelResult::AlreadyFired
        }
    }

    /// Pops the next live event with `fire_at <= t_end`, advancing the clock to it.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<(SimTime, E)> {
        while let Some(Reverse(head)) = self.heap.peek() {
            if head.at > t_end {
                return None;
            }
            let Reverse(q) = self.heap.pop().expect("peeked");
            if !self.live.remove(&q.seq) {
                continue;
            }
            self.now = q.at;
            return Some((q.at, q.event));
        }
        None
    }

    /// Fires every event due by `t_end` in order, then sets the clock to `t_end`.
    ///
    /// The handler receives the scheduler so it can queue follow-up events.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> Result<RunSummary, SimError>
    where
        F: FnMut(&mut Scheduler<E>, SimTime, E) -> Result<(), SimError>,
    {
        if t_end < self.now {
            return Err(SimError::PastTime { now: self.now, at: t_end });
        }
        let mut fired = 0;
        while let Some((at, event)) = self.pop_until(t_end) {
            fired += 1;
            handler(self, at, event)?;
        }
        self.now = t_end;
        Ok(RunSummary { events_fired: fired, final_clock: t_end })
    }
}

/// Labels for the independent random streams of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamId {
    Mobility,
    Traffic,
    Jitter,
}

impl StreamId {
    fn label(self) -> &'static str {
        match self {
            StreamId::Mobility => "mobility",
            StreamId::Traffic => "traffic",
            StreamId::Jitter => "jitter",
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Derives a reproducible generator for `(seed, stream)`, optionally split
/// further by an index (one substream per flow, for example).
///
/// ChaCha output is specified bit-for-bit, so draws are identical across
/// platforms.
pub fn rng_stream(seed: u64, stream: StreamId, index: u64) -> ChaCha12Rng {
    let key = splitmix64(seed ^ fnv1a(stream.label().as_bytes()));
    ChaCha12Rng::seed_from_u64(splitmix64(key ^ splitmix64(index)))
}
