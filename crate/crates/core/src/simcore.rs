//! Deterministic event queue and simulated clock.
//!
//! Time is kept as an integer count of microseconds so that event ordering
//! never depends on floating-point rounding. Events at equal timestamps are
//! ordered by [`EventKind`] priority and then by insertion sequence.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, Sub};

use crate::error::SimError;

/// Simulated time in microseconds since the start of the run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    /// Rounds to the nearest microsecond. Negative and NaN inputs map to zero.
    pub fn from_secs_f64(secs: f64) -> Self {
        if secs.is_nan() || secs <= 0.0 {
            return SimTime(0);
        }
        SimTime((secs * 1e6).round() as u64)
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

impl std::str::FromStr for SimTime {
    type Err = String;

    /// Parses `seconds[.micros]` exactly, without going through `f64`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || format!("invalid time `{s}`");
        let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
        if whole.is_empty()
            || frac.len() > 6
            || !whole.bytes().all(|b| b.is_ascii_digit())
            || !frac.bytes().all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let secs: u64 = whole.parse().map_err(|_| bad())?;
        let mut micros = 0u64;
        for (i, b) in frac.bytes().enumerate() {
            micros += u64::from(b - b'0') * 10u64.pow(5 - i as u32);
        }
        secs.checked_mul(1_000_000)
            .and_then(|us| us.checked_add(micros))
            .map(SimTime)
            .ok_or_else(bad)
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
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

/// Job identifier, unique within a workload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct JobId(pub u32);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Event kinds, declared in tie-break order: at equal timestamps a step
/// completion is handled before an arrival, an arrival before a check, and
/// so on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    StepComplete,
    JobArrival,
    CheckPoint,
    ResizeComplete,
    ResizerTimeout,
    SimulationEnd,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::StepComplete => "StepComplete",
            EventKind::JobArrival => "JobArrival",
            EventKind::CheckPoint => "CheckPoint",
            EventKind::ResizeComplete => "ResizeComplete",
            EventKind::ResizerTimeout => "ResizerTimeout",
            EventKind::SimulationEnd => "SimulationEnd",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Event {
    pub time: SimTime,
    pub kind: EventKind,
    pub subject: Option<JobId>,
    /// Generation of the subject at scheduling time. An event whose subject
    /// has since moved to a newer generation is a tombstone.
    pub generation: u64,
    pub seq: u64,
}

impl Event {
    fn key(&self) -> (SimTime, EventKind, u64) {
        (self.time, self.kind, self.seq)
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key().cmp(&other.key())
    }
}

/// Counters kept by the queue; `scheduled == processed + cancelled + pending`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueueStats {
    pub scheduled: u64,
    pub processed: u64,
    pub cancelled: u64,
}

/// Min-queue of events plus the simulation clock.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    now: SimTime,
    next_seq: u64,
    stats: QueueStats,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn stats(&self) -> QueueStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Inserts an event and returns its sequence number.
    pub fn schedule(
        &mut self,
        time: SimTime,
        kind: EventKind,
        subject: Option<JobId>,
        generation: u64,
    ) -> Result<u64, SimError> {
        if time < self.now {
            return Err(SimError::Causality {
                at: time,
                now: self.now,
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.stats.scheduled += 1;
        self.heap.push(Reverse(Event {
            time,
            kind,
            subject,
            generation,
            seq,
        }));
        Ok(seq)
    }

    /// Pops the next event and advances the clock to its timestamp.
    pub fn next_event(&mut self) -> Option<Event> {
        let Reverse(ev) = self.heap.pop()?;
        debug_assert!(ev.time >= self.now);
        self.now = ev.time;
        self.stats.processed += 1;
        Some(ev)
    }

    /// Pops the next event for which `is_live` holds. Dead events are
    /// dropped and counted as cancelled; they do not move the clock.
    pub fn next_live(&mut self, mut is_live: impl FnMut(&Event) -> bool) -> Option<Event> {
        while let Some(Reverse(ev)) = self.heap.pop() {
            if is_live(&ev) {
                self.now = ev.time;
                self.stats.processed += 1;
                return Some(ev);
            }
            self.stats.cancelled += 1;
        }
        None
    }

    /// Like [`schedule`](Self::schedule) but takes seconds; negative or
    /// non-finite times are causality violations.
    pub fn schedule_secs(
        &mut self,
        secs: f64,
        kind: EventKind,
        subject: Option<JobId>,
        generation: u64,
    ) -> Result<u64, SimError> {
        if !secs.is_finite() || secs < 0.0 {
            return Err(SimError::Causality {
                at: SimTime::ZERO,
                now: self.now,
            });
        }
        self.schedule(SimTime::from_secs_f64(secs), kind, subject, generation)
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(ev)| ev.time)
    }
}
