//! Event queue and simulated clock.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::adversary::AttackKind;
use crate::protocol::ReportEvent;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("cannot schedule at {requested} ms: clock is already at {now} ms")]
pub struct SchedulePastError {
    pub now: u64,
    pub requested: u64,
}

/// Monotone simulated time in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimClock {
    now: u64,
}

impl SimClock {
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn advance_to(&mut self, ts: u64) {
        debug_assert!(ts >= self.now);
        self.now = self.now.max(ts);
    }
}

/// Event kinds in tie-break order: at equal timestamps maintenance runs
/// first, then attacks, then encounters, then report delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    MaintenanceVisit,
    AttackTrigger,
    Arrival,
    Report,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventPayload {
    Arrival {
        encounter: usize,
    },
    MaintenanceVisit {
        ecu: usize,
    },
    AttackTrigger {
        kind: AttackKind,
        round: usize,
        ecu: Option<usize>,
    },
    Report(Box<ReportEvent>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimEvent {
    pub fire_ts: u64,
    pub kind: EventKind,
    /// Vehicle index (fabricated identities get indices past the fleet).
    pub subject: usize,
    pub payload: EventPayload,
}

impl SimEvent {
    pub fn new(fire_ts: u64, subject: usize, payload: EventPayload) -> Self {
        let kind = match payload {
            EventPayload::Arrival { .. } => EventKind::Arrival,
            EventPayload::MaintenanceVisit { .. } => EventKind::MaintenanceVisit,
            EventPayload::AttackTrigger { .. } => EventKind::AttackTrigger,
            EventPayload::Report(_) => EventKind::Report,
        };
        Self {
            fire_ts,
            kind,
            subject,
            payload,
        }
    }
}

#[derive(Debug)]
struct Queued {
    key: (u64, EventKind, usize, u64),
    event: SimEvent,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.cmp(&other.key)
    }
}

/// Pops events ordered by `(fire_ts, kind, subject, insertion order)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Queued>>,
    clock: SimClock,
    inserted: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, event: SimEvent) -> Result<(), SchedulePastError> {
        if event.fire_ts < self.clock.now() {
            return Err(SchedulePastError {
                now: self.clock.now(),
                requested: event.fire_ts,
            });
        }
        let key = (event.fire_ts, event.kind, event.subject, self.inserted);
        self.inserted += 1;
        self.heap.push(Reverse(Queued { key, event }));
        Ok(())
    }

    /// Removes the next event and advances the clock to its time.
    pub fn pop(&mut self) -> Option<SimEvent> {
        let Reverse(q) = self.heap.pop()?;
        self.clock.advance_to(q.event.fire_ts);
        Some(q.event)
    }
}
