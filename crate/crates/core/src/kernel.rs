//! Discrete-event core: events, the future event set and an as-fast-as-possible
//! run mode.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::capture::Packet;
use crate::netmodel::{ChannelId, ExtId, Ingress, NodeId};
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EventKind {
    TimerFire(u64),
    PacketArrival {
        packet: Packet,
        node: NodeId,
        ingress: Ingress,
    },
    PacketDeparture {
        packet: Packet,
        channel: ChannelId,
    },
    EmitExternal {
        packet: Packet,
        sink: ExtId,
    },
    ProbeSend(u64),
}

impl EventKind {
    pub fn packet(&self) -> Option<&Packet> {
        match self {
            EventKind::PacketArrival { packet, .. }
            | EventKind::PacketDeparture { packet, .. }
            | EventKind::EmitExternal { packet, .. } => Some(packet),
            EventKind::TimerFire(_) | EventKind::ProbeSend(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Event {
    pub id: EventId,
    pub due: SimTime,
    /// Insertion counter, assigned by the future event set.
    pub seq: u64,
    pub kind: EventKind,
}

impl Event {
    pub fn new(id: EventId, due: SimTime, kind: EventKind) -> Self {
        Self {
            id,
            due,
            seq: 0,
            kind,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("event {id:?} due at {due} is earlier than current simtime {now}")]
    DueInPast {
        id: EventId,
        due: SimTime,
        now: SimTime,
    },
    #[error("future event set is empty")]
    Empty,
    #[error("run horizon {t_end} is earlier than current simtime {now}")]
    HorizonInPast { t_end: SimTime, now: SimTime },
}

struct Queued(Event);

impl Queued {
    fn key(&self) -> (SimTime, u64) {
        (self.0.due, self.0.seq)
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
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
        self.key().cmp(&other.key())
    }
}

/// Pending events ordered by `(due, seq)`.
///
/// The set also tracks the current simulation time: the due time of the most
/// recently popped event. Inserting anything earlier is rejected.
#[derive(Default)]
pub struct FutureEventSet {
    heap: BinaryHeap<Reverse<Queued>>,
    next_seq: u64,
    now: SimTime,
    inserted: u64,
    popped: u64,
}

impl FutureEventSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn popped(&self) -> u64 {
        self.popped
    }

    pub fn insert(&mut self, mut event: Event) -> Result<(), KernelError> {
        if event.due < self.now {
            return Err(KernelError::DueInPast {
                id: event.id,
                due: event.due,
                now: self.now,
            });
        }
        event.seq = self.next_seq;
        self.next_seq += 1;
        self.inserted += 1;
        self.heap.push(Reverse(Queued(event)));
        Ok(())
    }

    pub fn peek_due(&self) -> Option<SimTime> {
        self.heap.peek().map(|Reverse(q)| q.0.due)
    }

    pub fn pop_next(&mut self) -> Result<Event, KernelError> {
        let Reverse(Queued(event)) = self.heap.pop().ok_or(KernelError::Empty)?;
        self.popped += 1;
        self.now = self.now.max(event.due);
        Ok(event)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Event> {
        self.heap.iter().map(|Reverse(q)| &q.0)
    }
}

/// Owns the future event set and hands out event ids.
#[derive(Default)]
pub struct Kernel {
    fes: FutureEventSet,
    next_id: u64,
}

impl Kernel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> SimTime {
        self.fes.now()
    }

    pub fn fes(&self) -> &FutureEventSet {
        &self.fes
    }

    pub fn schedule(&mut self, due: SimTime, kind: EventKind) -> Result<EventId, KernelError> {
        let id = EventId(self.next_id);
        self.fes.insert(Event::new(id, due, kind))?;
        self.next_id += 1;
        Ok(id)
    }

    pub fn peek_due(&self) -> Option<SimTime> {
        self.fes.peek_due()
    }

    pub fn pop_next(&mut self) -> Result<Event, KernelError> {
        self.fes.pop_next()
    }

    /// Dispatches every event due at or before `t_end` without waiting on any
    /// clock. Returns the number of dispatched events.
    pub fn run_until<E, F>(&mut self, t_end: SimTime, mut handler: F) -> Result<usize, E>
    where
        E: From<KernelError>,
        F: FnMut(&mut Kernel, Event) -> Result<(), E>,
    {
        if t_end < self.now() {
            return Err(KernelError::HorizonInPast {
                t_end,
                now: self.now(),
            }
            .into());
        }
        let mut count = 0;
        while self.peek_due().is_some_and(|d| d <= t_end) {
            let ev = self.pop_next()?;
            handler(self, ev)?;
            count += 1;
        }
        Ok(count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ms(v: u64) -> SimTime {
        SimTime::from_millis(v)
    }

    fn timer(k: &mut Kernel, due: SimTime, tag: u64) -> EventId {
        k.schedule(due, EventKind::TimerFire(tag)).unwrap()
    }

    fn tag(ev: &Event) -> u64 {
        match ev.kind {
            EventKind::TimerFire(t) => t,
            _ => panic!("unexpected kind"),
        }
    }

    #[test]
    fn pops_in_due_order() {
        let mut k = Kernel::new();
        timer(&mut k, ms(5), 0);
        timer(&mut k, ms(3), 1);
        assert_eq!(k.pop_next().unwrap().due, ms(3));
        assert_eq!(k.pop_next().unwrap().due, ms(5));
    }

    #[test]
    fn equal_due_is_fifo() {
        let mut k = Kernel::new();
        let a = timer(&mut k, ms(3), 0);
        let b = timer(&mut k, ms(3), 1);
        assert_eq!(k.pop_next().unwrap().id, a);
        assert_eq!(k.pop_next().unwrap().id, b);
    }

    #[test]
    fn three_pops() {
        let mut k = Kernel::new();
        timer(&mut k, ms(5), 0);
        timer(&mut k, ms(3), 1);
        timer(&mut k, ms(5), 2);
        let order: Vec<_> = (0..3).map(|_| tag(&k.pop_next().unwrap())).collect();
        assert_eq!(order, vec![1, 0, 2]);
        assert_eq!(k.pop_next(), Err(KernelError::Empty));
    }

    #[test]
    fn peek() {
        let mut k = Kernel::new();
        assert_eq!(k.peek_due(), None);
        timer(&mut k, ms(7), 0);
        assert_eq!(k.peek_due(), Some(ms(7)));
        k.pop_next().unwrap();
        assert_eq!(k.peek_due(), None);
    }

    #[test]
    fn insert_in_past_is_rejected() {
        let mut k = Kernel::new();
        timer(&mut k, ms(4), 0);
        k.pop_next().unwrap();
        let err = k.schedule(ms(3), EventKind::TimerFire(1)).unwrap_err();
        assert!(matches!(err, KernelError::DueInPast { .. }));
        // due == now is fine
        timer(&mut k, ms(4), 2);
    }

    #[test]
    fn self_rescheduling_timer() {
        let mut k = Kernel::new();
        timer(&mut k, ms(1), 0);
        let n = k
            .run_until(ms(10), |k, ev| -> Result<(), KernelError> {
                k.schedule(ev.due + std::time::Duration::from_millis(1), EventKind::TimerFire(0))?;
                Ok(())
            })
            .unwrap();
        assert_eq!(n, 10);
        assert_eq!(k.now(), ms(10));
        assert_eq!(k.fes().len(), 1);
    }

    #[test]
    fn empty_run_leaves_time_alone() {
        let mut k = Kernel::new();
        let n = k
            .run_until(ms(10), |_, _| -> Result<(), KernelError> { Ok(()) })
            .unwrap();
        assert_eq!(n, 0);
        assert_eq!(k.now(), SimTime::ZERO);
    }

    #[test]
    fn handler_error_propagates() {
        let mut k = Kernel::new();
        timer(&mut k, ms(5), 0);
        let err = k
            .run_until(ms(10), |k, _| -> Result<(), KernelError> {
                k.schedule(ms(1), EventKind::TimerFire(1))?;
                Ok(())
            })
            .unwrap_err();
        assert!(matches!(err, KernelError::DueInPast { .. }));
    }

    #[test]
    fn horizon_before_now() {
        let mut k = Kernel::new();
        timer(&mut k, ms(5), 0);
        k.pop_next().unwrap();
        let err = k
            .run_until(ms(1), |_, _| -> Result<(), KernelError> { Ok(()) })
            .unwrap_err();
        assert!(matches!(err, KernelError::HorizonInPast { .. }));
    }

    #[test]
    fn ten_thousand_against_sort_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let mut k = Kernel::new();
        let mut expected = Vec::new();
        for i in 0..10_000u64 {
            let due = SimTime(rng.random_range(0..1_000));
            timer(&mut k, due, i);
            expected.push((due, i));
        }
        // stable sort on due alone keeps insertion order among ties
        expected.sort_by_key(|&(d, _)| d);
        let got: Vec<_> = (0..10_000)
            .map(|_| {
                let e = k.pop_next().unwrap();
                (e.due, tag(&e))
            })
            .collect();
        assert_eq!(got, expected);
    }

    proptest! {
        #[test]
        fn interleaved_ops_match_oracle(ops in prop::collection::vec((any::<bool>(), 0u64..50), 1..300)) {
            let mut k = Kernel::new();
            let mut shadow: Vec<(SimTime, u64)> = Vec::new();
            let mut inserted = 0u64;
            let mut popped = 0u64;
            let mut last = SimTime::ZERO;
            for (i, (pop, off)) in ops.into_iter().enumerate() {
                if pop && !shadow.is_empty() {
                    let pos = shadow.iter().enumerate().min_by_key(|(_, &(d, s))| (d, s)).unwrap().0;
                    let want = shadow.remove(pos);
                    let ev = k.pop_next().unwrap();
                    prop_assert_eq!((ev.due, tag(&ev)), want);
                    prop_assert!(ev.due >= last);
                    last = ev.due;
                    popped += 1;
                } else {
                    let due = SimTime(k.now().0 + off);
                    timer(&mut k, due, i as u64);
                    shadow.push((due, i as u64));
                    inserted += 1;
                }
                prop_assert_eq!(k.fes().len() as u64, inserted - popped);
            }
        }
    }
}
