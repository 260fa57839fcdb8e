use std::collections::VecDeque;
use std::sync::{Condvar, Mutex, MutexGuard};
use std::time::Duration;

use super::Packet;

/// Bounded drop-tail FIFO between capture producers and the scheduler loop.
///
/// Producers never block: a push into a full queue is rejected and counted.
/// There is exactly one consumer.
pub struct HandoffQueue {
    capacity: usize,
    inner: Mutex<Inner>,
    ready: Condvar,
}

#[derive(Default)]
struct Inner {
    queue: VecDeque<Packet>,
    accepted: u64,
    rejected: u64,
}

impl HandoffQueue {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "handoff capacity must be positive");
        Self {
            capacity,
            inner: Mutex::new(Inner::default()),
            ready: Condvar::new(),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Inner> {
        // a panicking producer cannot leave the deque in a torn state
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Returns `false` (and counts a drop) when the queue is full.
    pub fn push(&self, packet: Packet) -> bool {
        let mut inner = self.lock();
        if inner.queue.len() >= self.capacity {
            inner.rejected += 1;
            return false;
        }
        inner.queue.push_back(packet);
        inner.accepted += 1;
        drop(inner);
        self.ready.notify_one();
        true
    }

    pub fn drain(&self) -> Vec<Packet> {
        self.lock().queue.drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.lock().queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn accepted(&self) -> u64 {
        self.lock().accepted
    }

    pub fn rejected(&self) -> u64 {
        self.lock().rejected
    }

    /// Blocks until the queue is non-empty or `timeout` elapses. Returns the
    /// queue length at wake-up.
    pub fn wait_nonempty(&self, timeout: Duration) -> usize {
        let guard = self.lock();
        if !guard.queue.is_empty() || timeout.is_zero() {
            return guard.queue.len();
        }
        let (guard, _) = self
            .ready
            .wait_timeout_while(guard, timeout, |inner| inner.queue.is_empty())
            .unwrap_or_else(|e| e.into_inner());
        guard.queue.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::ExtId;
    use crate::time::WallTime;
    use proptest::prelude::*;
    use std::sync::Arc;
    use std::time::Instant;

    fn pkt(seq: u64) -> Packet {
        Packet::captured(vec![0; 16], WallTime(seq), seq, ExtId(0))
    }

    #[test]
    fn drain_empty() {
        let q = HandoffQueue::new(4);
        assert!(q.drain().is_empty());
    }

    #[test]
    fn drain_is_fifo() {
        let q = HandoffQueue::new(4);
        q.push(pkt(1));
        q.push(pkt(2));
        let got: Vec<_> = q.drain().into_iter().map(|p| p.source_seq).collect();
        assert_eq!(got, vec![1, 2]);
        assert!(q.is_empty());
    }

    #[test]
    fn full_queue_drops_tail() {
        let q = HandoffQueue::new(1);
        assert!(q.push(pkt(1)));
        assert!(!q.push(pkt(2)));
        assert_eq!(q.accepted(), 1);
        assert_eq!(q.rejected(), 1);
        assert_eq!(q.drain()[0].source_seq, 1);
    }

    #[test]
    fn wait_times_out() {
        let q = HandoffQueue::new(1);
        let t = Instant::now();
        assert_eq!(q.wait_nonempty(Duration::from_millis(5)), 0);
        assert!(t.elapsed() >= Duration::from_millis(5));
    }

    #[test]
    fn wait_wakes_on_push() {
        let q = Arc::new(HandoffQueue::new(4));
        let p = q.clone();
        let t = Instant::now();
        let h = std::thread::spawn(move || {
            std::thread::sleep(Duration::from_millis(5));
            p.push(pkt(1));
        });
        assert_eq!(q.wait_nonempty(Duration::from_secs(5)), 1);
        assert!(t.elapsed() < Duration::from_secs(1));
        h.join().unwrap();
    }

    proptest! {
        // push/drain interleavings against a shadow queue with the same bound
        #[test]
        fn matches_shadow_queue(ops in prop::collection::vec(0u8..4, 1..400), cap in 1usize..8) {
            let q = HandoffQueue::new(cap);
            let mut shadow = VecDeque::new();
            let mut shadow_drops = 0u64;
            let mut seq = 0;
            for op in ops {
                if op == 0 {
                    let got: Vec<_> = q.drain().into_iter().map(|p| p.source_seq).collect();
                    let want: Vec<_> = shadow.drain(..).collect();
                    prop_assert_eq!(got, want);
                } else {
                    seq += 1;
                    let ok = q.push(pkt(seq));
                    if shadow.len() < cap {
                        shadow.push_back(seq);
                        prop_assert!(ok);
                    } else {
                        shadow_drops += 1;
                        prop_assert!(!ok);
                    }
                }
                prop_assert!(q.len() <= cap);
            }
            prop_assert_eq!(q.rejected(), shadow_drops);
        }
    }
}
