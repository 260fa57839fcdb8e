use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::capture::{CaptureError, HandoffQueue, SyntheticSource};
use crate::time::{WallClock, WallTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaitOutcome {
    ExternalArrived(usize),
    TimedOut,
}

#[derive(Debug, Error)]
pub enum ClockError {
    #[error("capture backend failed: {0}")]
    Capture(#[from] CaptureError),
    #[error("clock source failed: {0}")]
    Other(String),
}

/// Time and external-packet notifications for the scheduler loop.
pub trait ClockSource {
    fn now(&self) -> WallTime;

    /// Blocks until packets are waiting in the handoff queue or `timeout`
    /// elapses.
    fn wait_for_external(&mut self, timeout: Duration) -> Result<WaitOutcome, ClockError>;

    /// Keeps the consumer busy for `d` without draining anything. Capture
    /// keeps running meanwhile.
    fn stall(&mut self, d: Duration) -> Result<(), ClockError>;
}

/// Monotone OS clock; wakes early when a capture thread pushes a packet.
pub struct RealClock {
    clock: WallClock,
    handoff: Arc<HandoffQueue>,
}

impl RealClock {
    pub fn new(clock: WallClock, handoff: Arc<HandoffQueue>) -> Self {
        Self { clock, handoff }
    }

    pub fn wall_clock(&self) -> WallClock {
        self.clock
    }
}

impl ClockSource for RealClock {
    fn now(&self) -> WallTime {
        self.clock.now()
    }

    fn wait_for_external(&mut self, timeout: Duration) -> Result<WaitOutcome, ClockError> {
        match self.handoff.wait_nonempty(timeout) {
            0 => Ok(WaitOutcome::TimedOut),
            n => Ok(WaitOutcome::ExternalArrived(n)),
        }
    }

    fn stall(&mut self, d: Duration) -> Result<(), ClockError> {
        std::thread::sleep(d);
        Ok(())
    }
}

/// Virtual clock driving scripted sources inline.
///
/// Time only moves inside [`wait_for_external`] and [`stall`]. A wait
/// advances to the earliest of its deadline and the first instant at which a
/// packet lands in the handoff queue, never beyond.
///
/// [`wait_for_external`]: ClockSource::wait_for_external
/// [`stall`]: ClockSource::stall
pub struct TestClock {
    now: WallTime,
    sources: Vec<SyntheticSource>,
    handoff: Arc<HandoffQueue>,
}

impl TestClock {
    pub fn new(
        start: WallTime,
        sources: Vec<SyntheticSource>,
        handoff: Arc<HandoffQueue>,
    ) -> Result<Self, ClockError> {
        let mut clock = Self {
            now: start,
            sources,
            handoff,
        };
        clock.process_through(start)?;
        Ok(clock)
    }

    pub fn sources(&self) -> &[SyntheticSource] {
        &self.sources
    }

    pub fn handoff(&self) -> &Arc<HandoffQueue> {
        &self.handoff
    }

    /// Earliest instant any source changes state.
    pub fn next_wakeup(&self) -> Option<WallTime> {
        self.sources.iter().filter_map(|s| s.next_wakeup()).min()
    }

    fn process_through(&mut self, t: WallTime) -> Result<(), ClockError> {
        for s in &mut self.sources {
            s.advance_to(t)?;
        }
        Ok(())
    }

    /// Moves time forward to `t`, processing every source wake-up on the way
    /// in time order.
    pub fn advance_to(&mut self, t: WallTime) -> Result<(), ClockError> {
        while let Some(w) = self.next_wakeup().filter(|w| *w <= t) {
            self.now = w;
            self.process_through(w)?;
        }
        self.now = self.now.max(t);
        self.process_through(self.now)
    }
}

impl ClockSource for TestClock {
    fn now(&self) -> WallTime {
        self.now
    }

    fn wait_for_external(&mut self, timeout: Duration) -> Result<WaitOutcome, ClockError> {
        let deadline = self.now + timeout;
        loop {
            let pending = self.handoff.len();
            if pending > 0 {
                return Ok(WaitOutcome::ExternalArrived(pending));
            }
            match self.next_wakeup() {
                Some(w) if w <= deadline => {
                    self.now = self.now.max(w);
                    self.process_through(self.now)?;
                }
                _ => {
                    self.now = deadline;
                    self.process_through(deadline)?;
                    return Ok(match self.handoff.len() {
                        0 => WaitOutcome::TimedOut,
                        n => WaitOutcome::ExternalArrived(n),
                    });
                }
            }
        }
    }

    fn stall(&mut self, d: Duration) -> Result<(), ClockError> {
        let t = self.now + d;
        self.advance_to(t)
    }
}
