//! Wall-clock synchronized event dispatch.
//!
//! The scheduler releases each event once the wall clock reaches the event's
//! due time. While the next event lies in the future it waits for external
//! packets, with a poll timeout chosen by [`SchedulerPolicy`]:
//!
//! * `Corrected` waits at most until the next event is due, capped at
//!   `max_poll`.
//! * `FixedTimeout` always waits the full `max_poll`. An event due 3 ms out
//!   with a 10 ms poll is dispatched 7 ms late. This variant exists to
//!   reproduce that behaviour.

mod clock;

use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::bench::stats::quantile;
use crate::capture::{HandoffQueue, Packet};
use crate::kernel::{Event, EventId, EventKind, Kernel, KernelError};
use crate::netmodel::{Ingress, NodeId};
use crate::time::{sim_to_wall, wall_to_sim, BeforeEpoch, SimTime, WallTime};

pub use clock::{ClockError, ClockSource, RealClock, TestClock, WaitOutcome};

pub const DEFAULT_MAX_POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyVariant {
    Corrected,
    FixedTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SchedulerPolicy {
    pub variant: PolicyVariant,
    pub max_poll: Duration,
}

impl SchedulerPolicy {
    pub fn corrected() -> Self {
        Self {
            variant: PolicyVariant::Corrected,
            max_poll: DEFAULT_MAX_POLL,
        }
    }

    pub fn fixed_timeout() -> Self {
        Self {
            variant: PolicyVariant::FixedTimeout,
            max_poll: DEFAULT_MAX_POLL,
        }
    }

    pub fn with_max_poll(mut self, max_poll: Duration) -> Self {
        assert!(!max_poll.is_zero(), "max_poll must be positive");
        self.max_poll = max_poll;
        self
    }
}

pub fn compute_poll_timeout(now: WallTime, target: WallTime, policy: &SchedulerPolicy) -> Duration {
    match policy.variant {
        PolicyVariant::Corrected => target.saturating_since(now).min(policy.max_poll),
        PolicyVariant::FixedTimeout => policy.max_poll,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LatenessRecord {
    pub event: EventId,
    pub due_wall: WallTime,
    pub actual_wall: WallTime,
}

impl LatenessRecord {
    pub fn lateness(&self) -> Duration {
        self.actual_wall.saturating_since(self.due_wall)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LatenessSummary {
    pub count: usize,
    pub max: Duration,
    pub mean: Duration,
    pub p99: Duration,
    pub empty: bool,
}

pub fn lateness_summary(records: &[LatenessRecord]) -> LatenessSummary {
    if records.is_empty() {
        return LatenessSummary {
            empty: true,
            ..Default::default()
        };
    }
    let mut ns: Vec<f64> = records.iter().map(|r| r.lateness().as_nanos() as f64).collect();
    ns.sort_by(f64::total_cmp);
    let total: u128 = records.iter().map(|r| r.lateness().as_nanos()).sum();
    let mean = total as f64 / records.len() as f64;
    let p99 = quantile(&ns, 0.99).expect("non-empty");
    LatenessSummary {
        count: records.len(),
        max: records.iter().map(|r| r.lateness()).max().unwrap_or_default(),
        mean: Duration::from_nanos(mean.round() as u64),
        p99: Duration::from_nanos(p99.round() as u64),
        empty: false,
    }
}

#[derive(Debug, Error)]
pub enum SchedError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("clock failure: {0}")]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Epoch(#[from] BeforeEpoch),
    #[error("packet captured on unknown external interface {0}")]
    UnknownInterface(usize),
    #[error("no pending events and no external sources to wait for")]
    Idle,
}

pub struct Scheduler<C> {
    kernel: Kernel,
    clock: C,
    policy: SchedulerPolicy,
    epoch: WallTime,
    handoff: Arc<HandoffQueue>,
    ingress: Vec<NodeId>,
    lateness: Vec<LatenessRecord>,
    injected: u64,
}

impl<C: ClockSource> Scheduler<C> {
    /// `ingress[i]` is the node receiving packets captured on external
    /// interface `i`. Simulation time 0 is the clock reading taken here.
    pub fn new(
        clock: C,
        policy: SchedulerPolicy,
        handoff: Arc<HandoffQueue>,
        ingress: Vec<NodeId>,
    ) -> Self {
        let epoch = clock.now();
        Self {
            kernel: Kernel::new(),
            clock,
            policy,
            epoch,
            handoff,
            ingress,
            lateness: Vec::new(),
            injected: 0,
        }
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn kernel_mut(&mut self) -> &mut Kernel {
        &mut self.kernel
    }

    pub fn clock(&self) -> &C {
        &self.clock
    }

    pub fn clock_mut(&mut self) -> &mut C {
        &mut self.clock
    }

    pub fn policy(&self) -> SchedulerPolicy {
        self.policy
    }

    pub fn epoch(&self) -> WallTime {
        self.epoch
    }

    pub fn lateness(&self) -> &[LatenessRecord] {
        &self.lateness
    }

    /// Packets taken from the handoff queue so far.
    pub fn injected(&self) -> u64 {
        self.injected
    }

    pub fn sim_now(&self) -> Result<SimTime, BeforeEpoch> {
        wall_to_sim(self.epoch, self.clock.now())
    }

    pub fn schedule(&mut self, due: SimTime, kind: EventKind) -> Result<EventId, KernelError> {
        self.kernel.schedule(due, kind)
    }

    pub fn inject_external(&mut self, packet: Packet, now: WallTime) -> Result<EventId, SchedError> {
        let iface = packet.iface;
        let node = *self
            .ingress
            .get(iface.0)
            .ok_or(SchedError::UnknownInterface(iface.0))?;
        let due = wall_to_sim(self.epoch, now)?;
        self.injected += 1;
        Ok(self.kernel.schedule(
            due,
            EventKind::PacketArrival {
                packet,
                node,
                ingress: Ingress::External(iface),
            },
        )?)
    }

    fn drain_handoff(&mut self) -> Result<(), SchedError> {
        let packets = self.handoff.drain();
        if packets.is_empty() {
            return Ok(());
        }
        let now = self.clock.now();
        for p in packets {
            self.inject_external(p, now)?;
        }
        Ok(())
    }

    /// Waits for and returns the next event, with no stopping point.
    pub fn next_dispatch(&mut self) -> Result<Event, SchedError> {
        loop {
            if let Some(ev) = self.step(None)? {
                return Ok(ev);
            }
        }
    }

    /// Like [`next_dispatch`](Self::next_dispatch) but gives up with `None`
    /// once the wall clock reaches `limit`.
    pub fn next_dispatch_before(&mut self, limit: WallTime) -> Result<Option<Event>, SchedError> {
        self.step(Some(limit))
    }

    fn step(&mut self, limit: Option<WallTime>) -> Result<Option<Event>, SchedError> {
        loop {
            self.drain_handoff()?;
            let now = self.clock.now();
            let target = self.kernel.peek_due().map(|d| sim_to_wall(self.epoch, d));
            if let Some(target) = target.filter(|t| now >= *t) {
                let ev = self.kernel.pop_next()?;
                self.lateness.push(LatenessRecord {
                    event: ev.id,
                    due_wall: target,
                    actual_wall: now,
                });
                return Ok(Some(ev));
            }
            if limit.is_some_and(|l| now >= l) {
                return Ok(None);
            }
            if target.is_none() && self.ingress.is_empty() {
                return Err(SchedError::Idle);
            }
            let target = target.unwrap_or(now + self.policy.max_poll);
            let mut wait = compute_poll_timeout(now, target, &self.policy);
            if let Some(l) = limit {
                wait = wait.min(l.saturating_since(now));
            }
            self.clock.wait_for_external(wait)?;
        }
    }
}
