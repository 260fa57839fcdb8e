//! Ties the scheduler loop, the network model and the emission sinks
//! together.

use std::collections::BTreeMap;
use std::time::Duration;

use log::{debug, warn};
use thiserror::Error;

use crate::kernel::{EventKind, KernelError};
use crate::netmodel::{EmissionSink, NetStats, Network};
use crate::sched::{ClockError, ClockSource, SchedError, Scheduler};
use crate::time::{SimTime, WallTime};

#[derive(Debug, Error)]
pub enum EmuError {
    #[error(transparent)]
    Sched(#[from] SchedError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Clock(#[from] ClockError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerAction {
    /// Occupies the consumer for the given time, as a slow event handler would.
    Stall(Duration),
}

pub struct Emulator<C> {
    sched: Scheduler<C>,
    net: Network,
    sinks: Vec<Box<dyn EmissionSink>>,
    timers: BTreeMap<u64, TimerAction>,
    next_timer: u64,
    emit_errors: u64,
    dispatched: u64,
}

impl<C: ClockSource> Emulator<C> {
    /// `sinks[i]` serves external interface `i`.
    pub fn new(sched: Scheduler<C>, net: Network, sinks: Vec<Box<dyn EmissionSink>>) -> Self {
        Self {
            sched,
            net,
            sinks,
            timers: BTreeMap::new(),
            next_timer: 0,
            emit_errors: 0,
            dispatched: 0,
        }
    }

    pub fn scheduler(&self) -> &Scheduler<C> {
        &self.sched
    }

    pub fn scheduler_mut(&mut self) -> &mut Scheduler<C> {
        &mut self.sched
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn net_stats(&self) -> NetStats {
        self.net.stats()
    }

    pub fn emit_errors(&self) -> u64 {
        self.emit_errors
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn add_stall(&mut self, at: SimTime, length: Duration) -> Result<(), KernelError> {
        let id = self.next_timer;
        self.next_timer += 1;
        self.timers.insert(id, TimerAction::Stall(length));
        self.sched.schedule(at, EventKind::TimerFire(id))?;
        Ok(())
    }

    /// Dispatches one event. Returns `false` once `limit` is reached with
    /// nothing left to dispatch before it.
    pub fn step_before(&mut self, limit: WallTime) -> Result<bool, EmuError> {
        let Some(ev) = self.sched.next_dispatch_before(limit)? else {
            return Ok(false);
        };
        self.dispatched += 1;
        if let EventKind::TimerFire(id) = ev.kind {
            match self.timers.remove(&id) {
                Some(TimerAction::Stall(d)) => {
                    debug!("consumer stall of {d:?} at {}", ev.due);
                    self.sched.clock_mut().stall(d)?;
                }
                None => debug!("timer {id} has no action"),
            }
            return Ok(true);
        }
        let mut out = Vec::new();
        self.net
            .dispatch(self.sched.kernel_mut(), ev, &mut |sink, p| out.push((sink, p)))?;
        if !out.is_empty() {
            let now = self.sched.clock().now();
            for (sink, packet) in out {
                let result = match self.sinks.get_mut(sink.0) {
                    Some(s) => s.emit(&packet, now),
                    None => Err(std::io::Error::other("no sink bound")),
                };
                if let Err(e) = result {
                    self.emit_errors += 1;
                    warn!("emit on external interface {}: {e}", sink.0);
                }
            }
        }
        Ok(true)
    }

    /// Runs until the wall clock reaches `limit`; returns dispatched events.
    pub fn run_until_wall(&mut self, limit: WallTime) -> Result<u64, EmuError> {
        let start = self.dispatched;
        while self.step_before(limit)? {}
        Ok(self.dispatched - start)
    }
}
