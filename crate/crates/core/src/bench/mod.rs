//! Experiment drivers: ping RTT measurement and capture-loss measurement,
//! on either the deterministic test clock or the real clock over UDP.

pub mod loss;
pub mod ping;
pub mod real;
pub mod report;
pub mod stats;

use std::sync::Arc;

use thiserror::Error;

use crate::capture::{
    open_synthetic_source, CaptureError, CaptureMode, HandoffQueue, DEFAULT_HANDOFF_CAPACITY,
};
use crate::emulator::{EmuError, Emulator};
use crate::netmodel::{
    build_topology, EmissionSink, ExtId, Network, RecordingSink, Topology, TopologyDef,
    TopologyError,
};
use crate::sched::{ClockError, Scheduler, SchedulerPolicy, TestClock};
use crate::time::WallTime;

pub use loss::{run_loss_test, LossParams, LossReport, Stall};
pub use ping::{match_replies, run_ping, PingOutcome, PingParams, RttSample};
pub use stats::{boxplot_stats, quantile, BoxplotStats, StatsError};

/// Wall time at which test-clock runs start.
pub const TEST_CLOCK_START: WallTime = WallTime(1_000_000_000);

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Capture(#[from] CaptureError),
    #[error(transparent)]
    Emulation(#[from] EmuError),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} thread panicked")]
    Panicked(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClockChoice {
    Test,
    Real,
}

/// Everything needed to stand up one emulation run.
#[derive(Debug, Clone)]
pub struct EmulationSetup {
    pub topology: Topology,
    pub policy: SchedulerPolicy,
    pub mode: CaptureMode,
    pub handoff_capacity: usize,
    pub probe_size: usize,
}

impl EmulationSetup {
    pub fn new(topology: Topology, policy: SchedulerPolicy, mode: CaptureMode) -> Self {
        Self {
            topology,
            policy,
            mode,
            handoff_capacity: DEFAULT_HANDOFF_CAPACITY,
            probe_size: 64,
        }
    }

    pub fn preset(name: &str, policy: SchedulerPolicy, mode: CaptureMode) -> Result<Self, BenchError> {
        let topology = build_topology(&TopologyDef {
            preset: Some(name.into()),
            ..Default::default()
        })?;
        Ok(Self::new(topology, policy, mode))
    }

    pub fn with_handoff_capacity(mut self, capacity: usize) -> Self {
        self.handoff_capacity = capacity;
        self
    }

    pub fn with_mode(mut self, mode: CaptureMode) -> Self {
        self.mode = mode;
        self
    }

    /// Builds a test-clock emulator with one scripted source per external
    /// interface, all in this setup's capture mode, and a recording sink
    /// shared by every interface.
    pub fn test_emulator(
        &self,
        scripts: Vec<Vec<(WallTime, Vec<u8>)>>,
        start: WallTime,
    ) -> Result<(Emulator<TestClock>, RecordingSink), BenchError> {
        let modes = vec![self.mode; scripts.len()];
        self.test_emulator_with_modes(scripts, &modes, start)
    }

    pub fn test_emulator_with_modes(
        &self,
        scripts: Vec<Vec<(WallTime, Vec<u8>)>>,
        modes: &[CaptureMode],
        start: WallTime,
    ) -> Result<(Emulator<TestClock>, RecordingSink), BenchError> {
        if scripts.len() > self.topology.externals.len() || modes.len() != scripts.len() {
            return Err(BenchError::Params(format!(
                "{} scripts for {} external interfaces",
                scripts.len(),
                self.topology.externals.len()
            )));
        }
        let handoff = Arc::new(HandoffQueue::new(self.handoff_capacity));
        let sources = scripts
            .into_iter()
            .zip(modes)
            .enumerate()
            .map(|(i, (script, mode))| {
                open_synthetic_source(script, ExtId(i), *mode, handoff.clone(), start)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let clock = TestClock::new(start, sources, handoff.clone())?;
        let sched = Scheduler::new(clock, self.policy, handoff, self.topology.ingress_nodes());
        let net = Network::new(self.topology.clone()).with_probe_size(self.probe_size);
        let sink = RecordingSink::new();
        let sinks = (0..self.topology.externals.len())
            .map(|_| Box::new(sink.clone()) as Box<dyn EmissionSink>)
            .collect();
        Ok((Emulator::new(sched, net, sinks), sink))
    }
}
