//! Real-clock emulation over UDP sockets.

use std::net::SocketAddr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use super::{BenchError, EmulationSetup};
use crate::capture::{open_socket_source, CaptureStats, HandoffQueue, SocketSource};
use crate::emulator::{EmuError, Emulator};
use crate::netmodel::{EmissionSink, ExtId, NetStats, Network, SinkTarget, UdpSink};
use crate::sched::{lateness_summary, LatenessSummary, RealClock, Scheduler};
use crate::time::{SimTime, WallClock, WallTime};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RealRunSummary {
    pub dispatched: u64,
    pub injected: u64,
    pub emit_errors: u64,
    pub lateness: LatenessSummary,
    pub net: NetStats,
}

/// A scheduler loop running on its own thread, fed by one UDP capture socket
/// per external interface.
pub struct RealEmulation {
    sources: Vec<SocketSource>,
    worker: JoinHandle<Result<RealRunSummary, EmuError>>,
}

/// Binds every external interface, then runs the scheduler until the wall
/// clock reaches `until`. Interfaces without an entry in `binds` get an
/// ephemeral loopback port. Replies go to the last sender seen on each
/// interface unless `peers` names a fixed address.
pub fn start_real(
    setup: &EmulationSetup,
    binds: &[SocketAddr],
    peers: &[Option<SocketAddr>],
    clock: WallClock,
    until: WallTime,
    stalls: &[(Duration, Duration)],
) -> Result<RealEmulation, BenchError> {
    let handoff = Arc::new(HandoffQueue::new(setup.handoff_capacity));
    let loopback: SocketAddr = "127.0.0.1:0".parse().expect("static address");
    let mut sources = Vec::new();
    let mut sinks: Vec<Box<dyn EmissionSink>> = Vec::new();
    for i in 0..setup.topology.externals.len() {
        let bind = binds.get(i).copied().unwrap_or(loopback);
        let src = open_socket_source(bind, ExtId(i), setup.mode, handoff.clone(), clock)?;
        let target = match peers.get(i).copied().flatten() {
            Some(a) => SinkTarget::Fixed(a),
            None => SinkTarget::LastPeer(src.peer()),
        };
        sinks.push(Box::new(UdpSink::new(src.socket()?, target)));
        sources.push(src);
    }

    let policy = setup.policy;
    let ingress = setup.topology.ingress_nodes();
    let net = Network::new(setup.topology.clone()).with_probe_size(setup.probe_size);
    let stalls = stalls.to_vec();
    let worker = std::thread::Builder::new()
        .name("scheduler".into())
        .spawn(move || {
            let sched = Scheduler::new(RealClock::new(clock, handoff.clone()), policy, handoff, ingress);
            let mut emu = Emulator::new(sched, net, sinks);
            for (at, length) in stalls {
                emu.add_stall(SimTime(crate::time::nanos(at)), length)?;
            }
            emu.run_until_wall(until)?;
            Ok(RealRunSummary {
                dispatched: emu.dispatched(),
                injected: emu.scheduler().injected(),
                emit_errors: emu.emit_errors(),
                lateness: lateness_summary(emu.scheduler().lateness()),
                net: emu.net_stats(),
            })
        })?;
    Ok(RealEmulation { sources, worker })
}

impl RealEmulation {
    pub fn addr(&self, iface: usize) -> SocketAddr {
        self.sources[iface].local_addr()
    }

    pub fn join(mut self) -> Result<(RealRunSummary, Vec<CaptureStats>), BenchError> {
        let summary = self
            .worker
            .join()
            .map_err(|_| BenchError::Panicked("scheduler"))??;
        let stats = self.sources.iter_mut().map(|s| s.close()).collect();
        Ok((summary, stats))
    }
}

pub(crate) fn sleep_until(clock: &WallClock, t: WallTime) {
    let now = clock.now();
    if t > now {
        std::thread::sleep(t.saturating_since(now));
    }
}
