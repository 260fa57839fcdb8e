use std::collections::BTreeMap;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::real::{sleep_until, start_real};
use super::{BenchError, ClockChoice, EmulationSetup, TEST_CLOCK_START};
use crate::capture::CaptureStats;
use crate::frame::{ProbeHeader, HEADER_LEN};
use crate::netmodel::NetStats;
use crate::sched::{lateness_summary, LatenessSummary};
use crate::time::{WallClock, WallTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RttSample {
    pub seq: u64,
    pub send_wall: WallTime,
    pub recv_wall: WallTime,
}

impl RttSample {
    pub fn rtt(&self) -> Duration {
        self.recv_wall.saturating_since(self.send_wall)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PingParams {
    pub count: u64,
    pub interval: Duration,
    pub timeout: Duration,
    /// Datagram size including the 16-byte probe header.
    pub size: usize,
    /// Each send is delayed by a uniform random offset in `[0, phase_jitter)`.
    pub phase_jitter: Duration,
    pub seed: u64,
}

impl Default for PingParams {
    fn default() -> Self {
        Self {
            count: 10,
            interval: Duration::from_millis(50),
            timeout: Duration::from_secs(1),
            size: 64,
            phase_jitter: Duration::ZERO,
            seed: 1,
        }
    }
}

impl PingParams {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.count == 0 {
            return Err(BenchError::Params("count must be positive".into()));
        }
        if self.interval.is_zero() {
            return Err(BenchError::Params("interval must be positive".into()));
        }
        if self.size < HEADER_LEN {
            return Err(BenchError::Params(format!("probe size must be at least {HEADER_LEN} bytes")));
        }
        Ok(())
    }

    /// Send instants relative to the start of the run.
    pub fn send_offsets(&self) -> Vec<Duration> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let jitter = crate::time::nanos(self.phase_jitter);
        (0..self.count)
            .map(|i| {
                let j = if jitter > 0 { rng.random_range(0..jitter) } else { 0 };
                self.interval * i as u32 + Duration::from_nanos(j)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PingOutcome {
    pub samples: Vec<RttSample>,
    pub sent: u64,
    pub lost: u64,
    pub duplicates: u64,
    /// Replies that were not framed or carried a sequence number never sent.
    pub unmatched: u64,
    pub lateness: LatenessSummary,
    pub capture: CaptureStats,
    pub net: NetStats,
}

impl PingOutcome {
    pub fn rtts_ns(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.rtt().as_nanos() as f64).collect()
    }
}

/// Pairs replies with sent probes by sequence number. The first reply for a
/// sequence number within `timeout` wins; later ones count as duplicates.
pub fn match_replies<'a>(
    sent: &[(u64, WallTime)],
    replies: impl IntoIterator<Item = (WallTime, &'a [u8])>,
    timeout: Duration,
) -> PingOutcome {
    let sent_at: BTreeMap<u64, WallTime> = sent.iter().copied().collect();
    let mut matched: BTreeMap<u64, RttSample> = BTreeMap::new();
    let mut duplicates = 0;
    let mut unmatched = 0;
    for (recv, payload) in replies {
        let Ok(h) = ProbeHeader::decode(payload) else {
            unmatched += 1;
            continue;
        };
        let Some(&send) = sent_at.get(&h.seq) else {
            unmatched += 1;
            continue;
        };
        if matched.contains_key(&h.seq) {
            duplicates += 1;
            continue;
        }
        if recv < send || recv.saturating_since(send) > timeout {
            // arrived after the prober gave up on it
            continue;
        }
        matched.insert(
            h.seq,
            RttSample {
                seq: h.seq,
                send_wall: send,
                recv_wall: recv,
            },
        );
    }
    let samples: Vec<_> = matched.into_values().collect();
    PingOutcome {
        sent: sent.len() as u64,
        lost: sent.len() as u64 - samples.len() as u64,
        samples,
        duplicates,
        unmatched,
        lateness: LatenessSummary::default(),
        capture: CaptureStats::default(),
        net: NetStats::default(),
    }
}

pub fn run_ping(
    setup: &EmulationSetup,
    params: &PingParams,
    clock: ClockChoice,
    bind: Option<SocketAddr>,
) -> Result<PingOutcome, BenchError> {
    match clock {
        ClockChoice::Test => run_ping_test_clock(setup, params),
        ClockChoice::Real => run_ping_real(setup, params, bind),
    }
}

/// Probes are scripted arrivals on external interface 0; replies are read
/// back from the recording sink.
pub fn run_ping_test_clock(setup: &EmulationSetup, params: &PingParams) -> Result<PingOutcome, BenchError> {
    params.validate()?;
    let start = TEST_CLOCK_START;
    let sent: Vec<(u64, WallTime)> = params
        .send_offsets()
        .into_iter()
        .enumerate()
        .map(|(i, off)| (i as u64, start + off))
        .collect();
    let script = sent
        .iter()
        .map(|&(seq, at)| (at, ProbeHeader { seq, sent_ns: at.0 }.encode(params.size)))
        .collect();
    let (mut emu, sink) = setup.test_emulator(vec![script], start)?;
    let last = sent.last().map(|s| s.1).unwrap_or(start);
    emu.run_until_wall(last + params.timeout)?;

    let emissions = sink.emissions();
    let mut outcome = match_replies(
        &sent,
        emissions.iter().map(|e| (e.at, e.packet.payload.as_slice())),
        params.timeout,
    );
    outcome.lateness = lateness_summary(emu.scheduler().lateness());
    outcome.capture = emu.scheduler().clock().sources()[0].stats();
    outcome.net = emu.net_stats();
    Ok(outcome)
}

/// Sends probes over UDP to a real-clock emulation bound on loopback (or
/// `bind`) and measures RTTs on the prober's clock.
pub fn run_ping_real(
    setup: &EmulationSetup,
    params: &PingParams,
    bind: Option<SocketAddr>,
) -> Result<PingOutcome, BenchError> {
    params.validate()?;
    let clock = WallClock::new();
    let offsets = params.send_offsets();
    let start = clock.now() + Duration::from_millis(50);
    let last = start + *offsets.last().expect("count > 0");
    let until = last + params.timeout + Duration::from_millis(20);

    let binds: Vec<SocketAddr> = bind.into_iter().collect();
    let emu = start_real(setup, &binds, &[], clock, until, &[])?;
    let mut target = emu.addr(0);
    if target.ip().is_unspecified() {
        target.set_ip(std::net::Ipv4Addr::LOCALHOST.into());
    }

    let prober = UdpSocket::bind(if target.is_ipv4() { "127.0.0.1:0" } else { "[::1]:0" })?;
    prober.set_read_timeout(Some(Duration::from_millis(10)))?;
    let stop = Arc::new(AtomicBool::new(false));
    let receiver = {
        let sock = prober.try_clone()?;
        let stop = stop.clone();
        std::thread::Builder::new()
            .name("prober-rx".into())
            .spawn(move || {
                let mut got = Vec::new();
                let mut buf = vec![0u8; 65_536];
                while !stop.load(Ordering::Relaxed) {
                    if let Ok((n, _)) = sock.recv_from(&mut buf) {
                        got.push((clock.now(), buf[..n].to_vec()));
                    }
                }
                got
            })?
    };

    let mut sent = Vec::with_capacity(offsets.len());
    let mut payload = vec![0u8; params.size];
    for (seq, off) in offsets.iter().enumerate() {
        sleep_until(&clock, start + *off);
        let ts = clock.now();
        ProbeHeader { seq: seq as u64, sent_ns: ts.0 }.write(&mut payload);
        prober.send_to(&payload, target)?;
        sent.push((seq as u64, ts));
    }
    sleep_until(&clock, last + params.timeout);
    stop.store(true, Ordering::Relaxed);
    let replies = receiver.join().map_err(|_| BenchError::Panicked("prober"))?;
    let (summary, capture) = emu.join()?;

    let mut outcome = match_replies(
        &sent,
        replies.iter().map(|(t, b)| (*t, b.as_slice())),
        params.timeout,
    );
    outcome.lateness = summary.lateness;
    outcome.capture = capture[0];
    outcome.net = summary.net;
    Ok(outcome)
}
