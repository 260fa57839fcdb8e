use std::collections::BTreeSet;
use std::net::{SocketAddr, UdpSocket};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::real::{sleep_until, start_real};
use super::{BenchError, ClockChoice, EmulationSetup, TEST_CLOCK_START};
use crate::capture::{capture_loss_rate, CaptureMode, CaptureStats};
use crate::frame::{ProbeHeader, HEADER_LEN};
use crate::netmodel::NetStats;
use crate::time::{nanos, SimTime, WallClock};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stall {
    /// Offset from the start of the run.
    #[serde(with = "humantime_serde")]
    pub at: Duration,
    #[serde(with = "humantime_serde")]
    pub length: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossParams {
    pub rate_pps: u64,
    pub size: usize,
    pub duration: Duration,
    /// Scripted consumer stalls.
    pub stalls: Vec<Stall>,
    /// Extra time after the last packet for in-flight traffic to drain.
    pub drain: Duration,
}

impl LossParams {
    pub fn validate(&self) -> Result<(), BenchError> {
        if self.rate_pps == 0 {
            return Err(BenchError::Params("rate must be positive".into()));
        }
        if self.size < HEADER_LEN {
            return Err(BenchError::Params(format!("packet size must be at least {HEADER_LEN} bytes")));
        }
        Ok(())
    }

    /// Send offsets at a fixed rate over `duration`, computed without
    /// accumulating rounding error.
    pub fn send_offsets(&self) -> Vec<Duration> {
        let total = nanos(self.duration) as u128;
        let rate = self.rate_pps as u128;
        let count = total * rate / 1_000_000_000;
        (0..count)
            .map(|i| Duration::from_nanos((i * 1_000_000_000 / rate) as u64))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossReport {
    pub mode: String,
    pub offered_pps: u64,
    pub packet_size: usize,
    #[serde(with = "humantime_serde")]
    pub duration: Duration,
    pub sent: u64,
    pub echoed: u64,
    pub lost: u64,
    pub loss_rate: f64,
    pub capture_loss_rate: f64,
    pub capture: CaptureStats,
    pub network: NetStats,
}

pub fn mode_label(mode: &CaptureMode) -> String {
    match mode {
        CaptureMode::Immediate => "immediate".into(),
        CaptureMode::Batched { t_batch, buf_cap } => {
            format!("batched(t_batch={t_batch:?}, buf_cap={buf_cap})")
        }
    }
}

fn report(
    setup: &EmulationSetup,
    params: &LossParams,
    sent: u64,
    echoed: u64,
    capture: CaptureStats,
    network: NetStats,
) -> LossReport {
    let lost = sent - echoed;
    LossReport {
        mode: mode_label(&setup.mode),
        offered_pps: params.rate_pps,
        packet_size: params.size,
        duration: params.duration,
        sent,
        echoed,
        lost,
        loss_rate: if sent == 0 { 0.0 } else { lost as f64 / sent as f64 },
        capture_loss_rate: capture_loss_rate(&capture).rate,
        capture,
        network,
    }
}

fn count_echoes<'a>(replies: impl IntoIterator<Item = &'a [u8]>, sent: u64) -> u64 {
    let seqs: BTreeSet<u64> = replies
        .into_iter()
        .filter_map(|b| ProbeHeader::decode(b).ok())
        .map(|h| h.seq)
        .filter(|s| *s < sent)
        .collect();
    seqs.len() as u64
}

pub fn run_loss_test(
    setup: &EmulationSetup,
    params: &LossParams,
    clock: ClockChoice,
    bind: Option<SocketAddr>,
) -> Result<LossReport, BenchError> {
    match clock {
        ClockChoice::Test => run_loss_test_clock(setup, params),
        ClockChoice::Real => run_loss_real(setup, params, bind),
    }
}

pub fn run_loss_test_clock(setup: &EmulationSetup, params: &LossParams) -> Result<LossReport, BenchError> {
    params.validate()?;
    let start = TEST_CLOCK_START;
    let script: Vec<_> = params
        .send_offsets()
        .into_iter()
        .enumerate()
        .map(|(i, off)| {
            let at = start + off;
            (at, ProbeHeader { seq: i as u64, sent_ns: at.0 }.encode(params.size))
        })
        .collect();
    let sent = script.len() as u64;
    let (mut emu, sink) = setup.test_emulator(vec![script], start)?;
    for s in &params.stalls {
        emu.add_stall(SimTime(nanos(s.at)), s.length)
            .map_err(crate::emulator::EmuError::from)?;
    }
    emu.run_until_wall(start + params.duration + params.drain)?;

    let emissions = sink.emissions();
    let echoed = count_echoes(emissions.iter().map(|e| e.packet.payload.as_slice()), sent);
    let capture = emu.scheduler().clock().sources()[0].stats();
    Ok(report(setup, params, sent, echoed, capture, emu.net_stats()))
}

pub fn run_loss_real(
    setup: &EmulationSetup,
    params: &LossParams,
    bind: Option<SocketAddr>,
) -> Result<LossReport, BenchError> {
    params.validate()?;
    let clock = WallClock::new();
    let offsets = params.send_offsets();
    let start = clock.now() + Duration::from_millis(50);
    let until = start + params.duration + params.drain;
    let stalls: Vec<_> = params
        .stalls
        .iter()
        .map(|s| (s.at + Duration::from_millis(50), s.length))
        .collect();
    let binds: Vec<SocketAddr> = bind.into_iter().collect();
    let emu = start_real(setup, &binds, &[], clock, until, &stalls)?;
    let mut target = emu.addr(0);
    if target.ip().is_unspecified() {
        target.set_ip(std::net::Ipv4Addr::LOCALHOST.into());
    }

    let sender = UdpSocket::bind(if target.is_ipv4() { "127.0.0.1:0" } else { "[::1]:0" })?;
    sender.set_read_timeout(Some(Duration::from_millis(10)))?;
    let stop = Arc::new(AtomicBool::new(false));
    let receiver = {
        let sock = sender.try_clone()?;
        let stop = stop.clone();
        std::thread::Builder::new()
            .name("loss-rx".into())
            .spawn(move || {
                let mut got = Vec::new();
                let mut buf = vec![0u8; 65_536];
                while !stop.load(Ordering::Relaxed) {
                    if let Ok((n, _)) = sock.recv_from(&mut buf) {
                        got.push(buf[..n].to_vec());
                    }
                }
                got
            })?
    };

    let mut payload = vec![0u8; params.size];
    for (seq, off) in offsets.iter().enumerate() {
        sleep_until(&clock, start + *off);
        ProbeHeader { seq: seq as u64, sent_ns: clock.now().0 }.write(&mut payload);
        sender.send_to(&payload, target)?;
    }
    sleep_until(&clock, until);
    stop.store(true, Ordering::Relaxed);
    let replies = receiver.join().map_err(|_| BenchError::Panicked("receiver"))?;
    let (summary, capture) = emu.join()?;
    let sent = offsets.len() as u64;
    let echoed = count_echoes(replies.iter().map(Vec::as_slice), sent);
    Ok(report(setup, params, sent, echoed, capture[0], summary.net))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netmodel::PRESET_LOCAL_HOST;
    use crate::sched::SchedulerPolicy;

    #[test]
    fn offsets_follow_rate() {
        let p = LossParams {
            rate_pps: 3,
            size: 100,
            duration: Duration::from_secs(2),
            stalls: vec![],
            drain: Duration::ZERO,
        };
        let o = p.send_offsets();
        assert_eq!(o.len(), 6);
        assert_eq!(o[1], Duration::from_nanos(333_333_333));
        assert_eq!(o[3], Duration::from_secs(1));
    }

    #[test]
    fn low_rate_loses_nothing() {
        let setup = EmulationSetup::preset(PRESET_LOCAL_HOST, SchedulerPolicy::corrected(), CaptureMode::Immediate)
            .unwrap()
            .with_handoff_capacity(4);
        let p = LossParams {
            rate_pps: 125,
            size: 100,
            duration: Duration::from_secs(2),
            stalls: vec![],
            drain: Duration::from_millis(100),
        };
        let r = run_loss_test_clock(&setup, &p).unwrap();
        assert_eq!((r.sent, r.echoed, r.lost), (250, 250, 0));
        assert_eq!(r.capture.dropped, 0);
    }

    #[test]
    fn rejects_bad_params() {
        let p = LossParams {
            rate_pps: 0,
            size: 100,
            duration: Duration::from_secs(1),
            stalls: vec![],
            drain: Duration::ZERO,
        };
        assert!(p.validate().is_err());
        let p = LossParams { rate_pps: 1, size: 8, ..p };
        assert!(p.validate().is_err());
    }
}
