//! Packet capture: delivery modes, the handoff queue and capture backends.
//!
//! A [`CaptureSource`] takes raw datagrams from a backend and hands them to the
//! scheduler through a shared [`HandoffQueue`]. In [`CaptureMode::Immediate`]
//! every packet goes straight to the queue. In [`CaptureMode::Batched`] packets
//! collect in a buffer that is flushed when the batch timer ticks or the
//! buffer reaches `buf_cap` bytes, whichever comes first.
//!
//! The batch timer is free-running: ticks fall at `opened_at + k * t_batch`,
//! so a lone packet waits for the next tick, between 0 and `t_batch`.

mod handoff;
mod socket;
mod synthetic;

use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::netmodel::ExtId;
use crate::time::{nanos, WallTime};

pub use handoff::HandoffQueue;
pub use socket::{open_socket_source, SocketSource};
pub use synthetic::{open_synthetic_source, SyntheticSource};

pub const DEFAULT_HANDOFF_CAPACITY: usize = 256;
pub const DEFAULT_BUF_CAP: usize = 64 * 1024;
pub const DEFAULT_T_BATCH: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub payload: Vec<u8>,
    pub capture_ts: WallTime,
    pub source_seq: u64,
    /// External interface the packet was captured on.
    pub iface: ExtId,
    pub src: String,
    pub dst: String,
}

impl Packet {
    pub fn captured(payload: Vec<u8>, capture_ts: WallTime, source_seq: u64, iface: ExtId) -> Self {
        Self {
            payload,
            capture_ts,
            source_seq,
            iface,
            src: String::new(),
            dst: String::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.payload.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptureMode {
    Immediate,
    Batched { t_batch: Duration, buf_cap: usize },
}

impl CaptureMode {
    pub fn batched(t_batch: Duration, buf_cap: usize) -> Result<Self, CaptureError> {
        if t_batch.is_zero() {
            return Err(CaptureError::InvalidMode("t_batch must be positive"));
        }
        if buf_cap == 0 {
            return Err(CaptureError::InvalidMode("buf_cap must be positive"));
        }
        Ok(CaptureMode::Batched { t_batch, buf_cap })
    }

    pub fn default_batched() -> Self {
        CaptureMode::Batched {
            t_batch: DEFAULT_T_BATCH,
            buf_cap: DEFAULT_BUF_CAP,
        }
    }
}

#[derive(Debug, Error)]
pub enum CaptureError {
    #[error("capture source is closed")]
    Closed,
    #[error("invalid capture mode: {0}")]
    InvalidMode(&'static str),
    #[error("script entry {index} at {at} precedes the previous entry")]
    NonMonotoneScript { index: usize, at: WallTime },
    #[error("cannot bind capture socket on {addr}: {source}")]
    Bind {
        addr: std::net::SocketAddr,
        source: std::io::Error,
    },
    #[error("capture socket: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct CaptureStats {
    pub offered: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub buffered: u64,
    pub batches_flushed: u64,
}

impl CaptureStats {
    pub fn is_conserved(&self) -> bool {
        self.offered == self.delivered + self.dropped + self.buffered
    }

    pub fn merge(&self, other: &CaptureStats) -> CaptureStats {
        CaptureStats {
            offered: self.offered + other.offered,
            delivered: self.delivered + other.delivered,
            dropped: self.dropped + other.dropped,
            buffered: self.buffered + other.buffered,
            batches_flushed: self.batches_flushed + other.batches_flushed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRate {
    pub rate: f64,
    pub empty: bool,
}

pub fn capture_loss_rate(stats: &CaptureStats) -> LossRate {
    let seen = stats.delivered + stats.dropped;
    if seen == 0 {
        return LossRate {
            rate: 0.0,
            empty: true,
        };
    }
    LossRate {
        rate: stats.dropped as f64 / seen as f64,
        empty: false,
    }
}

/// True when a batch must be handed over: the buffer is full or the batch
/// timer has run for `t_batch` since the current window opened.
pub fn batch_flush_due(
    buffered_bytes: usize,
    buf_cap: usize,
    batch_age: Duration,
    t_batch: Duration,
) -> bool {
    buffered_bytes >= buf_cap || batch_age >= t_batch
}

pub struct CaptureSource {
    iface: ExtId,
    mode: CaptureMode,
    handoff: Arc<HandoffQueue>,
    opened_at: WallTime,
    window_start: WallTime,
    batch: Vec<Packet>,
    batch_bytes: usize,
    next_seq: u64,
    stats: CaptureStats,
    open: bool,
}

impl CaptureSource {
    pub fn new(
        iface: ExtId,
        mode: CaptureMode,
        handoff: Arc<HandoffQueue>,
        opened_at: WallTime,
    ) -> Self {
        Self {
            iface,
            mode,
            handoff,
            opened_at,
            window_start: opened_at,
            batch: Vec::new(),
            batch_bytes: 0,
            next_seq: 0,
            stats: CaptureStats::default(),
            open: true,
        }
    }

    pub fn iface(&self) -> ExtId {
        self.iface
    }

    pub fn mode(&self) -> CaptureMode {
        self.mode
    }

    pub fn handoff(&self) -> &Arc<HandoffQueue> {
        &self.handoff
    }

    pub fn stats(&self) -> CaptureStats {
        CaptureStats {
            buffered: self.batch.len() as u64,
            ..self.stats
        }
    }

    pub fn is_open(&self) -> bool {
        self.open
    }

    pub fn close(&mut self) {
        self.open = false;
    }

    pub fn on_packet(&mut self, raw: Vec<u8>, ts: WallTime) -> Result<(), CaptureError> {
        if !self.open {
            return Err(CaptureError::Closed);
        }
        self.on_timer(ts);
        let packet = Packet::captured(raw, ts, self.next_seq, self.iface);
        self.next_seq += 1;
        self.stats.offered += 1;
        match self.mode {
            CaptureMode::Immediate => self.hand_off(packet),
            CaptureMode::Batched { t_batch, buf_cap } => {
                self.batch_bytes += packet.size();
                self.batch.push(packet);
                let age = ts.saturating_since(self.window_start);
                if batch_flush_due(self.batch_bytes, buf_cap, age, t_batch) {
                    self.flush();
                }
            }
        }
        Ok(())
    }

    /// Advances the batch timer to `now`, flushing the pending batch if a
    /// tick has passed.
    pub fn on_timer(&mut self, now: WallTime) {
        let CaptureMode::Batched { t_batch, buf_cap } = self.mode else {
            return;
        };
        let age = now.saturating_since(self.window_start);
        if age < t_batch {
            return;
        }
        if !self.batch.is_empty() && batch_flush_due(self.batch_bytes, buf_cap, age, t_batch) {
            self.flush();
        }
        let period = nanos(t_batch);
        let elapsed = now.0.saturating_sub(self.opened_at.0);
        self.window_start = WallTime(self.opened_at.0 + elapsed / period * period);
    }

    /// Next instant at which the timer will flush a pending batch.
    pub fn next_deadline(&self) -> Option<WallTime> {
        match self.mode {
            CaptureMode::Batched { t_batch, .. } if !self.batch.is_empty() => {
                Some(self.window_start + t_batch)
            }
            _ => None,
        }
    }

    fn flush(&mut self) {
        self.stats.batches_flushed += 1;
        self.batch_bytes = 0;
        for packet in std::mem::take(&mut self.batch) {
            self.hand_off(packet);
        }
    }

    fn hand_off(&mut self, packet: Packet) {
        if self.handoff.push(packet) {
            self.stats.delivered += 1;
        } else {
            self.stats.dropped += 1;
        }
    }
}
