use std::collections::VecDeque;
use std::sync::Arc;

use super::{CaptureError, CaptureMode, CaptureSource, CaptureStats, HandoffQueue};
use crate::netmodel::ExtId;
use crate::time::WallTime;

/// Replays a fixed script of `(time, payload)` arrivals.
///
/// Runs inline under the test clock: the clock calls [`advance_to`] as
/// virtual time moves, so every arrival and batch tick happens at exactly
/// its scripted instant.
///
/// [`advance_to`]: SyntheticSource::advance_to
pub struct SyntheticSource {
    script: VecDeque<(WallTime, Vec<u8>)>,
    capture: CaptureSource,
}

pub fn open_synthetic_source(
    script: Vec<(WallTime, Vec<u8>)>,
    iface: ExtId,
    mode: CaptureMode,
    handoff: Arc<HandoffQueue>,
    opened_at: WallTime,
) -> Result<SyntheticSource, CaptureError> {
    let mut prev = opened_at;
    for (index, (at, _)) in script.iter().enumerate() {
        if *at < prev {
            return Err(CaptureError::NonMonotoneScript { index, at: *at });
        }
        prev = *at;
    }
    Ok(SyntheticSource {
        script: script.into(),
        capture: CaptureSource::new(iface, mode, handoff, opened_at),
    })
}

impl SyntheticSource {
    pub fn stats(&self) -> CaptureStats {
        self.capture.stats()
    }

    pub fn capture(&self) -> &CaptureSource {
        &self.capture
    }

    pub fn remaining(&self) -> usize {
        self.script.len()
    }

    /// Earliest instant at which this source will change state.
    pub fn next_wakeup(&self) -> Option<WallTime> {
        let arrival = self.script.front().map(|(t, _)| *t);
        match (arrival, self.capture.next_deadline()) {
            (Some(a), Some(d)) => Some(a.min(d)),
            (a, d) => a.or(d),
        }
    }

    /// Processes every scripted arrival and timer tick at or before `now`, in
    /// time order.
    pub fn advance_to(&mut self, now: WallTime) -> Result<(), CaptureError> {
        while let Some(w) = self.next_wakeup().filter(|w| *w <= now) {
            self.capture.on_timer(w);
            while self.script.front().is_some_and(|(t, _)| *t == w) {
                let (t, payload) = self.script.pop_front().expect("front checked");
                self.capture.on_packet(payload, t)?;
            }
        }
        self.capture.on_timer(now);
        Ok(())
    }
}
