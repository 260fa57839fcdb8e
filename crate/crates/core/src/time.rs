//! Simulation and wall-clock timestamps.
//!
//! Both clocks count integer nanoseconds. Simulation time starts at the run's
//! epoch; wall time comes from a monotone source (a real [`Instant`] or the
//! virtual test clock).

use std::fmt;
use std::ops::{Add, AddAssign};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Nanoseconds since the simulation epoch.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct SimTime(pub u64);

/// Nanoseconds on a monotone wall clock.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct WallTime(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("wall time {wall} ns precedes the simulation epoch {epoch} ns")]
pub struct BeforeEpoch {
    pub epoch: u64,
    pub wall: u64,
}

pub(crate) fn nanos(d: Duration) -> u64 {
    u64::try_from(d.as_nanos()).unwrap_or(u64::MAX)
}

macro_rules! timestamp_ops {
    ($t:ident) => {
        impl $t {
            pub const ZERO: $t = $t(0);

            pub fn from_nanos(ns: u64) -> Self {
                $t(ns)
            }

            pub fn from_millis(ms: u64) -> Self {
                $t(ms * 1_000_000)
            }

            pub fn as_nanos(self) -> u64 {
                self.0
            }

            /// Elapsed time from `earlier` to `self`, or `None` if `earlier` is later.
            pub fn checked_since(self, earlier: $t) -> Option<Duration> {
                self.0.checked_sub(earlier.0).map(Duration::from_nanos)
            }

            pub fn saturating_since(self, earlier: $t) -> Duration {
                Duration::from_nanos(self.0.saturating_sub(earlier.0))
            }
        }

        impl Add<Duration> for $t {
            type Output = $t;
            fn add(self, rhs: Duration) -> $t {
                $t(self.0.saturating_add(nanos(rhs)))
            }
        }

        impl AddAssign<Duration> for $t {
            fn add_assign(&mut self, rhs: Duration) {
                *self = *self + rhs;
            }
        }

        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}ns", self.0)
            }
        }
    };
}

timestamp_ops!(SimTime);
timestamp_ops!(WallTime);

/// Maps a wall-clock reading onto simulation time.
pub fn wall_to_sim(epoch: WallTime, w: WallTime) -> Result<SimTime, BeforeEpoch> {
    w.0.checked_sub(epoch.0).map(SimTime).ok_or(BeforeEpoch {
        epoch: epoch.0,
        wall: w.0,
    })
}

pub fn sim_to_wall(epoch: WallTime, s: SimTime) -> WallTime {
    WallTime(epoch.0.saturating_add(s.0))
}

/// Shared origin for real wall-clock readings.
///
/// Every thread that stamps packets or measures RTTs must read time through
/// the same origin so their timestamps are comparable.
#[derive(Debug, Clone, Copy)]
pub struct WallClock {
    origin: Instant,
}

impl WallClock {
    pub fn new() -> Self {
        Self {
            origin: Instant::now(),
        }
    }

    pub fn now(&self) -> WallTime {
        WallTime(nanos(self.origin.elapsed()))
    }

    /// Converts a reading back into an [`Instant`] for sleeping until it.
    pub fn instant_at(&self, w: WallTime) -> Instant {
        self.origin + Duration::from_nanos(w.0)
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}
