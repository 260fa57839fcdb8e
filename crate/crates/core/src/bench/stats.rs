//! Order statistics for RTT samples.
//!
//! Quantiles interpolate linearly between order statistics at rank
//! `h = (n - 1) q`. Boxplot whiskers are the true minimum and maximum, and the
//! standard deviation is the population one (divide by `n`).

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const QUANTILE_CONVENTION: &str = "linear interpolation at rank (n-1)q";
pub const WHISKER_CONVENTION: &str = "min/max";
pub const STDEV_CONVENTION: &str = "population";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("empty sample set")]
    Empty,
    #[error("quantile {0} outside [0, 1]")]
    OutOfRange(u64),
}

pub fn quantile(sorted: &[f64], q: f64) -> Result<f64, StatsError> {
    if sorted.is_empty() {
        return Err(StatsError::Empty);
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(StatsError::OutOfRange(q.to_bits()));
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxplotStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
    pub stdev: f64,
}

impl BoxplotStats {
    pub fn iqr(&self) -> f64 {
        self.q3 - self.q1
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }
}

pub fn boxplot_stats(samples: &[f64]) -> Result<BoxplotStats, StatsError> {
    if samples.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut v = samples.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let (min, max) = (v[0], v[n - 1]);
    let mean = (v.iter().sum::<f64>() / n as f64).clamp(min, max);
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(BoxplotStats {
        n,
        min,
        q1: quantile(&v, 0.25)?,
        median: quantile(&v, 0.5)?,
        q3: quantile(&v, 0.75)?,
        max,
        mean,
        stdev: var.sqrt(),
    })
}
