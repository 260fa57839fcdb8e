//! CSV and text renderings of RTT samples and their summary.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ping::RttSample;
use super::stats::{
    boxplot_stats, BoxplotStats, StatsError, QUANTILE_CONVENTION, STDEV_CONVENTION,
    WHISKER_CONVENTION,
};
use crate::time::WallTime;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("row {row}: rtt_ns {rtt} does not equal recv_ns - send_ns")]
    Inconsistent { row: usize, rtt: u64 },
    #[error("toml: {0}")]
    Toml(#[from] toml::ser::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct SampleRow {
    seq: u64,
    send_ns: u64,
    recv_ns: u64,
    rtt_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct SummaryRow {
    n: usize,
    min_ns: f64,
    q1_ns: f64,
    median_ns: f64,
    q3_ns: f64,
    max_ns: f64,
    mean_ns: f64,
    stdev_ns: f64,
}

pub fn write_samples_csv<W: Write>(w: W, samples: &[RttSample]) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    for s in samples {
        out.serialize(SampleRow {
            seq: s.seq,
            send_ns: s.send_wall.0,
            recv_ns: s.recv_wall.0,
            rtt_ns: s.rtt().as_nanos() as u64,
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_samples_csv<R: Read>(r: R) -> Result<Vec<RttSample>, ReportError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<SampleRow>().enumerate() {
        let row = row?;
        if row.recv_ns.checked_sub(row.send_ns) != Some(row.rtt_ns) {
            return Err(ReportError::Inconsistent { row: i + 1, rtt: row.rtt_ns });
        }
        out.push(RttSample {
            seq: row.seq,
            send_wall: WallTime(row.send_ns),
            recv_wall: WallTime(row.recv_ns),
        });
    }
    Ok(out)
}

pub fn rtts_ns(samples: &[RttSample]) -> Vec<f64> {
    samples.iter().map(|s| s.rtt().as_nanos() as f64).collect()
}

pub fn summarize(samples: &[RttSample]) -> Result<BoxplotStats, StatsError> {
    boxplot_stats(&rtts_ns(samples))
}

pub fn write_summary_csv<W: Write>(w: W, s: &BoxplotStats) -> Result<(), ReportError> {
    let mut out = csv::Writer::from_writer(w);
    out.serialize(SummaryRow {
        n: s.n,
        min_ns: s.min,
        q1_ns: s.q1,
        median_ns: s.median,
        q3_ns: s.q3,
        max_ns: s.max,
        mean_ns: s.mean,
        stdev_ns: s.stdev,
    })?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Conventions {
    quantiles: &'static str,
    whiskers: &'static str,
    stdev: &'static str,
}

#[derive(Serialize)]
struct TextReport<'a, C: Serialize> {
    summary: SummaryRow,
    conventions: Conventions,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a C>,
}

/// Human-readable TOML report: the summary in nanoseconds, the statistical
/// conventions used, and optionally the configuration that produced it.
pub fn render_text<C: Serialize>(s: &BoxplotStats, config: Option<&C>) -> Result<String, ReportError> {
    let report = TextReport {
        summary: SummaryRow {
            n: s.n,
            min_ns: s.min,
            q1_ns: s.q1,
            median_ns: s.median,
            q3_ns: s.q3,
            max_ns: s.max,
            mean_ns: s.mean,
            stdev_ns: s.stdev,
        },
        conventions: Conventions {
            quantiles: QUANTILE_CONVENTION,
            whiskers: WHISKER_CONVENTION,
            stdev: STDEV_CONVENTION,
        },
        config,
    };
    Ok(toml::to_string(&report)?)
}
