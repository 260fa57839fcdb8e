//! TOML run configuration.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{ClockChoice, EmulationSetup, LossParams, PingParams, Stall};
use crate::capture::{CaptureMode, DEFAULT_BUF_CAP, DEFAULT_HANDOFF_CAPACITY, DEFAULT_T_BATCH};
use crate::frame::HEADER_LEN;
use crate::netmodel::{build_topology, TopologyDef, PRESET_LOCAL_HOST};
use crate::sched::{PolicyVariant, SchedulerPolicy, DEFAULT_MAX_POLL};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    Corrected,
    FixedTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Immediate,
    Batched,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ClockName {
    Real,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchedulerConfig {
    pub policy: PolicyName,
    #[serde(with = "humantime_serde")]
    pub max_poll: Duration,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            policy: PolicyName::Corrected,
            max_poll: DEFAULT_MAX_POLL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CaptureConfig {
    pub mode: ModeName,
    #[serde(with = "humantime_serde")]
    pub t_batch: Duration,
    pub buf_cap: usize,
    pub handoff_capacity: usize,
}

impl Default for CaptureConfig {
    fn default() -> Self {
        Self {
            mode: ModeName::Immediate,
            t_batch: DEFAULT_T_BATCH,
            buf_cap: DEFAULT_BUF_CAP,
            handoff_capacity: DEFAULT_HANDOFF_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClockConfig {
    pub kind: ClockName,
    /// Arrival script for test-clock emulation: `offset_ns,size` per line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
}

impl Default for ClockConfig {
    fn default() -> Self {
        Self {
            kind: ClockName::Real,
            script: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub count: u64,
    #[serde(with = "humantime_serde")]
    pub interval: Duration,
    #[serde(with = "humantime_serde")]
    pub timeout: Duration,
    pub size: usize,
    #[serde(with = "humantime_serde")]
    pub phase_jitter: Duration,
    pub seed: u64,
    /// Offered load for the loss benchmark, packets per second.
    pub rate: u64,
    #[serde(with = "humantime_serde")]
    pub duration: Duration,
    #[serde(with = "humantime_serde")]
    pub drain: Duration,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stalls: Vec<Stall>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            count: 100,
            interval: Duration::from_millis(50),
            timeout: Duration::from_secs(1),
            size: 64,
            phase_jitter: Duration::ZERO,
            seed: 1,
            rate: 1000,
            duration: Duration::from_secs(5),
            drain: Duration::from_millis(200),
            stalls: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmulateConfig {
    #[serde(with = "humantime_serde")]
    pub duration: Duration,
    /// One bind address per external interface, in declaration order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bind: Vec<SocketAddr>,
    /// Fixed reply destination for the first external interface.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peer: Option<SocketAddr>,
}

impl Default for EmulateConfig {
    fn default() -> Self {
        Self {
            duration: Duration::from_secs(10),
            bind: Vec::new(),
            peer: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub topology: TopologyDef,
    pub scheduler: SchedulerConfig,
    pub capture: CaptureConfig,
    pub clock: ClockConfig,
    pub bench: BenchConfig,
    pub emulate: EmulateConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            topology: TopologyDef {
                preset: Some(PRESET_LOCAL_HOST.into()),
                ..Default::default()
            },
            scheduler: SchedulerConfig::default(),
            capture: CaptureConfig::default(),
            clock: ClockConfig::default(),
            bench: BenchConfig::default(),
            emulate: EmulateConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl RunConfig {
    /// Parses without validating.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax {
            line: e.span().map(|s| line_of(text, s.start)).unwrap_or(1),
            message: e.message().to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::parse(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// Reports every violation at once.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut v = Vec::new();
        if let Err(e) = build_topology(&self.topology) {
            v.extend(e.violations.into_iter().map(|m| format!("topology: {m}")));
        }
        if self.scheduler.max_poll.is_zero() {
            v.push("scheduler.max_poll must be positive".into());
        }
        if self.capture.t_batch.is_zero() {
            v.push("capture.t_batch must be positive".into());
        }
        if self.capture.buf_cap == 0 {
            v.push("capture.buf_cap must be positive".into());
        }
        if self.capture.handoff_capacity == 0 {
            v.push("capture.handoff_capacity must be positive".into());
        }
        let b = &self.bench;
        if b.count == 0 {
            v.push("bench.count must be positive".into());
        }
        if b.interval.is_zero() {
            v.push("bench.interval must be positive".into());
        }
        if b.size < HEADER_LEN {
            v.push(format!("bench.size must be at least {HEADER_LEN}"));
        }
        if b.rate == 0 {
            v.push("bench.rate must be positive".into());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    pub fn policy(&self) -> SchedulerPolicy {
        let variant = match self.scheduler.policy {
            PolicyName::Corrected => PolicyVariant::Corrected,
            PolicyName::FixedTimeout => PolicyVariant::FixedTimeout,
        };
        SchedulerPolicy {
            variant,
            max_poll: self.scheduler.max_poll,
        }
    }

    pub fn capture_mode(&self) -> CaptureMode {
        match self.capture.mode {
            ModeName::Immediate => CaptureMode::Immediate,
            ModeName::Batched => CaptureMode::Batched {
                t_batch: self.capture.t_batch,
                buf_cap: self.capture.buf_cap,
            },
        }
    }

    pub fn clock_choice(&self) -> ClockChoice {
        match self.clock.kind {
            ClockName::Real => ClockChoice::Real,
            ClockName::Test => ClockChoice::Test,
        }
    }

    pub fn setup(&self) -> Result<EmulationSetup, ConfigError> {
        let topology = build_topology(&self.topology).map_err(|e| ConfigError::Invalid(e.violations))?;
        let mut s = EmulationSetup::new(topology, self.policy(), self.capture_mode())
            .with_handoff_capacity(self.capture.handoff_capacity);
        s.probe_size = self.bench.size;
        Ok(s)
    }

    pub fn ping_params(&self) -> PingParams {
        let b = &self.bench;
        PingParams {
            count: b.count,
            interval: b.interval,
            timeout: b.timeout,
            size: b.size,
            phase_jitter: b.phase_jitter,
            seed: b.seed,
        }
    }

    pub fn loss_params(&self) -> LossParams {
        let b = &self.bench;
        LossParams {
            rate_pps: b.rate,
            size: b.size,
            duration: b.duration,
            stalls: b.stalls.clone(),
            drain: b.drain,
        }
    }
}
