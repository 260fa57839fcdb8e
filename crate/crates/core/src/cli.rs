//! Command-line front end.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;
use thiserror::Error;

use crate::bench::real::start_real;
use crate::bench::report::{
    read_samples_csv, render_text, summarize, write_samples_csv, write_summary_csv, ReportError,
};
use crate::bench::{run_loss_test, run_ping, BenchError, ClockChoice, LossReport, TEST_CLOCK_START};
use crate::capture::CaptureMode;
use crate::config::{ClockName, ConfigError, ModeName, PolicyName, RunConfig};
use crate::frame::ProbeHeader;
use crate::sched::lateness_summary;
use crate::time::{WallClock, WallTime};

#[derive(Debug, Parser)]
#[command(name = "rtemu", version, about = "Soft real-time network emulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the emulator until the configured duration elapses.
    Emulate {
        #[command(flatten)]
        common: Common,
        /// Run length in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
    /// Benchmarks over the emulator.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Summarize a samples CSV.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
    },
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Round-trip time of framed probes.
    Ping {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<u64>,
        /// Probe interval in milliseconds.
        #[arg(long)]
        interval: Option<f64>,
    },
    /// Capture loss under constant offered load, in both capture modes.
    Loss {
        #[command(flatten)]
        common: Common,
        /// Packets per second.
        #[arg(long)]
        rate: Option<u64>,
        /// Packet size in bytes.
        #[arg(long)]
        size: Option<usize>,
        /// Run length in seconds.
        #[arg(long)]
        duration: Option<f64>,
    },
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration. Defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub policy: Option<PolicyName>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    #[arg(long, value_enum)]
    pub clock: Option<ClockName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Text,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot open {path}: {source}")]
    MissingFile {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error(transparent)]
    Bench(#[from] BenchError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1 for configuration and input problems, 2 for failures during a run.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::MissingFile { .. } | CliError::Argument(_) => 1,
            CliError::Bench(BenchError::Params(_)) | CliError::Bench(BenchError::Topology(_)) => 1,
            _ => 2,
        }
    }
}

fn seconds(s: f64) -> Result<Duration, CliError> {
    Duration::try_from_secs_f64(s).map_err(|e| CliError::Argument(format!("{s}: {e}")))
}

fn load_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = common.policy {
        cfg.scheduler.policy = p;
    }
    if let Some(m) = common.mode {
        cfg.capture.mode = m;
    }
    if let Some(c) = common.clock {
        cfg.clock.kind = c;
    }
    Ok(cfg)
}

fn create(path: &Path) -> Result<File, CliError> {
    Ok(File::create(path)?)
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|source| CliError::MissingFile {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads a test-clock arrival script: one `offset_ns,size` pair per line.
/// Blank lines and lines starting with `#` are ignored.
pub fn read_script(path: &Path) -> Result<Vec<(WallTime, Vec<u8>)>, CliError> {
    let reader = BufReader::new(open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let bad = || CliError::Argument(format!("{}:{}: expected offset_ns,size", path.display(), i + 1));
        let (off, size) = t.split_once(',').ok_or_else(bad)?;
        let off: u64 = off.trim().parse().map_err(|_| bad())?;
        let size: usize = size.trim().parse().map_err(|_| bad())?;
        let at = TEST_CLOCK_START + Duration::from_nanos(off);
        let seq = out.len() as u64;
        out.push((at, ProbeHeader { seq, sent_ns: at.0 }.encode(size)));
    }
    Ok(out)
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.command {
        Command::Emulate { common, duration } => {
            let mut cfg = load_config(&common)?;
            if let Some(d) = duration {
                cfg.emulate.duration = seconds(d)?;
            }
            cfg.validate()?;
            emulate(&cfg, out)
        }
        Command::Bench(BenchCommand::Ping { common, count, interval }) => {
            let mut cfg = load_config(&common)?;
            if let Some(c) = count {
                cfg.bench.count = c;
            }
            if let Some(ms) = interval {
                cfg.bench.interval = seconds(ms / 1000.0)?;
            }
            cfg.validate()?;
            ping(&cfg, out)
        }
        Command::Bench(BenchCommand::Loss { common, rate, size, duration }) => {
            let mut cfg = load_config(&common)?;
            if let Some(r) = rate {
                cfg.bench.rate = r;
            }
            if let Some(s) = size {
                cfg.bench.size = s;
            }
            if let Some(d) = duration {
                cfg.bench.duration = seconds(d)?;
            }
            cfg.validate()?;
            loss(&cfg, out)
        }
        Command::Report { input, format } => {
            let samples = read_samples_csv(open(&input)?)?;
            let s = summarize(&samples).map_err(ReportError::from)?;
            match format {
                ReportFormat::Csv => write_summary_csv(out, &s)?,
                ReportFormat::Text => out.write_all(render_text::<()>(&s, None)?.as_bytes())?,
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct EmulateSummary {
    clock: &'static str,
    dispatched: u64,
    injected: u64,
    emitted: u64,
    routing_dropped: u64,
    malformed_dropped: u64,
    capture_offered: u64,
    capture_dropped: u64,
    lateness_max_ns: u64,
    lateness_p99_ns: u64,
}

fn emulate(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let setup = cfg.setup()?;
    let summary = match cfg.clock_choice() {
        ClockChoice::Test => {
            let path = cfg
                .clock
                .script
                .as_ref()
                .ok_or_else(|| CliError::Argument("test-clock emulation needs clock.script".into()))?;
            let script = read_script(path)?;
            let (mut emu, sink) = setup.test_emulator(vec![script], TEST_CLOCK_START)?;
            emu.run_until_wall(TEST_CLOCK_START + cfg.emulate.duration)
                .map_err(BenchError::from)?;
            let lat = lateness_summary(emu.scheduler().lateness());
            let cap = emu.scheduler().clock().sources()[0].stats();
            let net = emu.net_stats();
            info!("{} emissions recorded", sink.len());
            EmulateSummary {
                clock: "test",
                dispatched: emu.dispatched(),
                injected: emu.scheduler().injected(),
                emitted: net.emitted,
                routing_dropped: net.routing_dropped,
                malformed_dropped: net.malformed_dropped,
                capture_offered: cap.offered,
                capture_dropped: cap.dropped,
                lateness_max_ns: lat.max.as_nanos() as u64,
                lateness_p99_ns: lat.p99.as_nanos() as u64,
            }
        }
        ClockChoice::Real => {
            let clock = WallClock::new();
            let peers = vec![cfg.emulate.peer];
            let emu = start_real(&setup, &cfg.emulate.bind, &peers, clock, clock.now() + cfg.emulate.duration, &[])?;
            for i in 0..setup.topology.externals.len() {
                info!("interface {i} listening on {}", emu.addr(i));
                writeln!(out, "# interface {i} listening on {}", emu.addr(i))?;
            }
            out.flush()?;
            let (s, caps) = emu.join()?;
            let cap = caps.iter().fold(Default::default(), |a: crate::capture::CaptureStats, c| a.merge(c));
            EmulateSummary {
                clock: "real",
                dispatched: s.dispatched,
                injected: s.injected,
                emitted: s.net.emitted,
                routing_dropped: s.net.routing_dropped,
                malformed_dropped: s.net.malformed_dropped,
                capture_offered: cap.offered,
                capture_dropped: cap.dropped,
                lateness_max_ns: s.lateness.max.as_nanos() as u64,
                lateness_p99_ns: s.lateness.p99.as_nanos() as u64,
            }
        }
    };
    let text = toml::to_string(&summary).map_err(ReportError::from)?;
    out.write_all(text.as_bytes())?;
    Ok(())
}

fn ping(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let setup = cfg.setup()?;
    let bind = cfg.emulate.bind.first().copied();
    let outcome = run_ping(&setup, &cfg.ping_params(), cfg.clock_choice(), bind)?;
    info!(
        "sent {} lost {} duplicates {} unmatched {}",
        outcome.sent, outcome.lost, outcome.duplicates, outcome.unmatched
    );
    if let Some(p) = &cfg.output.samples {
        write_samples_csv(create(p)?, &outcome.samples)?;
    }
    let stats = summarize(&outcome.samples).map_err(ReportError::from)?;
    if let Some(p) = &cfg.output.summary {
        write_summary_csv(create(p)?, &stats)?;
    }
    let text = render_text(&stats, Some(cfg))?;
    if let Some(p) = &cfg.output.report {
        create(p)?.write_all(text.as_bytes())?;
    }
    writeln!(out, "# sent {} lost {}", outcome.sent, outcome.lost)?;
    out.write_all(text.as_bytes())?;
    Ok(())
}

#[derive(Serialize)]
struct LossRuns {
    run: Vec<LossReport>,
}

fn loss(cfg: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let setup = cfg.setup()?;
    let params = cfg.loss_params();
    let bind = cfg.emulate.bind.first().copied();
    let batched = CaptureMode::Batched {
        t_batch: cfg.capture.t_batch,
        buf_cap: cfg.capture.buf_cap,
    };
    let mut runs = Vec::new();
    for mode in [CaptureMode::Immediate, batched] {
        let s = setup.clone().with_mode(mode);
        runs.push(run_loss_test(&s, &params, cfg.clock_choice(), bind)?);
    }
    let text = toml::to_string(&LossRuns { run: runs }).map_err(ReportError::from)?;
    out.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subcommands() {
        let c = Cli::try_parse_from(["rtemu", "bench", "ping", "--count", "5", "--interval", "20", "--clock", "test"]).unwrap();
        assert!(matches!(c.command, Command::Bench(BenchCommand::Ping { count: Some(5), .. })));
        let c = Cli::try_parse_from(["rtemu", "report", "--input", "x.csv", "--format", "csv"]).unwrap();
        assert!(matches!(c.command, Command::Report { format: ReportFormat::Csv, .. }));
        assert!(Cli::try_parse_from(["rtemu", "bench", "ping", "--policy", "bogus"]).is_err());
    }

    #[test]
    fn missing_config_is_exit_1() {
        let c = Cli::try_parse_from(["rtemu", "emulate", "--config", "/nonexistent/rtemu.toml"]).unwrap();
        let e = run(c, &mut Vec::new()).unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn script_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        std::fs::write(&p, "# offsets\n0,64\n\n5000000,100\n").unwrap();
        let s = read_script(&p).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[1].0, TEST_CLOCK_START + Duration::from_millis(5));
        assert_eq!(s[1].1.len(), 100);
        std::fs::write(&p, "0;64\n").unwrap();
        assert_eq!(read_script(&p).unwrap_err().exit_code(), 1);
    }
}
