//! `snowframe` command line: builds an engine from a config file and runs it
//! until shutdown.
//!
//! Exit status: 0 after a clean shutdown, 1 if the engine faulted, 2 for
//! usage, config, cascade or device errors.

use std::ffi::OsString;
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use clap::Parser;
use snowframe::control::{ControlServer, TOKEN_ENV};
use snowframe::detect::load_cascade;
use snowframe::runtime::{
    ClockMode, Engine, EngineConfig, EngineOptions, LifecycleEvent, Mode, RunSummary, SinkSpec,
    SourceSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAULT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "snowframe", version, about = "Face-tracking snowfall installation engine")]
pub struct Args {
    /// Engine config file (TOML).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,

    /// synthetic | dir:PATH | camera | null
    #[arg(long, default_value = "synthetic", value_parser = clap::value_parser!(SourceSpecArg))]
    pub source: SourceSpecArg,

    /// window | dir:PATH | null  [default: window, or null with --headless]
    #[arg(long, value_parser = clap::value_parser!(SinkSpecArg))]
    pub sink: Option<SinkSpecArg>,

    /// Overrides the cascade path from the config.
    #[arg(long, value_name = "PATH")]
    pub cascade: Option<PathBuf>,

    /// Seeds the snow and the synthetic source.
    #[arg(long)]
    pub seed: Option<u64>,

    /// exhibition | home
    #[arg(long)]
    pub mode: Option<Mode>,

    /// Serves the control API on this port (0 picks one); enables it.
    #[arg(long, value_name = "N")]
    pub control_port: Option<u16>,

    /// No window; the default sink becomes null.
    #[arg(long)]
    pub headless: bool,

    /// Shuts down after this many composed frames.
    #[arg(long, value_name = "N")]
    pub ticks: Option<u64>,

    /// realtime paces output by the wall clock; simulated runs as fast as
    /// possible with exact, reproducible timing.
    #[arg(long, default_value = "realtime")]
    pub clock: ClockMode,

    /// Stop at the end of a dir: source instead of looping.
    #[arg(long)]
    pub once: bool,
}

#[derive(Debug, Clone)]
pub struct SourceSpecArg(pub SourceSpec);

impl std::str::FromStr for SourceSpecArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(SourceSpecArg)
    }
}

#[derive(Debug, Clone)]
pub struct SinkSpecArg(pub SinkSpec);

impl std::str::FromStr for SinkSpecArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(SinkSpecArg)
    }
}

fn usage_error(msg: impl std::fmt::Display) -> i32 {
    eprintln!("snowframe: {msg}");
    EXIT_USAGE
}

/// Loads the config and applies command-line overrides.
pub fn resolve_config(args: &Args) -> Result<EngineConfig, String> {
    let mut cfg = EngineConfig::load(&args.config).map_err(|e| e.to_string())?;
    if let Some(c) = &args.cascade {
        cfg.cascade = c.clone();
    }
    if let Some(seed) = args.seed {
        cfg.snow.seed = seed;
        cfg.source.seed = seed;
    }
    if let Some(mode) = args.mode {
        cfg.pipeline.mode = mode;
    }
    if let Some(port) = args.control_port {
        cfg.control.port = port;
        cfg.control.enabled = Some(true);
    }
    if args.once {
        cfg.source.loop_dir = false;
    }
    cfg.normalize();
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

pub fn summary_line(s: &RunSummary) -> String {
    format!(
        "telemetry: composed {} frames, written {}, dropped {}, detections {}, fps_out {:.1}, temp {:.2} C, final state {}",
        s.frames_composed,
        s.frames_written,
        s.frames_dropped,
        s.detections_run,
        s.telemetry.fps_out,
        s.telemetry.temp,
        s.final_state.name(),
    )
}

/// Runs the kiosk with `args` (including the program name) and returns the
/// process exit status.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .try_init();

    let cfg = match resolve_config(&args) {
        Ok(c) => c,
        Err(e) => return usage_error(e),
    };
    if !cfg.cascade.is_file() {
        return usage_error(format!("cascade file not found: {}", cfg.cascade.display()));
    }
    let model = match load_cascade(&cfg.cascade) {
        Ok(m) => Arc::new(m),
        Err(e) => return usage_error(format!("{}: {e}", cfg.cascade.display())),
    };
    let sink_spec = match (&args.sink, args.headless) {
        (Some(SinkSpecArg(SinkSpec::Window)), true) => {
            return usage_error("--sink window cannot be combined with --headless")
        }
        (Some(s), _) => s.0.clone(),
        (None, true) => SinkSpec::Null,
        (None, false) => SinkSpec::Window,
    };
    let source = match args.source.0.build(&cfg) {
        Ok(s) => s,
        Err(e) => return usage_error(e),
    };
    let sink = match sink_spec.build() {
        Ok(s) => s,
        Err(e) => return usage_error(e),
    };
    let control = cfg.control_enabled();
    let bind: Result<IpAddr, _> = cfg.control.bind.parse();
    let port = cfg.control.port;
    let options = EngineOptions {
        clock: args.clock,
        max_ticks: args.ticks,
        shutdown_on_fault: !control,
    };
    let (engine, handle) = match Engine::new(cfg, model, source, sink, options) {
        Ok(e) => e,
        Err(e) => return usage_error(e),
    };

    let _server = if control {
        let ip = match bind {
            Ok(ip) => ip,
            Err(e) => return usage_error(format!("control.bind: {e}")),
        };
        let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
        match ControlServer::start(handle.clone(), SocketAddr::new(ip, port), token) {
            Ok(s) => {
                eprintln!("snowframe: control API on http://{}", s.local_addr());
                Some(s)
            }
            Err(e) => return usage_error(format!("cannot start control API on {ip}:{port}: {e}")),
        }
    } else {
        None
    };

    let signals = handle.clone();
    if let Err(e) = ctrlc::set_handler(move || {
        signals.notify(LifecycleEvent::ShutdownRequested);
    }) {
        log::warn!("cannot install signal handler: {e}");
    }

    let summary = engine.run();
    println!("{}", summary_line(&summary));
    match &summary.fault {
        Some(reason) => {
            eprintln!("snowframe: engine faulted: {reason}");
            EXIT_FAULT
        }
        None => EXIT_OK,
    }
}
