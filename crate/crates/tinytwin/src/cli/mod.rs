//! The `tinytwin` command line: gNB/UE endpoints, scenario runs, trace
//! generation and inspection, and benchmark sweeps.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on validation failure
//! (bad arguments, malformed scenario or trace files).

mod commands;
mod scenario;

pub use scenario::{LoadedScenario, ScenarioConfig, ScenarioError, UeEntry};

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::time::Duration;

/// Parse a human duration like `60s`, `1500ms`, `2m`, or `0.5s`.
pub fn parse_duration(s: &str) -> Result<Duration, String> {
    let s = s.trim();
    let (value, unit) = match s.find(|c: char| c.is_ascii_alphabetic()) {
        Some(at) => s.split_at(at),
        None => (s, "s"),
    };
    let value: f64 = value
        .parse()
        .map_err(|_| format!("bad duration value in `{s}`"))?;
    if !(value.is_finite() && value >= 0.0) {
        return Err(format!("duration must be non-negative, got `{s}`"));
    }
    let seconds = match unit {
        "s" | "sec" | "" => value,
        "ms" => value / 1e3,
        "us" => value / 1e6,
        "m" | "min" => value * 60.0,
        other => return Err(format!("unknown duration unit `{other}` in `{s}`")),
    };
    Ok(Duration::from_secs_f64(seconds))
}

#[derive(Parser, Debug)]
#[command(
    name = "tinytwin",
    version,
    about = "CPU-native virtual RF plane: gNB/UE IQ streaming with per-UE channel replay"
)]
pub struct Cli {
    /// Log verbosity (error|warn|info|debug|trace); TINYTWIN_LOG overrides.
    #[arg(long, global = true, default_value = "warn")]
    pub log_level: String,
    /// Serve the metrics exposition endpoint at this address.
    #[arg(long, global = true)]
    pub metrics_addr: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the gNB server half of a session described by a scenario file
    Gnb(GnbArgs),
    /// Run one UE client
    Ue(UeArgs),
    /// Run a whole scenario: gNB plus all UEs
    Run(RunArgs),
    /// Generate a CIRT channel trace file
    GenTrace(GenTraceArgs),
    /// Print a trace file's header and power profile
    Inspect(InspectArgs),
    /// Sweep slot-timing benchmarks and emit a report
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
pub struct GnbArgs {
    /// Scenario document (TOML or JSON) naming UEs, traces, and timing.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the scenario's convolution placement.
    #[arg(long)]
    pub mode: Option<crate::fronthaul::Mode>,
}

#[derive(Args, Debug)]
pub struct UeArgs {
    /// UE identity; must be expected by the gNB's config.
    #[arg(long)]
    pub id: u32,
    /// CIRT channel trace this UE replays.
    #[arg(long)]
    pub trace: PathBuf,
    /// gNB endpoint, host:port.
    #[arg(long)]
    pub connect: String,
    /// Cores to pin this UE's worker to.
    #[arg(long, value_delimiter = ',')]
    pub pin: Vec<usize>,
    /// Seed of the uplink payload generator.
    #[arg(long)]
    pub source_seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Scenario document (TOML or JSON).
    pub scenario: PathBuf,
    /// One OS process per UE instead of in-process workers.
    #[arg(long)]
    pub separate_processes: bool,
    /// Write the run summary as JSON here as well.
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GenTraceArgs {
    /// Profile name under --profiles-dir (uma|umi|rma), a path to a PDP
    /// JSON file, or `synthetic-periodic`.
    #[arg(long)]
    pub profile: String,
    /// Output CIRT path.
    #[arg(long)]
    pub out: PathBuf,
    /// Trace length, e.g. `60s`.
    #[arg(long, value_parser = parse_duration, default_value = "10s")]
    pub duration: Duration,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Mobile speed; mapped to Doppler via the carrier.
    #[arg(long)]
    pub speed_kmh: Option<f64>,
    /// Explicit maximum Doppler, overrides --speed-kmh.
    #[arg(long)]
    pub doppler_hz: Option<f64>,
    #[arg(long, default_value_t = 1.92e6)]
    pub sample_rate: f64,
    /// Delay grid length in bins (= taps).
    #[arg(long, default_value_t = 64)]
    pub bins: u32,
    #[arg(long, default_value_t = 1.0)]
    pub time_step_ms: f64,
    #[arg(long, default_value_t = 3.5e9)]
    pub carrier_hz: f64,
    /// Sweep period of the synthetic-periodic profile.
    #[arg(long, value_parser = parse_duration, default_value = "10s")]
    pub period: Duration,
    /// SNR sweep of the synthetic-periodic profile as `high:low` in dB.
    #[arg(long, default_value = "20:0")]
    pub snr: String,
    /// Directory holding the PDP profile JSON files.
    #[arg(long, default_value = "profiles")]
    pub profiles_dir: PathBuf,
    /// Import this CSV path list instead of synthesizing
    /// (rows `time_s,delay_ns,re,im`; --profile is ignored).
    #[arg(long)]
    pub from_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    /// CIRT trace file.
    pub trace: PathBuf,
    /// Also export the per-step total power series as CSV.
    #[arg(long)]
    pub power_csv: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// UE counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,2,5")]
    pub ues: Vec<u32>,
    /// Tap counts to sweep.
    #[arg(long, value_delimiter = ',', default_value = "1,10,20")]
    pub taps: Vec<u32>,
    /// Convolution placements to sweep.
    #[arg(long, value_delimiter = ',', default_value = "vanilla,optimized")]
    pub modes: Vec<crate::fronthaul::Mode>,
    /// Wall-clock length of each cell.
    #[arg(long, value_parser = parse_duration, default_value = "10s")]
    pub duration: Duration,
    /// Sparse tap budget (0 = full convolution).
    #[arg(long, default_value_t = 0)]
    pub sparse_n: u32,
    #[arg(long, default_value_t = 1920)]
    pub samples_per_slot: u32,
    /// Slot duration, e.g. `1ms`.
    #[arg(long, value_parser = parse_duration, default_value = "1ms")]
    pub slot_duration: Duration,
    /// Pin workers (two cores per UE) when the host is large enough.
    #[arg(long)]
    pub pin: bool,
    /// Echo probe cadence in slots.
    #[arg(long, default_value_t = 20)]
    pub echo_every: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Report output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report encoding (json|csv|markdown).
    #[arg(long, default_value = "json")]
    pub format: crate::bench::ReportFormat,
}

/// Errors sorted by which exit code they map to.
#[derive(Debug)]
pub enum CliError {
    /// Exit code 2: bad arguments or malformed input files.
    Validation(String),
    /// Exit code 1: the run itself failed.
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn init_logging(level: &str) {
    let env = env_logger::Env::new().filter("TINYTWIN_LOG");
    let mut builder = env_logger::Builder::new();
    builder.parse_filters(level);
    builder.parse_env(env);
    let _ = builder.try_init();
}

/// Parse `std::env::args` and run; returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    run_parsed(cli)
}

/// Run an already-parsed invocation.
pub fn run_parsed(cli: Cli) -> i32 {
    init_logging(&cli.log_level);
    let result = match cli.command {
        Command::Gnb(args) => commands::cmd_gnb(args, cli.metrics_addr),
        Command::Ue(args) => commands::cmd_ue(args),
        Command::Run(args) => commands::cmd_run(args, cli.metrics_addr),
        Command::GenTrace(args) => commands::cmd_gen_trace(args),
        Command::Inspect(args) => commands::cmd_inspect(args),
        Command::Bench(args) => commands::cmd_bench(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
