//! Subcommand implementations.

use super::scenario::{LoadedScenario, ScenarioConfig, ScenarioError};
use super::{
    BenchArgs, CliError, GenTraceArgs, GnbArgs, InspectArgs, RunArgs, UeArgs,
};
use crate::bench::{emit_report, render_report, BenchMatrix, ReportFormat};
use crate::chan_model::{load_trace, write_meta_sidecar, write_trace, CirTrace, DelayGrid, PdpProfile};
use crate::fronthaul::{
    run_gnb, run_ue, GnbHandle, GnbReport, NullSink, PrngSource, SessionConfig, UeConfig,
};
use crate::link_telemetry::{serve_metrics, MetricsRegistry, MetricsServer};
use crate::trace_gen::{
    build_3gpp_trace_with, doppler_from_speed, gen_periodic_snr_trace_with, import_csv_paths,
    TraceBuildOptions, TraceGenError,
};
use crate::util::mix_seed;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<TraceGenError> for CliError {
    fn from(e: TraceGenError) -> Self {
        // trace generation problems are input problems
        CliError::Validation(e.to_string())
    }
}

fn runtime<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Runtime(e.to_string())
}

fn validation<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Validation(e.to_string())
}

fn maybe_serve_metrics(
    registry: &Arc<MetricsRegistry>,
    flag: Option<&String>,
    scenario: Option<&String>,
) -> Result<Option<MetricsServer>, CliError> {
    let Some(addr) = flag.or(scenario) else {
        return Ok(None);
    };
    let server = serve_metrics(registry.clone(), addr.as_str()).map_err(runtime)?;
    println!("metrics: http://{}/metrics", server.addr());
    Ok(Some(server))
}

fn summarize(report: &GnbReport, session: &SessionConfig) -> String {
    let computes = report.compute_durations();
    let pct = |q: f64| -> f64 {
        crate::bench::percentile(&computes, q)
            .map(|d| d.as_secs_f64() * 1e3)
            .unwrap_or(0.0)
    };
    let slot_ms = session.slot_duration.as_secs_f64() * 1e3;
    let mut out = format!(
        "run complete: {} slots at {} ms ({:.1} s)\n",
        report.slots_run,
        slot_ms,
        report.slots_run as f64 * session.slot_duration.as_secs_f64()
    );
    out.push_str(&format!(
        "  mode {}, {} UE(s), overrun fraction {:.4}, ue timeouts {}, stale {}, lost {}\n",
        session.mode,
        session.ue_traces.len(),
        report.overrun_fraction(),
        report.ue_timeouts,
        report.stale_frames,
        report.connection_losses,
    ));
    out.push_str(&format!(
        "  slot compute: p50 {:.3} ms, p90 {:.3} ms, p99 {:.3} ms, max {:.3} ms\n",
        pct(0.5),
        pct(0.9),
        pct(0.99),
        pct(1.0)
    ));
    if let Some(stats) = crate::fronthaul::EchoStats::from_rtts(&report.echo_rtts) {
        out.push_str(&format!(
            "  echo rtt: {} probes, min {:.3} ms, median {:.3} ms, max {:.3} ms\n",
            stats.count,
            stats.min.as_secs_f64() * 1e3,
            stats.median.as_secs_f64() * 1e3,
            stats.max.as_secs_f64() * 1e3
        ));
    }
    for (ue, link) in &report.link_states {
        out.push_str(&format!(
            "  UE {ue}: snr {:.1} dB, mcs {}, delivered {} bits, drops {}, buffer {} bits\n",
            link.snr_db, link.mcs, link.bits_delivered, link.drops, link.buffer_bits
        ));
    }
    out
}

fn summary_json(report: &GnbReport, session: &SessionConfig) -> serde_json::Value {
    let computes = report.compute_durations();
    let pct = |q: f64| {
        crate::bench::percentile(&computes, q)
            .map(|d| d.as_secs_f64() * 1e3)
            .unwrap_or(0.0)
    };
    serde_json::json!({
        "slots": report.slots_run,
        "slot_duration_ms": session.slot_duration.as_secs_f64() * 1e3,
        "mode": session.mode.to_string(),
        "overrun_fraction": report.overrun_fraction(),
        "ue_timeouts": report.ue_timeouts,
        "connection_losses": report.connection_losses,
        "compute_ms": {"p50": pct(0.5), "p90": pct(0.9), "p99": pct(0.99), "max": pct(1.0)},
        "link_states": report.link_states,
    })
}

fn start_gnb(
    session: &SessionConfig,
    addr: &str,
    registry: Arc<MetricsRegistry>,
) -> Result<GnbHandle, CliError> {
    run_gnb(
        session.clone(),
        addr,
        Box::new(PrngSource::new(mix_seed(session.session_seed, 0xd1, 0, 0))),
        Box::new(NullSink),
        Some(registry),
    )
    .map_err(runtime)
}

fn ue_source_seed(session_seed: u64, ue_id: u32) -> u64 {
    mix_seed(session_seed, u64::from(ue_id), 0x554c, 1)
}

pub fn cmd_gnb(args: GnbArgs, metrics_addr: Option<String>) -> Result<(), CliError> {
    let mut scenario = ScenarioConfig::from_file(&args.config)?;
    if let Some(mode) = args.mode {
        scenario.mode = mode;
    }
    let base = args
        .config
        .parent()
        .map_or_else(|| Path::new(".").to_owned(), Path::to_owned);
    let loaded = scenario.load(&base)?;
    let mut session = loaded.session;
    // manual workflows attach UEs by hand; give them time
    session.accept_timeout = Duration::from_secs(60);

    let registry = Arc::new(MetricsRegistry::new());
    let _metrics = maybe_serve_metrics(
        &registry,
        metrics_addr.as_ref(),
        loaded.scenario.metrics_addr.as_ref(),
    )?;
    println!(
        "gnb: listening on {}, waiting for UEs {:?}",
        loaded.scenario.gnb_addr,
        session.ue_traces.keys().collect::<Vec<_>>()
    );
    let handle = start_gnb(&session, &loaded.scenario.gnb_addr, registry)?;
    let report = handle.wait().map_err(runtime)?;
    print!("{}", summarize(&report, &session));
    Ok(())
}

pub fn cmd_ue(args: UeArgs) -> Result<(), CliError> {
    let trace = load_trace(&args.trace).map_err(validation)?;
    let cfg = UeConfig {
        ue_id: args.id,
        connect_addr: args.connect.clone(),
        trace: Arc::new(trace),
        pin_cores: args.pin.clone(),
        connect_timeout: Duration::from_secs(15),
    };
    let seed = args.source_seed.unwrap_or(u64::from(args.id));
    let handle = run_ue(cfg, Box::new(NullSink), Box::new(PrngSource::new(seed)))
        .map_err(runtime)?;
    println!("ue {}: connected to {}", args.id, args.connect);
    let report = handle.wait().map_err(runtime)?;
    println!(
        "ue {}: processed {} slots (last {:?}), reflected {} echoes",
        report.ue_id, report.slots_processed, report.last_slot, report.echoes_reflected
    );
    Ok(())
}

pub fn cmd_run(args: RunArgs, metrics_addr: Option<String>) -> Result<(), CliError> {
    let scenario = ScenarioConfig::from_file(&args.scenario)?;
    let base = args
        .scenario
        .parent()
        .map_or_else(|| Path::new(".").to_owned(), Path::to_owned);
    let loaded: LoadedScenario = scenario.load(&base)?;
    let session = &loaded.session;

    let registry = Arc::new(MetricsRegistry::new());
    let _metrics = maybe_serve_metrics(
        &registry,
        metrics_addr.as_ref(),
        loaded.scenario.metrics_addr.as_ref(),
    )?;

    let gnb = start_gnb(session, &loaded.scenario.gnb_addr, registry)?;
    let addr = gnb.local_addr().to_string();

    if args.separate_processes || loaded.scenario.separate_processes {
        let exe = std::env::current_exe().map_err(runtime)?;
        let mut children = Vec::new();
        for (ue_id, path) in &loaded.trace_paths {
            let mut cmd = std::process::Command::new(&exe);
            cmd.arg("ue")
                .arg("--id")
                .arg(ue_id.to_string())
                .arg("--trace")
                .arg(path)
                .arg("--connect")
                .arg(&addr)
                .arg("--source-seed")
                .arg(ue_source_seed(session.session_seed, *ue_id).to_string());
            let pins = &loaded.ue_pins[ue_id];
            if !pins.is_empty() {
                cmd.arg("--pin").arg(
                    pins.iter()
                        .map(ToString::to_string)
                        .collect::<Vec<_>>()
                        .join(","),
                );
            } else if let Some(map) = &session.pinning {
                if let Some(cores) = map.per_ue.get(ue_id) {
                    cmd.arg("--pin").arg(
                        cores
                            .iter()
                            .map(ToString::to_string)
                            .collect::<Vec<_>>()
                            .join(","),
                    );
                }
            }
            let child = cmd.spawn().map_err(runtime)?;
            children.push((*ue_id, child));
        }
        let report = gnb.wait().map_err(runtime)?;
        let mut failures = 0;
        for (ue_id, mut child) in children {
            match child.wait() {
                Ok(status) if status.success() => {}
                Ok(status) => {
                    log::warn!("UE {ue_id} process exited with {status}");
                    failures += 1;
                }
                Err(e) => {
                    log::warn!("UE {ue_id} process join failed: {e}");
                    failures += 1;
                }
            }
        }
        finish_run(&args, report, session)?;
        if failures > 0 {
            return Err(CliError::Runtime(format!("{failures} UE process(es) failed")));
        }
        Ok(())
    } else {
        let mut ues = Vec::new();
        for (ue_id, trace) in &session.ue_traces {
            let cfg = UeConfig {
                ue_id: *ue_id,
                connect_addr: addr.clone(),
                trace: trace.clone(),
                pin_cores: session
                    .pinning
                    .as_ref()
                    .and_then(|p| p.per_ue.get(ue_id).cloned())
                    .unwrap_or_default(),
                connect_timeout: Duration::from_secs(5),
            };
            let src = PrngSource::new(ue_source_seed(session.session_seed, *ue_id));
            match run_ue(cfg, Box::new(NullSink), Box::new(src)) {
                Ok(handle) => ues.push(handle),
                Err(e) => {
                    // partial-startup rollback: bring the whole run down
                    gnb.request_stop();
                    for ue in ues {
                        ue.stop();
                        let _ = ue.wait();
                    }
                    let _ = gnb.wait();
                    return Err(CliError::Runtime(format!("UE {ue_id} failed to start: {e}")));
                }
            }
        }
        let report = gnb.wait().map_err(runtime)?;
        for ue in ues {
            if let Err(e) = ue.wait() {
                log::warn!("UE worker ended with: {e}");
            }
        }
        finish_run(&args, report, session)
    }
}

fn finish_run(
    args: &RunArgs,
    report: GnbReport,
    session: &SessionConfig,
) -> Result<(), CliError> {
    print!("{}", summarize(&report, session));
    if let Some(out) = &args.summary_out {
        let json = summary_json(&report, session);
        std::fs::write(out, format!("{:#}\n", json)).map_err(runtime)?;
        println!("summary written to {}", out.display());
    }
    Ok(())
}

fn parse_snr_pair(s: &str) -> Result<(f64, f64), CliError> {
    let (high, low) = s
        .split_once(':')
        .ok_or_else(|| CliError::Validation(format!("--snr wants `high:low`, got `{s}`")))?;
    let parse = |v: &str| -> Result<f64, CliError> {
        v.trim()
            .parse()
            .map_err(|_| CliError::Validation(format!("bad SNR value `{v}`")))
    };
    Ok((parse(high)?, parse(low)?))
}

pub fn cmd_gen_trace(args: GenTraceArgs) -> Result<(), CliError> {
    let grid = DelayGrid::from_sample_rate(args.sample_rate, args.bins).map_err(validation)?;
    if !(args.time_step_ms > 0.0 && args.time_step_ms.is_finite()) {
        return Err(CliError::Validation(format!(
            "--time-step-ms must be positive, got {}",
            args.time_step_ms
        )));
    }
    let time_step = Duration::from_secs_f64(args.time_step_ms / 1e3);
    let doppler = match (args.doppler_hz, args.speed_kmh) {
        (Some(fd), _) => fd,
        (None, Some(v)) => doppler_from_speed(v, args.carrier_hz),
        (None, None) => 0.0,
    };

    let trace: CirTrace = if let Some(csv) = &args.from_csv {
        import_csv_paths(csv, &grid, time_step)?
    } else if args.profile == "synthetic-periodic" {
        let (high, low) = parse_snr_pair(&args.snr)?;
        gen_periodic_snr_trace_with(args.period, high, low, args.duration, &grid, time_step)?
    } else {
        let profile_path = if args.profile.ends_with(".json") {
            Path::new(&args.profile).to_owned()
        } else {
            args.profiles_dir.join(format!("{}.json", args.profile))
        };
        let pdp = PdpProfile::from_json_file(&profile_path, doppler).map_err(|e| {
            CliError::Validation(format!("profile {}: {e}", profile_path.display()))
        })?;
        let opts = TraceBuildOptions {
            time_step,
            carrier_freq_hz: args.carrier_hz,
            ..TraceBuildOptions::default()
        };
        build_3gpp_trace_with(&pdp, &grid, args.duration, args.seed, &opts)?
    };

    write_trace(&trace, &args.out).map_err(runtime)?;
    let sidecar = write_meta_sidecar(&trace, &args.out).map_err(runtime)?;

    let mean_power_db = {
        let steps = trace.num_steps();
        let mean: f64 = (0..steps)
            .map(|s| trace.tap_power_linear(s).expect("step in range"))
            .sum::<f64>()
            / f64::from(steps);
        10.0 * mean.log10()
    };
    let bytes = std::fs::metadata(&args.out).map(|m| m.len()).unwrap_or(0);
    println!(
        "wrote `{}`: {} steps x {} bins",
        trace.label(),
        trace.num_steps(),
        trace.num_bins()
    );
    println!(
        "  time step {:.3} ms, sample rate {:.4} Msps, doppler {:.2} Hz",
        trace.time_step().as_secs_f64() * 1e3,
        trace.grid().sample_rate() / 1e6,
        doppler
    );
    println!("  mean tap power {mean_power_db:.2} dB");
    println!(
        "  {} ({bytes} bytes), sidecar {}",
        args.out.display(),
        sidecar.display()
    );
    Ok(())
}

pub fn cmd_inspect(args: InspectArgs) -> Result<(), CliError> {
    let trace = load_trace(&args.trace).map_err(validation)?;
    println!("{}", args.trace.display());
    println!("  label: {}", trace.label());
    println!(
        "  {} steps x {} bins, time step {:.3} ms, sample rate {:.4} Msps",
        trace.num_steps(),
        trace.num_bins(),
        trace.time_step().as_secs_f64() * 1e3,
        trace.grid().sample_rate() / 1e6
    );
    println!(
        "  bin spacing {:.3} ns, carrier {:.4} GHz",
        trace.grid().bin_spacing_ns(),
        trace.carrier_freq_hz() / 1e9
    );

    let steps = trace.num_steps();
    let bins = trace.num_bins() as usize;
    let mut bin_power = vec![0.0f64; bins];
    let mut total = Vec::with_capacity(steps as usize);
    for s in 0..steps {
        let row = trace.step_taps(s).expect("step in range");
        let mut step_total = 0.0;
        for (b, t) in row.iter().enumerate() {
            let p = f64::from(t.re) * f64::from(t.re) + f64::from(t.im) * f64::from(t.im);
            bin_power[b] += p;
            step_total += p;
        }
        total.push(step_total);
    }
    for p in &mut bin_power {
        *p /= f64::from(steps);
    }
    let mean: f64 = total.iter().sum::<f64>() / f64::from(steps);
    println!("  mean tap power {:.2} dB", 10.0 * mean.log10());

    let active: Vec<(usize, f64)> = bin_power
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, p)| *p > 1e-12)
        .collect();
    println!("  active bins: {} of {bins}", active.len());
    for (b, p) in &active {
        println!(
            "    bin {b:3}  delay {:8.1} ns  avg power {:7.2} dB",
            *b as f64 * trace.grid().bin_spacing_ns(),
            10.0 * p.log10()
        );
    }

    if let Some(out) = &args.power_csv {
        let mut w = csv::Writer::from_path(out).map_err(runtime)?;
        w.write_record(["step", "time_s", "power_db"]).map_err(runtime)?;
        let dt = trace.time_step().as_secs_f64();
        for (s, p) in total.iter().enumerate() {
            w.write_record([
                s.to_string(),
                format!("{:.6}", s as f64 * dt),
                format!("{:.4}", 10.0 * p.log10()),
            ])
            .map_err(runtime)?;
        }
        w.flush().map_err(runtime)?;
        println!("  per-step power written to {}", out.display());
    }
    Ok(())
}

pub fn cmd_bench(args: BenchArgs) -> Result<(), CliError> {
    if args.ues.is_empty() || args.taps.is_empty() || args.modes.is_empty() {
        return Err(CliError::Validation(
            "--ues, --taps, and --modes must each name at least one value".into(),
        ));
    }
    let matrix = BenchMatrix {
        modes: args.modes.clone(),
        ue_counts: args.ues.clone(),
        tap_counts: args.taps.clone(),
        sparse_n: args.sparse_n,
        duration: args.duration,
        slot_duration: args.slot_duration,
        samples_per_slot: args.samples_per_slot,
        pinning: args.pin,
        echo_every: args.echo_every,
        seed: args.seed,
    };
    eprintln!(
        "bench: {} cells x {:?} each",
        matrix.modes.len() * matrix.ue_counts.len() * matrix.tap_counts.len(),
        matrix.duration
    );
    let reports = crate::bench::run_bench(&matrix).map_err(runtime)?;
    // the table goes to stdout either way; --out pins the machine-readable copy
    print!(
        "{}",
        render_report(&reports, ReportFormat::Markdown).map_err(runtime)?
    );
    if let Some(out) = &args.out {
        emit_report(&reports, args.format, out).map_err(runtime)?;
        println!("report written to {}", out.display());
    }
    Ok(())
}
