//! Benchmark report assembly and emission (JSON, CSV, markdown table).

use super::{percentile, BenchError};
use crate::fronthaul::{GnbReport, Mode};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use std::time::Duration;

/// Echo round-trip summary of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EchoSummary {
    pub count: u64,
    pub min_ms: f64,
    pub median_ms: f64,
    pub p90_ms: f64,
    pub max_ms: f64,
}

impl EchoSummary {
    pub fn from_rtts(rtts: &[Duration]) -> Option<Self> {
        if rtts.is_empty() {
            return None;
        }
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        Some(Self {
            count: rtts.len() as u64,
            min_ms: ms(*rtts.iter().min().expect("non-empty")),
            median_ms: ms(percentile(rtts, 0.5).expect("non-empty")),
            p90_ms: ms(percentile(rtts, 0.9).expect("non-empty")),
            max_ms: ms(*rtts.iter().max().expect("non-empty")),
        })
    }
}

/// What kind of machine produced the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostInfo {
    pub logical_cores: usize,
    /// Advertised maximum core frequency, best effort.
    pub nominal_mhz: Option<f64>,
    pub arch: String,
}

impl HostInfo {
    pub fn detect() -> Self {
        Self {
            logical_cores: crate::fronthaul::pin::available_cores(),
            nominal_mhz: detect_nominal_mhz(),
            arch: std::env::consts::ARCH.to_owned(),
        }
    }
}

fn detect_nominal_mhz() -> Option<f64> {
    if let Ok(khz) = std::fs::read_to_string("/sys/devices/system/cpu/cpu0/cpufreq/cpuinfo_max_freq")
    {
        if let Ok(v) = khz.trim().parse::<f64>() {
            return Some(v / 1000.0);
        }
    }
    let info = std::fs::read_to_string("/proc/cpuinfo").ok()?;
    info.lines()
        .filter_map(|l| l.strip_prefix("cpu MHz"))
        .filter_map(|l| l.split(':').nth(1))
        .filter_map(|v| v.trim().parse::<f64>().ok())
        .fold(None, |acc: Option<f64>, v| {
            Some(acc.map_or(v, |a| a.max(v)))
        })
}

/// One benchmark cell: configuration echo, percentiles, and host descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub mode: Mode,
    pub num_ues: u32,
    pub num_taps: u32,
    pub sparse_n: u32,
    pub pinned: bool,
    pub samples_per_slot: u32,
    pub slot_duration_ms: f64,
    pub slots: u64,
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub overrun_fraction: f64,
    pub ue_timeouts: u64,
    pub echo: Option<EchoSummary>,
    pub host: HostInfo,
}

impl BenchReport {
    #[allow(clippy::too_many_arguments)]
    pub fn from_session(
        mode: Mode,
        num_ues: u32,
        num_taps: u32,
        sparse_n: u32,
        pinned: bool,
        samples_per_slot: u32,
        slot_duration: Duration,
        session: &GnbReport,
    ) -> Result<Self, BenchError> {
        let computes: Vec<Duration> = session.timing.iter().map(|r| r.compute).collect();
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        let overruns = session.timing.iter().filter(|r| r.overrun).count();
        let report = Self {
            mode,
            num_ues,
            num_taps,
            sparse_n,
            pinned,
            samples_per_slot,
            slot_duration_ms: slot_duration.as_secs_f64() * 1e3,
            slots: session.slots_run,
            p50_ms: ms(percentile(&computes, 0.5)?),
            p90_ms: ms(percentile(&computes, 0.9)?),
            p99_ms: ms(percentile(&computes, 0.99)?),
            max_ms: ms(percentile(&computes, 1.0)?),
            overrun_fraction: overruns as f64 / computes.len() as f64,
            ue_timeouts: session.ue_timeouts,
            echo: EchoSummary::from_rtts(&session.echo_rtts),
            host: HostInfo::detect(),
        };
        debug_assert!(report.p50_ms <= report.p90_ms && report.p90_ms <= report.p99_ms);
        Ok(report)
    }
}

/// Output encodings for a report set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(format!("unknown report format `{other}` (json|csv|markdown)")),
        }
    }
}

/// Render a report set to a string.
pub fn render_report(reports: &[BenchReport], format: ReportFormat) -> Result<String, BenchError> {
    match format {
        ReportFormat::Json => Ok(format!("{}\n", serde_json::to_string_pretty(reports)?)),
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "mode",
                "num_ues",
                "num_taps",
                "sparse_n",
                "pinned",
                "samples_per_slot",
                "slot_duration_ms",
                "slots",
                "p50_ms",
                "p90_ms",
                "p99_ms",
                "max_ms",
                "overrun_fraction",
                "ue_timeouts",
                "echo_count",
                "echo_median_ms",
                "host_cores",
                "host_mhz",
                "host_arch",
            ])?;
            for r in reports {
                w.write_record([
                    r.mode.to_string(),
                    r.num_ues.to_string(),
                    r.num_taps.to_string(),
                    r.sparse_n.to_string(),
                    r.pinned.to_string(),
                    r.samples_per_slot.to_string(),
                    format!("{}", r.slot_duration_ms),
                    r.slots.to_string(),
                    format!("{:.6}", r.p50_ms),
                    format!("{:.6}", r.p90_ms),
                    format!("{:.6}", r.p99_ms),
                    format!("{:.6}", r.max_ms),
                    format!("{:.6}", r.overrun_fraction),
                    r.ue_timeouts.to_string(),
                    r.echo.map_or_else(String::new, |e| e.count.to_string()),
                    r.echo
                        .map_or_else(String::new, |e| format!("{:.6}", e.median_ms)),
                    r.host.logical_cores.to_string(),
                    r.host
                        .nominal_mhz
                        .map_or_else(String::new, |m| format!("{m:.0}")),
                    r.host.arch.clone(),
                ])?;
            }
            let bytes = w.into_inner().map_err(|e| {
                BenchError::Io(std::io::Error::other(e.to_string()))
            })?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            if let Some(first) = reports.first() {
                out.push_str(&format!(
                    "host: {} logical cores, {}, {}\n\n",
                    first.host.logical_cores,
                    first
                        .host
                        .nominal_mhz
                        .map_or_else(|| "unknown MHz".to_owned(), |m| format!("{m:.0} MHz")),
                    first.host.arch
                ));
            }
            out.push_str(
                "| mode | UEs | taps | sparse n | pinned | slots | p50 ms | p90 ms | p99 ms | max ms | overrun % | timeouts | echo median ms |\n",
            );
            out.push_str(
                "|------|-----|------|----------|--------|-------|--------|--------|--------|--------|-----------|----------|----------------|\n",
            );
            for r in reports {
                out.push_str(&format!(
                    "| {} | {} | {} | {} | {} | {} | {:.3} | {:.3} | {:.3} | {:.3} | {:.2} | {} | {} |\n",
                    r.mode,
                    r.num_ues,
                    r.num_taps,
                    r.sparse_n,
                    r.pinned,
                    r.slots,
                    r.p50_ms,
                    r.p90_ms,
                    r.p99_ms,
                    r.max_ms,
                    100.0 * r.overrun_fraction,
                    r.ue_timeouts,
                    r.echo
                        .map_or_else(|| "-".to_owned(), |e| format!("{:.3}", e.median_ms)),
                ));
            }
            Ok(out)
        }
    }
}

/// Write a report set to a file.
pub fn emit_report(
    reports: &[BenchReport],
    format: ReportFormat,
    path: &Path,
) -> Result<(), BenchError> {
    let rendered = render_report(reports, format)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(rendered.as_bytes())?;
    Ok(())
}
