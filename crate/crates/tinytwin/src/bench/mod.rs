//! Benchmark harness: per-slot compute-time distributions across sweeps of
//! mode, UE count, and tap count, with machine-readable reports.
//!
//! Timing is captured gNB-side as the span from the first byte of a slot's
//! processing to the completion of uplink aggregation, excluding the pacing
//! sleep. Reports always embed the host descriptor and full configuration
//! so numbers from different machines are never compared blindly.

mod report;

pub use report::{emit_report, render_report, BenchReport, EchoSummary, HostInfo, ReportFormat};

use crate::chan_model::{CirTrace, DelayGrid, DEFAULT_TIME_STEP};
use crate::fronthaul::{
    run_gnb, run_ue, Mode, NullSink, PinningMap, PrngSource, SessionConfig, UeConfig,
};
use crate::util::mix_seed;
use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Duration;

/// One slot's compute-time observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlotTimingRecord {
    pub slot_index: u64,
    /// Wall-clock span of all convolution and aggregation work of the slot.
    pub compute: Duration,
    /// The slot duration this work had to fit into.
    pub deadline: Duration,
    pub overrun: bool,
}

impl SlotTimingRecord {
    pub fn new(slot_index: u64, compute: Duration, deadline: Duration) -> Self {
        Self {
            slot_index,
            compute,
            deadline,
            overrun: compute > deadline,
        }
    }
}

/// Benchmark errors.
#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("cannot take a percentile of an empty sample")]
    EmptySample,
    #[error("session failure: {0}")]
    Session(#[from] crate::fronthaul::FronthaulError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("report serialization: {0}")]
    Serialize(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Nearest-rank percentile: the `ceil(q * N)`-th order statistic.
pub fn percentile(durations: &[Duration], q: f64) -> Result<Duration, BenchError> {
    if durations.is_empty() {
        return Err(BenchError::EmptySample);
    }
    let q = q.clamp(0.0, 1.0);
    let mut sorted: Vec<Duration> = durations.to_vec();
    sorted.sort_unstable();
    let rank = ((q * sorted.len() as f64).ceil() as usize).max(1);
    Ok(sorted[rank - 1])
}

/// The sweep to run: the cross product of modes, UE counts, and tap counts.
#[derive(Debug, Clone)]
pub struct BenchMatrix {
    pub modes: Vec<Mode>,
    pub ue_counts: Vec<u32>,
    pub tap_counts: Vec<u32>,
    /// Sparse tap budget (0 = full convolution).
    pub sparse_n: u32,
    /// Wall-clock length of each cell: `duration / slot_duration` slots.
    pub duration: Duration,
    pub slot_duration: Duration,
    pub samples_per_slot: u32,
    /// Pin workers to cores (two per UE group) when the host is large enough.
    pub pinning: bool,
    /// Echo probe cadence in slots; probes feed the per-cell RTT stats.
    pub echo_every: u64,
    pub seed: u64,
}

impl Default for BenchMatrix {
    fn default() -> Self {
        Self {
            modes: vec![Mode::Vanilla, Mode::Optimized],
            ue_counts: vec![1, 2, 5],
            tap_counts: vec![1, 10, 20],
            sparse_n: 0,
            duration: Duration::from_secs(10),
            slot_duration: Duration::from_millis(1),
            samples_per_slot: 1920,
            pinning: false,
            echo_every: 20,
            seed: 1,
        }
    }
}

/// Deterministic full-support benchmark channel: `num_taps` bins of
/// independent complex-Gaussian taps, unit expected total power, redrawn
/// every step over a modest replay period.
pub fn bench_trace(num_taps: u32, sample_rate: f64, seed: u64) -> CirTrace {
    const REPLAY_STEPS: u32 = 256;
    let grid = DelayGrid::from_sample_rate(sample_rate, num_taps).expect("valid grid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = (0.5 / f64::from(num_taps)).sqrt();
    let gauss = |rng: &mut ChaCha8Rng| -> f32 {
        let u1: f64 = rng.gen_range(1e-12..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        (((-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()) * sigma) as f32
    };
    let taps: Vec<Complex32> = (0..REPLAY_STEPS * num_taps)
        .map(|_| Complex32::new(gauss(&mut rng), gauss(&mut rng)))
        .collect();
    CirTrace::new(
        grid,
        DEFAULT_TIME_STEP,
        taps,
        0.0,
        format!("bench-{num_taps}tap"),
    )
    .expect("bench trace is valid")
}

/// Run every cell of the matrix and collect one report per cell.
///
/// Hosts with fewer than two logical cores per UE get a warning; the sweep
/// still runs, the report's host descriptor tells the story.
pub fn run_bench(matrix: &BenchMatrix) -> Result<Vec<BenchReport>, BenchError> {
    let max_ues = matrix.ue_counts.iter().copied().max().unwrap_or(0);
    let cores = crate::fronthaul::pin::available_cores();
    if cores < 2 * max_ues as usize {
        log::warn!(
            "host has {cores} logical cores for up to {max_ues} UEs; \
             pinned timing results will be contended"
        );
    }
    let mut reports = Vec::new();
    for &mode in &matrix.modes {
        for &ues in &matrix.ue_counts {
            for &taps in &matrix.tap_counts {
                reports.push(run_cell(matrix, mode, ues, taps)?);
            }
        }
    }
    Ok(reports)
}

/// Run one benchmark cell in-process over loopback TCP.
pub fn run_cell(
    matrix: &BenchMatrix,
    mode: Mode,
    num_ues: u32,
    num_taps: u32,
) -> Result<BenchReport, BenchError> {
    let sample_rate = f64::from(matrix.samples_per_slot) / matrix.slot_duration.as_secs_f64();
    let mut ue_traces = BTreeMap::new();
    for ue in 0..num_ues {
        let trace_seed = mix_seed(matrix.seed, u64::from(num_taps), u64::from(ue), 0xbe);
        ue_traces.insert(ue, Arc::new(bench_trace(num_taps, sample_rate, trace_seed)));
    }

    let pinning = if matrix.pinning {
        let ids: Vec<u32> = (0..num_ues).collect();
        PinningMap::two_cores_per_ue(&ids)
    } else {
        None
    };
    let pinned = pinning.is_some();

    let num_slots = (matrix.duration.as_nanos() / matrix.slot_duration.as_nanos()).max(1) as u64;
    let cfg = SessionConfig {
        mode,
        samples_per_slot: matrix.samples_per_slot,
        slot_duration: matrix.slot_duration,
        sparse_n: matrix.sparse_n,
        ue_traces: ue_traces.clone(),
        session_seed: matrix.seed,
        num_slots,
        echo_probe_every: Some(matrix.echo_every.max(1)),
        pinning: pinning.clone(),
        ..SessionConfig::default()
    };

    let gnb = run_gnb(
        cfg.clone(),
        "127.0.0.1:0",
        Box::new(PrngSource::new(mix_seed(matrix.seed, 0xd1, 0, 0))),
        Box::new(NullSink),
        None,
    )?;
    let addr = gnb.local_addr().to_string();

    let mut ue_handles = Vec::new();
    for (ue, trace) in &ue_traces {
        let ue_cfg = UeConfig {
            ue_id: *ue,
            connect_addr: addr.clone(),
            trace: trace.clone(),
            pin_cores: pinning
                .as_ref()
                .and_then(|p| p.per_ue.get(ue).cloned())
                .unwrap_or_default(),
            ..UeConfig::default()
        };
        let src = PrngSource::new(mix_seed(matrix.seed, 0xa7, u64::from(*ue), 1));
        ue_handles.push(run_ue(ue_cfg, Box::new(NullSink), Box::new(src))?);
    }

    let report = gnb.wait()?;
    for ue in ue_handles {
        let _ = ue.wait();
    }

    BenchReport::from_session(
        mode,
        num_ues,
        num_taps,
        matrix.sparse_n,
        pinned,
        matrix.samples_per_slot,
        matrix.slot_duration,
        &report,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(v: u64) -> Duration {
        Duration::from_millis(v)
    }

    #[test]
    fn percentile_follows_nearest_rank() {
        let records: Vec<Duration> = (1..=10).map(ms).collect();
        assert_eq!(percentile(&records, 0.9).unwrap(), ms(9));
        assert_eq!(percentile(&records, 1.0).unwrap(), ms(10));
        assert_eq!(percentile(&records, 0.0).unwrap(), ms(1));
        assert_eq!(percentile(&records, 0.5).unwrap(), ms(5));
        // a single record answers every quantile
        for q in [0.0, 0.4, 0.9, 1.0] {
            assert_eq!(percentile(&[ms(7)], q).unwrap(), ms(7));
        }
        assert!(matches!(percentile(&[], 0.5), Err(BenchError::EmptySample)));
    }

    #[test]
    fn percentile_is_monotone_in_q() {
        let records: Vec<Duration> = [5, 1, 9, 2, 2, 8, 4].iter().map(|&v| ms(v)).collect();
        let mut prev = Duration::ZERO;
        for i in 0..=20 {
            let q = i as f64 / 20.0;
            let p = percentile(&records, q).unwrap();
            assert!(p >= prev, "q={q}");
            prev = p;
        }
    }

    #[test]
    fn overrun_flag_matches_deadline_comparison() {
        let r = SlotTimingRecord::new(3, Duration::from_micros(1500), ms(1));
        assert!(r.overrun);
        let r = SlotTimingRecord::new(4, Duration::from_micros(900), ms(1));
        assert!(!r.overrun);
    }

    #[test]
    fn bench_trace_is_deterministic_with_unit_power() {
        let a = bench_trace(20, 1.92e6, 5);
        let b = bench_trace(20, 1.92e6, 5);
        assert_eq!(a, b);
        assert_eq!(a.num_bins(), 20);
        let mean: f64 = (0..a.num_steps())
            .map(|s| a.tap_power_linear(s).unwrap())
            .sum::<f64>()
            / a.num_steps() as f64;
        assert!((mean - 1.0).abs() < 0.1, "mean power {mean}");
    }
}
