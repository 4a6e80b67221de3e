//! Trace builders: statistical fading traces from a power delay profile and
//! the synthetic periodic-SNR sweep.

use super::jakes::{gen_jakes_gains, JakesConfig, DEFAULT_NUM_SINUSOIDS};
use super::resample::resample_paths;
use super::{step_count, PathList, TraceGenError, DEFAULT_CARRIER_HZ};
use crate::chan_model::{CirTrace, DelayGrid, PdpProfile, DEFAULT_TIME_STEP};
use crate::util::mix_seed;
use num_complex::{Complex32, Complex64};
use std::time::Duration;

/// Knobs shared by the trace builders.
#[derive(Debug, Clone)]
pub struct TraceBuildOptions {
    pub time_step: Duration,
    pub num_sinusoids: usize,
    pub carrier_freq_hz: f64,
    /// Trace label; derived from the profile when absent.
    pub label: Option<String>,
}

impl Default for TraceBuildOptions {
    fn default() -> Self {
        Self {
            time_step: DEFAULT_TIME_STEP,
            num_sinusoids: DEFAULT_NUM_SINUSOIDS,
            carrier_freq_hz: DEFAULT_CARRIER_HZ,
            label: None,
        }
    }
}

/// Independent fading per path, derived from the trace seed.
fn path_seed(seed: u64, path_index: usize) -> u64 {
    mix_seed(seed, path_index as u64, 0x70617468, 0)
}

/// Build a fading trace from a power delay profile: each path carries an
/// independent fading process scaled by its profile power, placed on the
/// grid by [`resample_paths`].
///
/// Off-grid paths lose a little power to the two-bin amplitude split, so
/// path amplitudes are rescaled once up front to keep the expected per-step
/// total tap power at 1.
pub fn build_3gpp_trace(
    pdp: &PdpProfile,
    grid: &DelayGrid,
    duration: Duration,
    seed: u64,
) -> Result<CirTrace, TraceGenError> {
    build_3gpp_trace_with(pdp, grid, duration, seed, &TraceBuildOptions::default())
}

pub fn build_3gpp_trace_with(
    pdp: &PdpProfile,
    grid: &DelayGrid,
    duration: Duration,
    seed: u64,
    opts: &TraceBuildOptions,
) -> Result<CirTrace, TraceGenError> {
    let steps = step_count(duration, opts.time_step)?;
    let powers = pdp.linear_powers();

    // Per-path grid split weights, probed with a unit gain so snapping
    // matches the resampler exactly.
    let mut weight_sumsq = Vec::with_capacity(pdp.num_paths());
    for &delay in &pdp.path_delays_ns {
        let probe = resample_paths(&vec![(delay, Complex64::new(1.0, 0.0))], grid)?;
        weight_sumsq.push(probe.iter().map(|t| t.norm_sqr()).sum::<f64>());
    }
    let norm: f64 = powers
        .iter()
        .zip(&weight_sumsq)
        .map(|(p, w)| p * w)
        .sum();
    let scales: Vec<f64> = powers.iter().map(|p| (p / norm).sqrt()).collect();

    let mut fading = Vec::with_capacity(pdp.num_paths());
    for path in 0..pdp.num_paths() {
        let cfg = JakesConfig {
            doppler_hz: pdp.doppler_hz,
            num_sinusoids: opts.num_sinusoids,
            seed: path_seed(seed, path),
            duration,
            time_step: opts.time_step,
        };
        fading.push(gen_jakes_gains(&cfg)?);
    }

    let bins = grid.num_bins() as usize;
    let mut taps = Vec::with_capacity(steps as usize * bins);
    let mut step_paths: PathList = Vec::with_capacity(pdp.num_paths());
    for step in 0..steps as usize {
        step_paths.clear();
        for path in 0..pdp.num_paths() {
            step_paths.push((
                pdp.path_delays_ns[path],
                fading[path][step] * scales[path],
            ));
        }
        let row = resample_paths(&step_paths, grid)?;
        taps.extend(row.iter().map(|t| Complex32::new(t.re as f32, t.im as f32)));
    }

    let label = opts.label.clone().unwrap_or_else(|| {
        format!("{}-fd{:.1}hz", pdp.name, pdp.doppler_hz)
    });
    Ok(CirTrace::new(
        *grid,
        opts.time_step,
        taps,
        opts.carrier_freq_hz,
        label,
    )?)
}

/// Single-tap trace whose gain ramps linearly in dB from 0 down to
/// `snr_low_db - snr_high_db` over each period, then restarts: replayed
/// against a fixed noise floor the post-channel SNR sweeps from high to low
/// in a periodic fashion. The gain anchor is 0 dB at the start of a period.
pub fn gen_periodic_snr_trace(
    period: Duration,
    snr_high_db: f64,
    snr_low_db: f64,
    duration: Duration,
    grid: &DelayGrid,
) -> Result<CirTrace, TraceGenError> {
    gen_periodic_snr_trace_with(
        period,
        snr_high_db,
        snr_low_db,
        duration,
        grid,
        DEFAULT_TIME_STEP,
    )
}

pub fn gen_periodic_snr_trace_with(
    period: Duration,
    snr_high_db: f64,
    snr_low_db: f64,
    duration: Duration,
    grid: &DelayGrid,
    time_step: Duration,
) -> Result<CirTrace, TraceGenError> {
    if period.is_zero() {
        return Err(TraceGenError::InvalidConfig("period must be > 0".into()));
    }
    if duration < period {
        return Err(TraceGenError::InvalidConfig(format!(
            "duration {duration:?} must cover at least one period {period:?}"
        )));
    }
    if !snr_high_db.is_finite() || !snr_low_db.is_finite() {
        return Err(TraceGenError::InvalidConfig(
            "SNR endpoints must be finite".into(),
        ));
    }
    let steps = step_count(duration, time_step)?;
    let sweep_db = snr_high_db - snr_low_db;
    let period_ns = period.as_nanos();
    let step_ns = time_step.as_nanos();

    let bins = grid.num_bins() as usize;
    let mut taps = vec![Complex32::new(0.0, 0.0); steps as usize * bins];
    for step in 0..steps as usize {
        let phase = (step as u128 * step_ns % period_ns) as f64 / period_ns as f64;
        let gain_db = -sweep_db * phase;
        taps[step * bins] = Complex32::new(10f32.powf((gain_db / 20.0) as f32), 0.0);
    }
    Ok(CirTrace::new(
        *grid,
        time_step,
        taps,
        0.0,
        format!("periodic-snr-{snr_high_db}to{snr_low_db}db"),
    )?)
}
