//! Channel-domain types shared by every other module: delay grids, channel
//! impulse response (CIR) traces, power delay profiles, and sparse tap sets.
//!
//! A [`CirTrace`] is the replayable channel: a `T x L` grid of complex tap
//! gains, one row per time step (1 ms by default), one column per delay bin.
//! Delay bins sit on the IQ sample grid, so one bin always spans exactly one
//! sample period. Replay past the end of a trace wraps modulo `T`.
//!
//! Traces are stored on disk in the binary CIRT format, see [`format`].

mod format;

pub use format::{load_trace, write_meta_sidecar, write_trace, CIRT_MAGIC, CIRT_VERSION};

use num_complex::Complex32;
use serde::Deserialize;
use std::path::Path;
use std::time::Duration;

/// Default temporal resolution of a trace step.
pub const DEFAULT_TIME_STEP: Duration = Duration::from_millis(1);

/// Errors for trace construction, file IO, and step lookup.
///
/// File-shape errors carry the byte offset at which the problem was found.
#[derive(Debug, thiserror::Error)]
pub enum ChanModelError {
    #[error("bad magic at byte offset {offset} (expected \"CIRT\")")]
    BadMagic { offset: u64 },
    #[error("unsupported CIRT version {version} at byte offset {offset}")]
    UnsupportedVersion { version: u16, offset: u64 },
    #[error("truncated CIRT payload at byte offset {offset}")]
    Truncated { offset: u64 },
    #[error("non-finite tap at step {step}, bin {bin} (byte offset {offset})")]
    NonFiniteTap { step: u32, bin: u32, offset: u64 },
    #[error("invalid header field `{field}` at byte offset {offset}: {reason}")]
    InvalidHeader {
        field: &'static str,
        offset: u64,
        reason: String,
    },
    #[error("step {step} out of range (trace has {num_steps} steps)")]
    StepOutOfRange { step: u32, num_steps: u32 },
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("profile parse error: {0}")]
    ProfileParse(#[from] serde_json::Error),
}

/// A uniform delay grid tied to the IQ sample grid: one bin per sample period.
///
/// Only the spacing is stored; the sample rate is defined as its reciprocal,
/// so `bin_spacing * sample_rate = 1` holds by construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayGrid {
    num_bins: u32,
    bin_spacing_ns: f64,
}

impl DelayGrid {
    /// Grid with `num_bins` bins spaced at one sample period of `sample_rate`.
    pub fn from_sample_rate(sample_rate: f64, num_bins: u32) -> Result<Self, ChanModelError> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(ChanModelError::InvalidTrace(format!(
                "sample rate must be positive and finite, got {sample_rate}"
            )));
        }
        Self::from_spacing_ns(1e9 / sample_rate, num_bins)
    }

    /// Grid defined by its bin spacing.
    pub fn from_spacing_ns(bin_spacing_ns: f64, num_bins: u32) -> Result<Self, ChanModelError> {
        if !(bin_spacing_ns.is_finite() && bin_spacing_ns > 0.0) {
            return Err(ChanModelError::InvalidTrace(format!(
                "bin spacing must be positive and finite, got {bin_spacing_ns} ns"
            )));
        }
        if num_bins == 0 {
            return Err(ChanModelError::InvalidTrace(
                "delay grid needs at least one bin".into(),
            ));
        }
        Ok(Self {
            num_bins,
            bin_spacing_ns,
        })
    }

    pub fn num_bins(&self) -> u32 {
        self.num_bins
    }

    pub fn bin_spacing_ns(&self) -> f64 {
        self.bin_spacing_ns
    }

    /// Reciprocal of the bin spacing.
    pub fn sample_rate(&self) -> f64 {
        1e9 / self.bin_spacing_ns
    }

    /// Largest representable delay: the last bin's position.
    pub fn span_ns(&self) -> f64 {
        (self.num_bins - 1) as f64 * self.bin_spacing_ns
    }
}

/// A time-indexed grid of complex channel taps: the replayable channel.
///
/// Taps are stored step-major (`taps[step * L + bin]`), every entry finite.
/// Immutable after construction; share it freely across workers.
#[derive(Debug, Clone, PartialEq)]
pub struct CirTrace {
    grid: DelayGrid,
    time_step: Duration,
    taps: Vec<Complex32>,
    carrier_freq_hz: f64,
    label: String,
}

impl CirTrace {
    pub fn new(
        grid: DelayGrid,
        time_step: Duration,
        taps: Vec<Complex32>,
        carrier_freq_hz: f64,
        label: String,
    ) -> Result<Self, ChanModelError> {
        if time_step.is_zero() {
            return Err(ChanModelError::InvalidTrace("time step must be > 0".into()));
        }
        let bins = grid.num_bins() as usize;
        if taps.is_empty() || taps.len() % bins != 0 {
            return Err(ChanModelError::InvalidTrace(format!(
                "tap array length {} is not a positive multiple of {} bins",
                taps.len(),
                bins
            )));
        }
        if let Some(idx) = taps.iter().position(|t| !t.re.is_finite() || !t.im.is_finite()) {
            return Err(ChanModelError::InvalidTrace(format!(
                "non-finite tap at flat index {idx}"
            )));
        }
        Ok(Self {
            grid,
            time_step,
            taps,
            carrier_freq_hz,
            label,
        })
    }

    pub fn grid(&self) -> &DelayGrid {
        &self.grid
    }

    pub fn time_step(&self) -> Duration {
        self.time_step
    }

    pub fn num_steps(&self) -> u32 {
        (self.taps.len() / self.grid.num_bins() as usize) as u32
    }

    pub fn num_bins(&self) -> u32 {
        self.grid.num_bins()
    }

    pub fn carrier_freq_hz(&self) -> f64 {
        self.carrier_freq_hz
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn taps_flat(&self) -> &[Complex32] {
        &self.taps
    }

    /// Taps for one step, checked against the trace length.
    pub fn step_taps(&self, step: u32) -> Result<&[Complex32], ChanModelError> {
        let num_steps = self.num_steps();
        if step >= num_steps {
            return Err(ChanModelError::StepOutOfRange { step, num_steps });
        }
        let bins = self.grid.num_bins() as usize;
        let start = step as usize * bins;
        Ok(&self.taps[start..start + bins])
    }

    /// Replay lookup: taps for slot `slot`, wrapping modulo the trace length.
    pub fn taps_at_slot(&self, slot: u64) -> &[Complex32] {
        let step = (slot % u64::from(self.num_steps())) as u32;
        self.step_taps(step).expect("wrapped step is in range")
    }

    /// Total tap power of one step, linear. Summed in f64 from the f32
    /// components to keep the quantization error at storage precision.
    pub fn tap_power_linear(&self, step: u32) -> Result<f64, ChanModelError> {
        Ok(self
            .step_taps(step)?
            .iter()
            .map(|t| {
                let re = f64::from(t.re);
                let im = f64::from(t.im);
                re * re + im * im
            })
            .sum())
    }

    /// Total tap power of one step: `10*log10(sum |h_l|^2)` in dB.
    pub fn tap_power_db(&self, step: u32) -> Result<f64, ChanModelError> {
        Ok(10.0 * self.tap_power_linear(step)?.log10())
    }
}

/// Total tap power of one trace step in dB.
pub fn tap_power_db(trace: &CirTrace, step: u32) -> Result<f64, ChanModelError> {
    trace.tap_power_db(step)
}

/// The top-n dominant taps of one time step: the reduced convolution kernel.
///
/// Entries are sorted by strictly increasing bin index and hold exactly the
/// n largest-magnitude taps of the source step, ties broken toward the
/// smaller bin index. Built by [`crate::conv_engine::select_top_n`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTaps {
    entries: Vec<(u32, Complex32)>,
}

impl SparseTaps {
    /// Assemble from `(bin, gain)` pairs; indices must be strictly increasing.
    pub fn from_entries(entries: Vec<(u32, Complex32)>) -> Result<Self, ChanModelError> {
        if entries.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(ChanModelError::InvalidTrace(
                "sparse tap bins must be strictly increasing".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(u32, Complex32)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of omitted tap magnitudes given the dense source: the factor in
    /// the truncation error bound `||y_full - y_sparse|| <= ||x|| * sum`.
    pub fn omitted_magnitude_sum(&self, dense: &[Complex32]) -> f64 {
        let mut kept = vec![false; dense.len()];
        for &(bin, _) in &self.entries {
            if let Some(flag) = kept.get_mut(bin as usize) {
                *flag = true;
            }
        }
        dense
            .iter()
            .zip(&kept)
            .filter(|(_, &k)| !k)
            .map(|(t, _)| f64::from(t.norm()))
            .sum()
    }
}

#[derive(Deserialize)]
struct PdpProfileFile {
    name: String,
    delays_ns: Vec<f64>,
    powers_db: Vec<f64>,
}

/// A power delay profile: per-path delays and relative powers, the
/// statistical skeleton a fading trace is built from.
///
/// Powers are normalized on load so the linear powers sum to one. Numeric
/// values ship as editable JSON files under `profiles/`, not in code.
#[derive(Debug, Clone, PartialEq)]
pub struct PdpProfile {
    pub name: String,
    /// Path delays in ns, sorted non-decreasing. Not necessarily on-grid.
    pub path_delays_ns: Vec<f64>,
    /// Relative path powers in dB, normalized so linear powers sum to 1.
    pub path_powers_db: Vec<f64>,
    /// Maximum Doppler frequency in Hz; zero freezes the fading.
    pub doppler_hz: f64,
}

impl PdpProfile {
    pub fn new(
        name: String,
        path_delays_ns: Vec<f64>,
        path_powers_db: Vec<f64>,
        doppler_hz: f64,
    ) -> Result<Self, ChanModelError> {
        if path_delays_ns.is_empty() || path_delays_ns.len() != path_powers_db.len() {
            return Err(ChanModelError::InvalidProfile(format!(
                "need equal non-empty delay/power lists, got {}/{}",
                path_delays_ns.len(),
                path_powers_db.len()
            )));
        }
        if path_delays_ns.windows(2).any(|w| w[0] > w[1]) {
            return Err(ChanModelError::InvalidProfile(
                "path delays must be sorted non-decreasing".into(),
            ));
        }
        if path_delays_ns.iter().any(|d| !d.is_finite() || *d < 0.0)
            || path_powers_db.iter().any(|p| !p.is_finite())
        {
            return Err(ChanModelError::InvalidProfile(
                "delays must be finite and non-negative, powers finite".into(),
            ));
        }
        if !(doppler_hz.is_finite() && doppler_hz >= 0.0) {
            return Err(ChanModelError::InvalidProfile(format!(
                "doppler must be finite and >= 0, got {doppler_hz}"
            )));
        }
        let mut profile = Self {
            name,
            path_delays_ns,
            path_powers_db,
            doppler_hz,
        };
        profile.normalize();
        Ok(profile)
    }

    /// Load from a `{name, delays_ns, powers_db}` JSON file. Doppler comes
    /// from the caller (speed or explicit f_d), not the profile file.
    pub fn from_json_file(path: &Path, doppler_hz: f64) -> Result<Self, ChanModelError> {
        let raw = std::fs::read_to_string(path)?;
        let parsed: PdpProfileFile = serde_json::from_str(&raw)?;
        Self::new(parsed.name, parsed.delays_ns, parsed.powers_db, doppler_hz)
    }

    fn normalize(&mut self) {
        let total: f64 = self.linear_powers().iter().sum();
        let offset_db = 10.0 * total.log10();
        for p in &mut self.path_powers_db {
            *p -= offset_db;
        }
    }

    pub fn linear_powers(&self) -> Vec<f64> {
        self.path_powers_db
            .iter()
            .map(|p| 10f64.powf(p / 10.0))
            .collect()
    }

    pub fn num_paths(&self) -> usize {
        self.path_delays_ns.len()
    }

    pub fn max_delay_ns(&self) -> f64 {
        *self
            .path_delays_ns
            .last()
            .expect("profile has at least one path")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_trace() -> CirTrace {
        let grid = DelayGrid::from_sample_rate(1.92e6, 1).unwrap();
        CirTrace::new(
            grid,
            DEFAULT_TIME_STEP,
            vec![Complex32::new(1.0, 0.0)],
            3.5e9,
            "identity".into(),
        )
        .unwrap()
    }

    #[test]
    fn grid_spacing_is_reciprocal_of_rate() {
        let grid = DelayGrid::from_sample_rate(1.92e6, 64).unwrap();
        assert!((grid.bin_spacing_ns() - 520.8333333333333).abs() < 1e-9);
        assert_eq!(grid.num_bins(), 64);
        // and the inverse construction agrees
        let back = DelayGrid::from_spacing_ns(grid.bin_spacing_ns(), 64).unwrap();
        assert!((back.sample_rate() - 1.92e6).abs() < 1e-3);
    }

    #[test]
    fn grid_rejects_zero_bins_and_bad_rates() {
        assert!(DelayGrid::from_sample_rate(1.92e6, 0).is_err());
        assert!(DelayGrid::from_sample_rate(0.0, 4).is_err());
        assert!(DelayGrid::from_spacing_ns(-1.0, 4).is_err());
    }

    #[test]
    fn single_tap_identity_trace() {
        let t = identity_trace();
        assert_eq!(t.num_steps(), 1);
        assert_eq!(t.num_bins(), 1);
        assert_eq!(t.taps_flat(), &[Complex32::new(1.0, 0.0)]);
        // unit gain is 0 dB
        assert!(t.tap_power_db(0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn tap_power_examples() {
        let grid = DelayGrid::from_sample_rate(1.92e6, 2).unwrap();
        let inv_sqrt2 = std::f32::consts::FRAC_1_SQRT_2;
        // two taps each of amplitude 1/sqrt(2) -> total power 1 -> 0 dB
        let t = CirTrace::new(
            grid,
            DEFAULT_TIME_STEP,
            vec![Complex32::new(inv_sqrt2, 0.0), Complex32::new(0.0, inv_sqrt2)],
            0.0,
            String::new(),
        )
        .unwrap();
        assert!(t.tap_power_db(0).unwrap().abs() < 1e-6);

        // [0.6, 0.8i] -> 0.36 + 0.64 = 1 -> 0 dB; [0.3, 0.4i] -> 0.25 -> -6.0206 dB
        let t2 = CirTrace::new(
            grid,
            DEFAULT_TIME_STEP,
            vec![
                Complex32::new(0.6, 0.0),
                Complex32::new(0.0, 0.8),
                Complex32::new(0.3, 0.0),
                Complex32::new(0.0, 0.4),
            ],
            0.0,
            String::new(),
        )
        .unwrap();
        assert!(t2.tap_power_db(0).unwrap().abs() < 1e-6);
        // direct-summation oracle over the f32-quantized taps
        let oracle = {
            let (a, b) = (f64::from(0.3f32), f64::from(0.4f32));
            10.0 * (a * a + b * b).log10()
        };
        assert!((t2.tap_power_db(1).unwrap() - oracle).abs() < 1e-12);
        assert!((oracle + 6.020599913279624).abs() < 1e-6);
    }

    #[test]
    fn step_out_of_range_is_an_error() {
        let t = identity_trace();
        match t.tap_power_db(1) {
            Err(ChanModelError::StepOutOfRange { step: 1, num_steps: 1 }) => {}
            other => panic!("expected StepOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn replay_wraps_modulo_num_steps() {
        let grid = DelayGrid::from_sample_rate(1.92e6, 1).unwrap();
        let taps: Vec<Complex32> = (0..5).map(|i| Complex32::new(i as f32, 0.0)).collect();
        let t = CirTrace::new(grid, DEFAULT_TIME_STEP, taps, 0.0, String::new()).unwrap();
        for slot in 0u64..37 {
            let expect = (slot % 5) as f32;
            assert_eq!(t.taps_at_slot(slot)[0].re, expect, "slot {slot}");
        }
    }

    #[test]
    fn power_scales_by_20_log10_c() {
        let grid = DelayGrid::from_sample_rate(1.92e6, 3).unwrap();
        let base = vec![
            Complex32::new(0.4, -0.1),
            Complex32::new(0.0, 0.7),
            Complex32::new(-0.2, 0.2),
        ];
        let t0 = CirTrace::new(grid, DEFAULT_TIME_STEP, base.clone(), 0.0, String::new()).unwrap();
        // power-of-two scalings are exact in binary floating point
        for c in [0.5f32, 2.0, 4.0, 16.0] {
            let scaled: Vec<Complex32> = base.iter().map(|t| t * c).collect();
            let t1 = CirTrace::new(grid, DEFAULT_TIME_STEP, scaled, 0.0, String::new()).unwrap();
            let diff = t1.tap_power_db(0).unwrap() - t0.tap_power_db(0).unwrap();
            assert!(
                (diff - 20.0 * f64::from(c).log10()).abs() < 1e-9,
                "c={c}: power shift {diff} dB"
            );
        }
        // general scalings are limited by f32 tap rounding
        for c in [3.7f32, 0.137, 11.3] {
            let scaled: Vec<Complex32> = base.iter().map(|t| t * c).collect();
            let t1 = CirTrace::new(grid, DEFAULT_TIME_STEP, scaled, 0.0, String::new()).unwrap();
            let diff = t1.tap_power_db(0).unwrap() - t0.tap_power_db(0).unwrap();
            assert!(
                (diff - 20.0 * f64::from(c).log10()).abs() < 1e-5,
                "c={c}: power shift {diff} dB"
            );
        }
    }

    #[test]
    fn trace_rejects_nan_and_ragged_taps() {
        let grid = DelayGrid::from_sample_rate(1.92e6, 2).unwrap();
        let nan = CirTrace::new(
            grid,
            DEFAULT_TIME_STEP,
            vec![Complex32::new(f32::NAN, 0.0), Complex32::new(0.0, 0.0)],
            0.0,
            String::new(),
        );
        assert!(nan.is_err());
        let ragged = CirTrace::new(
            grid,
            DEFAULT_TIME_STEP,
            vec![Complex32::new(1.0, 0.0); 3],
            0.0,
            String::new(),
        );
        assert!(ragged.is_err());
    }

    #[test]
    fn pdp_normalizes_to_unit_total_power() {
        let p = PdpProfile::new(
            "test".into(),
            vec![0.0, 100.0, 300.0],
            vec![0.0, -3.0, -6.0],
            16.2,
        )
        .unwrap();
        let total: f64 = p.linear_powers().iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "total {total}");
        // relative shape preserved
        let lin = p.linear_powers();
        assert!((lin[0] / lin[1] - 10f64.powf(0.3)).abs() < 1e-9);
    }

    #[test]
    fn pdp_rejects_unsorted_and_mismatched() {
        assert!(PdpProfile::new("x".into(), vec![10.0, 0.0], vec![0.0, 0.0], 0.0).is_err());
        assert!(PdpProfile::new("x".into(), vec![0.0], vec![0.0, -1.0], 0.0).is_err());
        assert!(PdpProfile::new("x".into(), vec![], vec![], 0.0).is_err());
        assert!(PdpProfile::new("x".into(), vec![0.0], vec![0.0], -1.0).is_err());
    }

    #[test]
    fn sparse_taps_require_increasing_bins() {
        let ok = SparseTaps::from_entries(vec![
            (1, Complex32::new(0.9, 0.0)),
            (3, Complex32::new(0.3, 0.0)),
        ]);
        assert!(ok.is_ok());
        let bad = SparseTaps::from_entries(vec![
            (3, Complex32::new(0.3, 0.0)),
            (1, Complex32::new(0.9, 0.0)),
        ]);
        assert!(bad.is_err());
    }
}
