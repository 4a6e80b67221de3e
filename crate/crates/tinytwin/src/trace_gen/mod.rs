//! Trace synthesis and import: Rayleigh fading over a power delay profile,
//! periodic SNR sweeps, and gridding of arbitrary-delay path lists.
//!
//! Everything here is a pure function of `(config, seed)`: the same inputs
//! produce a bit-identical trace, so traces can be regenerated instead of
//! archived and runs can be reproduced exactly.

mod build;
mod import;
mod jakes;
mod resample;

pub use build::{
    build_3gpp_trace, build_3gpp_trace_with, gen_periodic_snr_trace, gen_periodic_snr_trace_with,
    TraceBuildOptions,
};
pub use import::{import_csv_paths, import_external_cir, ImportFormat};
pub use jakes::{gen_jakes_gains, JakesConfig};
pub use resample::resample_paths;

use crate::chan_model::ChanModelError;
use num_complex::Complex64;
use std::time::Duration;

/// Default carrier frequency used for Doppler derivation.
pub const DEFAULT_CARRIER_HZ: f64 = 3.5e9;

/// Propagation speed used for Doppler derivation, m/s.
pub const SPEED_OF_LIGHT_M_S: f64 = 3.0e8;

/// One time step's channel as `(delay_ns, complex gain)` pairs — the
/// continuous-delay CIR before it is resampled onto a [`crate::chan_model::DelayGrid`].
pub type PathList = Vec<(f64, Complex64)>;

/// Maximum Doppler shift for a mobile at `speed_kmh` under carrier
/// `carrier_hz`: `f_d = v * f_c / c`.
pub fn doppler_from_speed(speed_kmh: f64, carrier_hz: f64) -> f64 {
    let v = speed_kmh / 3.6;
    v * carrier_hz / SPEED_OF_LIGHT_M_S
}

/// Trace generation errors.
#[derive(Debug, thiserror::Error)]
pub enum TraceGenError {
    #[error(
        "fading process violates Nyquist: f_d {doppler_hz} Hz * step {time_step:?} must be < 0.5"
    )]
    NyquistViolation {
        doppler_hz: f64,
        time_step: Duration,
    },
    #[error("path delay {delay_ns} ns exceeds the grid span of {span_ns} ns")]
    GridTooShort { delay_ns: f64, span_ns: f64 },
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("non-monotonic time at line {line}")]
    NonMonotonicTime { line: u64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Chan(#[from] ChanModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Number of whole time steps in `duration`; at least one full step.
pub(crate) fn step_count(duration: Duration, time_step: Duration) -> Result<u32, TraceGenError> {
    if time_step.is_zero() {
        return Err(TraceGenError::InvalidConfig("time step must be > 0".into()));
    }
    let steps = duration.as_nanos() / time_step.as_nanos();
    if steps == 0 {
        return Err(TraceGenError::InvalidConfig(format!(
            "duration {duration:?} is shorter than one {time_step:?} step"
        )));
    }
    u32::try_from(steps).map_err(|_| {
        TraceGenError::InvalidConfig(format!("{steps} steps exceed the trace step limit"))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn doppler_from_speed_matches_reference_speeds() {
        // 60 km/h and 5 km/h at 3.5 GHz
        let fast = doppler_from_speed(60.0, DEFAULT_CARRIER_HZ);
        let slow = doppler_from_speed(5.0, DEFAULT_CARRIER_HZ);
        assert!((fast - 194.4).abs() < 0.1, "fast {fast}");
        assert!((slow - 16.2).abs() < 0.01, "slow {slow}");
    }

    #[test]
    fn step_count_floors_and_rejects_short_durations() {
        let ms = Duration::from_millis(1);
        assert_eq!(step_count(Duration::from_millis(10), ms).unwrap(), 10);
        assert_eq!(step_count(Duration::from_micros(1500), ms).unwrap(), 1);
        assert!(step_count(Duration::from_micros(900), ms).is_err());
    }
}
