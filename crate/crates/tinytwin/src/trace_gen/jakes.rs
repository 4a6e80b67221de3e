//! Rayleigh fading as a sum of sinusoids with the classical Doppler spectrum.
//!
//! The process is
//!
//! ```text
//! g(t) = (1/sqrt(M)) * sum_m exp(j*(2*pi*f_d*cos(a_m)*t + phi_m))
//! ```
//!
//! with `M` uniformly spaced arrival angles `a_m = (2*pi*m + theta)/M` and
//! i.i.d. random phases `phi_m`. The common rotation `theta` keeps the
//! per-sinusoid Doppler shifts `f_d*cos(a_m)` pairwise distinct, so the
//! time-averaged autocorrelation of a single realization converges to the
//! ensemble value `J0(2*pi*f_d*tau)` instead of fluctuating with the phase
//! draw. Mean power is 1 by construction.

use super::{step_count, TraceGenError};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::TAU;
use std::time::Duration;

/// Default number of sinusoids.
pub const DEFAULT_NUM_SINUSOIDS: usize = 32;

/// Configuration of one fading process.
#[derive(Debug, Clone, PartialEq)]
pub struct JakesConfig {
    /// Maximum Doppler frequency in Hz; zero freezes the process.
    pub doppler_hz: f64,
    /// Number of sinusoids (at least 8).
    pub num_sinusoids: usize,
    pub seed: u64,
    /// Total time covered by the sequence.
    pub duration: Duration,
    /// Sample spacing of the fading sequence.
    pub time_step: Duration,
}

impl JakesConfig {
    /// Config with the default sinusoid count and 1 ms step.
    pub fn new(doppler_hz: f64, seed: u64, duration: Duration) -> Self {
        Self {
            doppler_hz,
            num_sinusoids: DEFAULT_NUM_SINUSOIDS,
            seed,
            duration,
            time_step: crate::chan_model::DEFAULT_TIME_STEP,
        }
    }

    fn validate(&self) -> Result<u32, TraceGenError> {
        if !(self.doppler_hz.is_finite() && self.doppler_hz >= 0.0) {
            return Err(TraceGenError::InvalidConfig(format!(
                "doppler must be finite and >= 0, got {}",
                self.doppler_hz
            )));
        }
        if self.num_sinusoids < 8 {
            return Err(TraceGenError::InvalidConfig(format!(
                "need at least 8 sinusoids, got {}",
                self.num_sinusoids
            )));
        }
        if self.doppler_hz * self.time_step.as_secs_f64() >= 0.5 {
            return Err(TraceGenError::NyquistViolation {
                doppler_hz: self.doppler_hz,
                time_step: self.time_step,
            });
        }
        step_count(self.duration, self.time_step)
    }
}

/// Generate a unit-mean-power complex fading sequence, one gain per time
/// step. Deterministic for a fixed config; zero Doppler yields a constant
/// unit-magnitude phasor.
pub fn gen_jakes_gains(cfg: &JakesConfig) -> Result<Vec<Complex64>, TraceGenError> {
    let steps = cfg.validate()? as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    if cfg.doppler_hz == 0.0 {
        let phase: f64 = rng.gen_range(0.0..TAU);
        return Ok(vec![Complex64::cis(phase); steps]);
    }

    let m = cfg.num_sinusoids;
    let rotation: f64 = rng.gen_range(0.0..TAU);
    let mut omega = Vec::with_capacity(m); // per-sinusoid angular Doppler
    let mut phase = Vec::with_capacity(m);
    for k in 0..m {
        let angle = (TAU * k as f64 + rotation) / m as f64;
        omega.push(TAU * cfg.doppler_hz * angle.cos());
        phase.push(rng.gen_range(0.0..TAU));
    }

    let dt = cfg.time_step.as_secs_f64();
    let scale = 1.0 / (m as f64).sqrt();
    let mut out = Vec::with_capacity(steps);
    for step in 0..steps {
        let t = step as f64 * dt;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..m {
            acc += Complex64::cis(omega[k] * t + phase[k]);
        }
        out.push(acc * scale);
    }
    Ok(out)
}
