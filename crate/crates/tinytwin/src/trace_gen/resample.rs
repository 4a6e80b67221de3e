//! Gridding of continuous-delay path lists.
//!
//! A path at fractional bin position `idx + frac` splits linearly between the
//! two adjacent bins with weights `(1-frac, frac)`. The split preserves each
//! path's total complex gain exactly and its first delay moment to rounding;
//! it does not smear energy across the grid, so sparse channels stay sparse.

use super::{PathList, TraceGenError};
use crate::chan_model::DelayGrid;
use num_complex::Complex64;

// Fractional positions this close to a bin snap onto it, absorbing float
// noise from delay arithmetic.
const SNAP_EPS: f64 = 1e-9;

/// Place every `(delay_ns, gain)` path of one time step onto the grid,
/// accumulating contributions that land in the same bin.
pub fn resample_paths(paths: &PathList, grid: &DelayGrid) -> Result<Vec<Complex64>, TraceGenError> {
    let bins = grid.num_bins() as usize;
    let mut taps = vec![Complex64::new(0.0, 0.0); bins];
    for &(delay_ns, gain) in paths {
        if !delay_ns.is_finite() || delay_ns < 0.0 {
            return Err(TraceGenError::InvalidConfig(format!(
                "path delay must be finite and >= 0, got {delay_ns} ns"
            )));
        }
        if !gain.re.is_finite() || !gain.im.is_finite() {
            return Err(TraceGenError::InvalidConfig(
                "path gain must be finite".into(),
            ));
        }
        let position = delay_ns / grid.bin_spacing_ns();
        if position > (bins - 1) as f64 + SNAP_EPS {
            return Err(TraceGenError::GridTooShort {
                delay_ns,
                span_ns: grid.span_ns(),
            });
        }
        let mut idx = position.floor() as usize;
        let mut frac = position - idx as f64;
        if frac < SNAP_EPS {
            frac = 0.0;
        } else if frac > 1.0 - SNAP_EPS {
            idx += 1;
            frac = 0.0;
        }
        idx = idx.min(bins - 1);
        taps[idx] += gain * (1.0 - frac);
        if frac > 0.0 {
            taps[idx + 1] += gain * frac;
        }
    }
    Ok(taps)
}
