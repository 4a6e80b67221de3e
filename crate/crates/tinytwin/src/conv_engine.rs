//! Streaming time-varying FIR convolution of IQ slots against CIR taps.
//!
//! The channel is applied per slot: `y[k] = sum_l h[l] * x[k-l]` where the
//! input is the current slot with the previous slot's last `L-1` samples
//! prepended ([`ConvState`]). Concatenating slot-wise outputs therefore
//! equals convolving the whole stream in one shot, for any slot partition.
//!
//! Taps are constant within a slot and switch at slot boundaries, matching
//! the 1 ms resolution of CIR traces. The sparse path convolves only the
//! top-n dominant taps but keeps the full-length state, so switching between
//! sparse and full mid-stream stays consistent.
//!
//! Accumulation runs in f64, taps in ascending bin order; the sparse path
//! with n = L is bit-identical to the full path.

use crate::chan_model::SparseTaps;
use num_complex::Complex32;
use rand::distributions::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Convolution and noise errors.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ConvError {
    #[error("state tail of {state_len} samples does not match {num_taps} taps")]
    TapLengthMismatch { state_len: usize, num_taps: usize },
    #[error("noise power must be > 0")]
    NonPositiveNoise,
}

/// Link direction of an IQ frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Downlink,
    Uplink,
}

impl Direction {
    fn seed_tag(self) -> u64 {
        match self {
            Direction::Downlink => 0x444c,
            Direction::Uplink => 0x554c,
        }
    }
}

/// One slot of complex baseband samples with its slot index and UE identity.
#[derive(Debug, Clone, PartialEq)]
pub struct IqFrame {
    pub slot_index: u64,
    pub ue_id: u32,
    pub direction: Direction,
    pub samples: Vec<Complex32>,
}

impl IqFrame {
    pub fn new(slot_index: u64, ue_id: u32, direction: Direction, samples: Vec<Complex32>) -> Self {
        Self {
            slot_index,
            ue_id,
            direction,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean per-sample power.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples
            .iter()
            .map(|s| f64::from(s.norm_sqr()))
            .sum::<f64>()
            / self.samples.len() as f64
    }
}

/// Cross-slot convolution state: the last `L-1` input samples seen.
///
/// Zero-initialized at stream start; one state per UE per direction, owned
/// by exactly one worker.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvState {
    tail: Vec<Complex32>,
}

impl ConvState {
    /// Fresh (all-zero) state for a channel with `num_taps` taps.
    pub fn new(num_taps: usize) -> Self {
        Self {
            tail: vec![Complex32::new(0.0, 0.0); num_taps.saturating_sub(1)],
        }
    }

    pub fn tail(&self) -> &[Complex32] {
        &self.tail
    }

    fn check(&self, num_taps: usize) -> Result<(), ConvError> {
        if self.tail.len() + 1 != num_taps {
            return Err(ConvError::TapLengthMismatch {
                state_len: self.tail.len(),
                num_taps,
            });
        }
        Ok(())
    }

    /// Retain the last `L-1` samples of (tail ++ frame).
    fn advance(&mut self, frame: &[Complex32]) {
        let keep = self.tail.len();
        if keep == 0 {
            return;
        }
        if frame.len() >= keep {
            self.tail.copy_from_slice(&frame[frame.len() - keep..]);
        } else {
            self.tail.rotate_left(frame.len());
            let start = keep - frame.len();
            self.tail[start..].copy_from_slice(frame);
        }
    }
}

/// Shared inner loop: accumulate `gain * ext[k + offset - bin]` over the
/// given `(bin, gain)` pairs, ascending bin order, f64 accumulators.
fn accumulate(
    ext: &[Complex32],
    entries: impl Iterator<Item = (usize, Complex32)>,
    num_taps: usize,
    out_len: usize,
) -> Vec<Complex32> {
    let offset = num_taps - 1;
    let mut acc_re = vec![0.0f64; out_len];
    let mut acc_im = vec![0.0f64; out_len];
    for (bin, gain) in entries {
        let g_re = f64::from(gain.re);
        let g_im = f64::from(gain.im);
        let window = &ext[offset - bin..offset - bin + out_len];
        for (k, x) in window.iter().enumerate() {
            let x_re = f64::from(x.re);
            let x_im = f64::from(x.im);
            acc_re[k] += g_re * x_re - g_im * x_im;
            acc_im[k] += g_re * x_im + g_im * x_re;
        }
    }
    acc_re
        .into_iter()
        .zip(acc_im)
        .map(|(re, im)| Complex32::new(re as f32, im as f32))
        .collect()
}

fn extend_with_tail(state: &ConvState, samples: &[Complex32]) -> Vec<Complex32> {
    let mut ext = Vec::with_capacity(state.tail.len() + samples.len());
    ext.extend_from_slice(&state.tail);
    ext.extend_from_slice(samples);
    ext
}

/// Convolve one slot against the full tap vector, carrying state across
/// slots. Output length equals input length; the state is advanced to hold
/// the last `L-1` input samples.
pub fn convolve_full(
    frame: &IqFrame,
    taps: &[Complex32],
    state: &mut ConvState,
) -> Result<IqFrame, ConvError> {
    state.check(taps.len())?;
    let ext = extend_with_tail(state, &frame.samples);
    let out = accumulate(
        &ext,
        taps.iter().copied().enumerate(),
        taps.len(),
        frame.samples.len(),
    );
    state.advance(&frame.samples);
    Ok(IqFrame::new(frame.slot_index, frame.ue_id, frame.direction, out))
}

/// Keep the `min(n, L)` largest-magnitude taps, ties broken toward the
/// smaller bin index; entries come back sorted by bin.
pub fn select_top_n(taps: &[Complex32], n: usize) -> SparseTaps {
    let mut order: Vec<usize> = (0..taps.len()).collect();
    // stable sort by descending magnitude keeps earlier bins first on ties
    order.sort_by(|&a, &b| {
        taps[b]
            .norm_sqr()
            .partial_cmp(&taps[a].norm_sqr())
            .expect("finite taps")
    });
    let mut kept: Vec<usize> = order.into_iter().take(n.min(taps.len())).collect();
    kept.sort_unstable();
    SparseTaps::from_entries(kept.into_iter().map(|i| (i as u32, taps[i])).collect())
        .expect("indices are sorted and unique")
}

/// Convolve one slot against a sparse tap set. The state is full-length
/// (sized for the dense tap count) and advances exactly as in
/// [`convolve_full`], so sparse and full calls can interleave freely.
pub fn convolve_sparse(
    frame: &IqFrame,
    sparse: &SparseTaps,
    state: &mut ConvState,
) -> Result<IqFrame, ConvError> {
    let num_taps = state.tail.len() + 1;
    if let Some(&(bin, _)) = sparse.entries().last() {
        if bin as usize >= num_taps {
            return Err(ConvError::TapLengthMismatch {
                state_len: state.tail.len(),
                num_taps: bin as usize + 1,
            });
        }
    }
    let ext = extend_with_tail(state, &frame.samples);
    let out = accumulate(
        &ext,
        sparse.entries().iter().map(|&(b, g)| (b as usize, g)),
        num_taps,
        frame.samples.len(),
    );
    state.advance(&frame.samples);
    Ok(IqFrame::new(frame.slot_index, frame.ue_id, frame.direction, out))
}

/// Channel-defined SNR: `10*log10(sum |h_l|^2 * P_sig / P_noise)`.
pub fn channel_snr_db(
    taps: &[Complex32],
    signal_power: f64,
    noise_power: f64,
) -> Result<f64, ConvError> {
    if !(noise_power > 0.0) {
        return Err(ConvError::NonPositiveNoise);
    }
    let gain: f64 = taps
        .iter()
        .map(|t| {
            let re = f64::from(t.re);
            let im = f64::from(t.im);
            re * re + im * im
        })
        .sum();
    Ok(10.0 * (gain * signal_power / noise_power).log10())
}

/// Per-slot SNR of a convolved frame. The value is defined by the channel
/// taps and configured powers, not estimated from the samples; the frame
/// argument only ties the measurement to a slot.
pub fn slot_snr_db(
    _frame_out: &IqFrame,
    taps: &[Complex32],
    signal_power: f64,
    noise_power: f64,
) -> Result<f64, ConvError> {
    channel_snr_db(taps, signal_power, noise_power)
}

/// Add circularly symmetric complex Gaussian noise of the given power per
/// complex sample. Deterministic for a fixed `(seed, slot, ue, direction)`;
/// zero power returns the frame unchanged.
pub fn add_awgn(frame: &IqFrame, noise_power: f64, seed: u64) -> IqFrame {
    if noise_power <= 0.0 {
        return frame.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(crate::util::mix_seed(
        seed,
        frame.slot_index,
        u64::from(frame.ue_id),
        frame.direction.seed_tag(),
    ));
    let sigma = (noise_power / 2.0).sqrt();
    let normal = rand::distributions::Uniform::new(0.0f64, 1.0f64);
    // Box-Muller keeps the dependency surface small and is plenty fast here.
    let gauss = move |rng: &mut ChaCha8Rng| {
        let u1: f64 = normal.sample(rng).max(1e-300);
        let u2: f64 = normal.sample(rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * theta.cos(), r * theta.sin())
    };
    let samples = frame
        .samples
        .iter()
        .map(|s| {
            let (a, b) = gauss(&mut rng);
            Complex32::new(
                s.re + (sigma * a) as f32,
                s.im + (sigma * b) as f32,
            )
        })
        .collect();
    IqFrame::new(frame.slot_index, frame.ue_id, frame.direction, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::Rng;

    fn frame(samples: Vec<Complex32>) -> IqFrame {
        IqFrame::new(0, 0, Direction::Downlink, samples)
    }

    fn c(re: f32, im: f32) -> Complex32 {
        Complex32::new(re, im)
    }

    /// Brute-force oracle: one-shot O(N*L) linear convolution of the whole
    /// signal in f64, truncated to the input length.
    fn brute_force_convolve(input: &[Complex32], taps: &[Complex32]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); input.len()];
        for (k, slot) in out.iter_mut().enumerate() {
            for (l, h) in taps.iter().enumerate() {
                if k >= l {
                    let x = input[k - l];
                    *slot += Complex64::new(f64::from(h.re), f64::from(h.im))
                        * Complex64::new(f64::from(x.re), f64::from(x.im));
                }
            }
        }
        out
    }

    fn rel_rms(actual: &[Complex32], expected: &[Complex64]) -> f64 {
        let mut err = 0.0;
        let mut norm = 0.0;
        for (a, e) in actual.iter().zip(expected) {
            let d = Complex64::new(f64::from(a.re), f64::from(a.im)) - e;
            err += d.norm_sqr();
            norm += e.norm_sqr();
        }
        if norm == 0.0 {
            err.sqrt()
        } else {
            (err / norm).sqrt()
        }
    }

    fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex32> {
        (0..n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn identity_tap_passes_frame_through() {
        let mut state = ConvState::new(1);
        let input = frame(vec![c(1.0, 2.0), c(-0.5, 0.25)]);
        let out = convolve_full(&input, &[c(1.0, 0.0)], &mut state).unwrap();
        assert_eq!(out.samples, input.samples);
        assert!(state.tail().is_empty());
    }

    #[test]
    fn pure_delay_shifts_and_carries_tail() {
        let mut state = ConvState::new(2);
        let input = frame(vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]);
        let taps = [c(0.0, 0.0), c(1.0, 0.0)];
        let out = convolve_full(&input, &taps, &mut state).unwrap();
        assert_eq!(out.samples, vec![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)]);
        assert_eq!(state.tail(), &[c(3.0, 0.0)]);
        // the carried tail feeds the next slot
        let next = frame(vec![c(4.0, 0.0)]);
        let out2 = convolve_full(&next, &taps, &mut state).unwrap();
        assert_eq!(out2.samples, vec![c(3.0, 0.0)]);
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let mut state = ConvState::new(4);
        let input = frame(vec![c(1.0, 0.0)]);
        match convolve_full(&input, &[c(1.0, 0.0)], &mut state) {
            Err(ConvError::TapLengthMismatch { state_len: 3, num_taps: 1 }) => {}
            other => panic!("expected TapLengthMismatch, got {other:?}"),
        }
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let input = random_signal(&mut rng, 1024);
        let taps = random_signal(&mut rng, 20);
        let expected = brute_force_convolve(&input, &taps);
        let mut state = ConvState::new(taps.len());
        let out = convolve_full(&frame(input), &taps, &mut state).unwrap();
        let err = rel_rms(&out.samples, &expected);
        assert!(err < 1e-5, "relative RMS {err}");
    }

    #[test]
    fn slot_streaming_equals_one_shot_for_any_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for case in 0..20 {
            let n = rng.gen_range(64..512);
            let l = rng.gen_range(1..32);
            let input = random_signal(&mut rng, n);
            let taps = random_signal(&mut rng, l);
            let expected = brute_force_convolve(&input, &taps);

            let mut state = ConvState::new(l);
            let mut streamed = Vec::new();
            let mut pos = 0;
            while pos < n {
                let take = rng.gen_range(1..=(n - pos).min(97));
                let slot = frame(input[pos..pos + take].to_vec());
                streamed.extend(convolve_full(&slot, &taps, &mut state).unwrap().samples);
                pos += take;
            }
            let err = rel_rms(&streamed, &expected);
            assert!(err < 1e-6, "case {case}: relative RMS {err}");
        }
    }

    #[test]
    fn linearity_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let x1 = random_signal(&mut rng, 256);
        let x2 = random_signal(&mut rng, 256);
        let taps = random_signal(&mut rng, 12);
        let (a, b) = (c(0.3, -0.7), c(-1.1, 0.2));

        let combo: Vec<Complex32> = x1.iter().zip(&x2).map(|(p, q)| a * p + b * q).collect();
        let run = |sig: Vec<Complex32>| {
            let mut st = ConvState::new(taps.len());
            convolve_full(&frame(sig), &taps, &mut st).unwrap().samples
        };
        let y_combo = run(combo);
        let y1 = run(x1);
        let y2 = run(x2);
        let expected: Vec<Complex64> = y1
            .iter()
            .zip(&y2)
            .map(|(p, q)| {
                let p = Complex64::new(f64::from(p.re), f64::from(p.im));
                let q = Complex64::new(f64::from(q.re), f64::from(q.im));
                Complex64::new(f64::from(a.re), f64::from(a.im)) * p
                    + Complex64::new(f64::from(b.re), f64::from(b.im)) * q
            })
            .collect();
        let err = rel_rms(&y_combo, &expected);
        assert!(err < 1e-5, "relative RMS {err}");
    }

    #[test]
    fn select_top_n_picks_largest_magnitudes() {
        let taps = [c(0.1, 0.0), c(0.9, 0.0), c(0.05, 0.0), c(0.3, 0.0)];
        let sparse = select_top_n(&taps, 2);
        assert_eq!(sparse.entries(), &[(1, c(0.9, 0.0)), (3, c(0.3, 0.0))]);
    }

    #[test]
    fn select_top_n_tie_breaks_toward_smaller_bin() {
        let taps = [
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(0.5, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.0),
            c(0.0, 0.5),
        ];
        let sparse = select_top_n(&taps, 1);
        assert_eq!(sparse.entries(), &[(2, c(0.5, 0.0))]);
    }

    #[test]
    fn select_top_n_with_n_at_least_l_returns_all() {
        let taps = [c(0.1, 0.0), c(0.0, 0.0), c(0.3, 0.0)];
        let sparse = select_top_n(&taps, 10);
        assert_eq!(
            sparse.entries(),
            &[(0, c(0.1, 0.0)), (1, c(0.0, 0.0)), (2, c(0.3, 0.0))]
        );
    }

    #[test]
    fn sparse_with_all_taps_is_bit_identical_to_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let input = random_signal(&mut rng, 300);
        let taps = random_signal(&mut rng, 24);
        let sparse = select_top_n(&taps, taps.len());

        let mut st_full = ConvState::new(taps.len());
        let mut st_sparse = ConvState::new(taps.len());
        for chunk in input.chunks(100) {
            let f = frame(chunk.to_vec());
            let a = convolve_full(&f, &taps, &mut st_full).unwrap();
            let b = convolve_sparse(&f, &sparse, &mut st_sparse).unwrap();
            for (x, y) in a.samples.iter().zip(&b.samples) {
                assert_eq!(x.re.to_bits(), y.re.to_bits());
                assert_eq!(x.im.to_bits(), y.im.to_bits());
            }
        }
        assert_eq!(st_full, st_sparse);
    }

    #[test]
    fn empty_sparse_set_yields_zeros() {
        let mut state = ConvState::new(5);
        let input = frame(vec![c(1.0, 1.0); 16]);
        let sparse = SparseTaps::from_entries(vec![]).unwrap();
        let out = convolve_sparse(&input, &sparse, &mut state).unwrap();
        assert!(out.samples.iter().all(|s| s.re == 0.0 && s.im == 0.0));
        // state still advances so a later full call stays consistent
        assert_eq!(state.tail(), &input.samples[16 - 4..]);
    }

    #[test]
    fn sparse_error_obeys_truncation_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for case in 0..50 {
            let n = rng.gen_range(64..256);
            let l = rng.gen_range(4..32);
            let keep = l - 3.min(l - 1);
            let input = random_signal(&mut rng, n);
            let taps = random_signal(&mut rng, l);
            let sparse = select_top_n(&taps, keep);

            let mut st_full = ConvState::new(l);
            let mut st_sparse = ConvState::new(l);
            let f = frame(input.clone());
            let y_full = convolve_full(&f, &taps, &mut st_full).unwrap();
            let y_sparse = convolve_sparse(&f, &sparse, &mut st_sparse).unwrap();

            let err: f64 = y_full
                .samples
                .iter()
                .zip(&y_sparse.samples)
                .map(|(a, b)| {
                    let d = Complex64::new(f64::from(a.re - b.re), f64::from(a.im - b.im));
                    d.norm_sqr()
                })
                .sum::<f64>()
                .sqrt();
            let ext_norm: f64 = st_full
                .tail()
                .iter()
                .chain(input.iter())
                .map(|s| f64::from(s.norm_sqr()))
                .sum::<f64>()
                .sqrt();
            let bound = ext_norm * sparse.omitted_magnitude_sum(&taps);
            assert!(
                err <= bound * (1.0 + 1e-6) + 1e-9,
                "case {case}: error {err} exceeds bound {bound}"
            );
        }
    }

    #[test]
    fn sparse_rejects_bins_beyond_state() {
        let mut state = ConvState::new(3);
        let sparse = SparseTaps::from_entries(vec![(5, c(1.0, 0.0))]).unwrap();
        let input = frame(vec![c(1.0, 0.0); 8]);
        assert!(matches!(
            convolve_sparse(&input, &sparse, &mut state),
            Err(ConvError::TapLengthMismatch { .. })
        ));
    }

    #[test]
    fn snr_examples() {
        let f = frame(vec![c(1.0, 0.0)]);
        // |h|^2 = 1, P_sig = P_noise -> 0 dB
        let snr = slot_snr_db(&f, &[c(1.0, 0.0)], 1.0, 1.0).unwrap();
        assert!(snr.abs() < 1e-12);
        // doubling taps adds 20*log10(2) dB (x2 is exact in binary fp)
        let base = slot_snr_db(&f, &[c(0.3, 0.4)], 1.0, 0.1).unwrap();
        let doubled = slot_snr_db(&f, &[c(0.6, 0.8)], 1.0, 0.1).unwrap();
        assert!((doubled - base - 6.020599913279624).abs() < 1e-9);
        // [0.6, 0.8i] with P_sig/P_noise = 100 -> 20 dB (f32 tap rounding)
        let snr = slot_snr_db(&f, &[c(0.6, 0.0), c(0.0, 0.8)], 100.0, 1.0).unwrap();
        assert!((snr - 20.0).abs() < 1e-6);
        assert_eq!(
            slot_snr_db(&f, &[c(1.0, 0.0)], 1.0, 0.0),
            Err(ConvError::NonPositiveNoise)
        );
    }

    #[test]
    fn awgn_zero_power_is_identity_and_seeds_are_deterministic() {
        let f = IqFrame::new(42, 3, Direction::Uplink, vec![c(1.0, -1.0); 64]);
        assert_eq!(add_awgn(&f, 0.0, 9).samples, f.samples);
        let a = add_awgn(&f, 0.01, 9);
        let b = add_awgn(&f, 0.01, 9);
        assert_eq!(a.samples, b.samples);
        // different slot, ue, or direction decorrelates the noise
        let g = IqFrame::new(43, 3, Direction::Uplink, f.samples.clone());
        assert_ne!(add_awgn(&g, 0.01, 9).samples, a.samples);
        let h = IqFrame::new(42, 3, Direction::Downlink, f.samples.clone());
        assert_ne!(add_awgn(&h, 0.01, 9).samples, a.samples);
    }

    #[test]
    fn awgn_sample_variance_matches_requested_power() {
        let n = 1_000_000;
        let f = IqFrame::new(0, 0, Direction::Downlink, vec![c(0.0, 0.0); n]);
        let noisy = add_awgn(&f, 0.01, 1234);
        let power: f64 = noisy
            .samples
            .iter()
            .map(|s| f64::from(s.norm_sqr()))
            .sum::<f64>()
            / n as f64;
        assert!(
            (power - 0.01).abs() < 0.01 * 0.02,
            "measured noise power {power}"
        );
    }

    #[test]
    fn taps_switch_exactly_at_slot_boundaries() {
        // piecewise-constant channel: slot 0 uses h=[1], slot 1 uses h=[2]
        let mut state = ConvState::new(1);
        let s0 = frame(vec![c(1.0, 0.0); 4]);
        let y0 = convolve_full(&s0, &[c(1.0, 0.0)], &mut state).unwrap();
        let y1 = convolve_full(&s0, &[c(2.0, 0.0)], &mut state).unwrap();
        assert!(y0.samples.iter().all(|s| s.re == 1.0));
        assert!(y1.samples.iter().all(|s| s.re == 2.0));
    }
}
