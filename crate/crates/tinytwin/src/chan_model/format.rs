//! The CIRT trace file format.
//!
//! Little-endian layout:
//!
//! ```text
//! offset  field
//!      0  magic "CIRT" (4 bytes)
//!      4  version        u16  = 1
//!      6  flags          u16  = 0
//!      8  num_steps      u32
//!     12  num_bins       u32
//!     16  bin_spacing_ns f64
//!     24  time_step_us   f64
//!     32  carrier_freq_hz f64
//!     40  label_len      u16
//!     42  label          UTF-8 bytes
//!      .  payload        num_steps x num_bins x (f32 re, f32 im), step-major
//! ```
//!
//! `write_trace` followed by `load_trace` reproduces the trace bit for bit.
//! An optional `<name>.meta.json` sidecar mirrors the header fields for
//! human inspection; it is never read back.

use super::{ChanModelError, CirTrace, DelayGrid};
use num_complex::Complex32;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

pub const CIRT_MAGIC: [u8; 4] = *b"CIRT";
pub const CIRT_VERSION: u16 = 1;

const FIXED_HEADER_LEN: u64 = 42;

fn duration_to_us(d: Duration) -> f64 {
    d.as_nanos() as f64 / 1000.0
}

fn duration_from_us(us: f64) -> Duration {
    Duration::from_nanos((us * 1000.0).round() as u64)
}

/// Write the bit-exact CIRT encoding of `trace` to `path`.
///
/// The trace is validated before any bytes are written; a non-finite tap
/// rejects the whole write.
pub fn write_trace(trace: &CirTrace, path: &Path) -> Result<(), ChanModelError> {
    let bins = trace.num_bins();
    let label = trace.label().as_bytes();
    if label.len() > usize::from(u16::MAX) {
        return Err(ChanModelError::InvalidTrace(format!(
            "label of {} bytes exceeds the u16 length field",
            label.len()
        )));
    }
    let payload_start = FIXED_HEADER_LEN + label.len() as u64;
    for (idx, tap) in trace.taps_flat().iter().enumerate() {
        if !tap.re.is_finite() || !tap.im.is_finite() {
            return Err(ChanModelError::NonFiniteTap {
                step: (idx as u32) / bins,
                bin: (idx as u32) % bins,
                offset: payload_start + idx as u64 * 8,
            });
        }
    }

    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(&CIRT_MAGIC)?;
    out.write_all(&CIRT_VERSION.to_le_bytes())?;
    out.write_all(&0u16.to_le_bytes())?; // flags
    out.write_all(&trace.num_steps().to_le_bytes())?;
    out.write_all(&bins.to_le_bytes())?;
    out.write_all(&trace.grid().bin_spacing_ns().to_le_bytes())?;
    out.write_all(&duration_to_us(trace.time_step()).to_le_bytes())?;
    out.write_all(&trace.carrier_freq_hz().to_le_bytes())?;
    out.write_all(&(label.len() as u16).to_le_bytes())?;
    out.write_all(label)?;
    for tap in trace.taps_flat() {
        out.write_all(&tap.re.to_le_bytes())?;
        out.write_all(&tap.im.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Write the `<name>.meta.json` sidecar next to a trace file and return its
/// path. Contents mirror the CIRT header.
pub fn write_meta_sidecar(trace: &CirTrace, trace_path: &Path) -> Result<PathBuf, ChanModelError> {
    let meta = serde_json::json!({
        "magic": "CIRT",
        "version": CIRT_VERSION,
        "num_steps": trace.num_steps(),
        "num_bins": trace.num_bins(),
        "bin_spacing_ns": trace.grid().bin_spacing_ns(),
        "sample_rate_hz": trace.grid().sample_rate(),
        "time_step_us": duration_to_us(trace.time_step()),
        "carrier_freq_hz": trace.carrier_freq_hz(),
        "label": trace.label(),
    });
    let sidecar = trace_path.with_extension("meta.json");
    std::fs::write(&sidecar, format!("{:#}\n", meta))?;
    Ok(sidecar)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: u64,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ChanModelError> {
        if self.buf.len() < n {
            return Err(ChanModelError::Truncated {
                offset: self.pos + self.buf.len() as u64,
            });
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        self.pos += n as u64;
        Ok(head)
    }

    fn u16(&mut self) -> Result<u16, ChanModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, ChanModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ChanModelError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Load a CIRT trace file, rejecting malformed or truncated payloads with
/// the byte offset of the problem.
pub fn load_trace(path: &Path) -> Result<CirTrace, ChanModelError> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    parse_trace(&raw)
}

/// Parse a CIRT image from memory; see [`load_trace`].
pub fn parse_trace(raw: &[u8]) -> Result<CirTrace, ChanModelError> {
    let mut cur = Cursor { buf: raw, pos: 0 };

    let magic_off = cur.pos;
    let magic = cur.take(4)?;
    if magic != CIRT_MAGIC {
        return Err(ChanModelError::BadMagic { offset: magic_off });
    }
    let version_off = cur.pos;
    let version = cur.u16()?;
    if version != CIRT_VERSION {
        return Err(ChanModelError::UnsupportedVersion {
            version,
            offset: version_off,
        });
    }
    let flags_off = cur.pos;
    let flags = cur.u16()?;
    if flags != 0 {
        return Err(ChanModelError::InvalidHeader {
            field: "flags",
            offset: flags_off,
            reason: format!("unknown flags 0x{flags:04x}"),
        });
    }
    let steps_off = cur.pos;
    let num_steps = cur.u32()?;
    let bins_off = cur.pos;
    let num_bins = cur.u32()?;
    let spacing_off = cur.pos;
    let bin_spacing_ns = cur.f64()?;
    let step_off = cur.pos;
    let time_step_us = cur.f64()?;
    let carrier_off = cur.pos;
    let carrier_freq_hz = cur.f64()?;
    let label_len = cur.u16()?;

    if num_steps == 0 {
        return Err(ChanModelError::InvalidHeader {
            field: "num_steps",
            offset: steps_off,
            reason: "zero steps".into(),
        });
    }
    if num_bins == 0 {
        return Err(ChanModelError::InvalidHeader {
            field: "num_bins",
            offset: bins_off,
            reason: "zero bins".into(),
        });
    }
    if !(bin_spacing_ns.is_finite() && bin_spacing_ns > 0.0) {
        return Err(ChanModelError::InvalidHeader {
            field: "bin_spacing_ns",
            offset: spacing_off,
            reason: format!("must be positive and finite, got {bin_spacing_ns}"),
        });
    }
    if !(time_step_us.is_finite() && time_step_us > 0.0) {
        return Err(ChanModelError::InvalidHeader {
            field: "time_step_us",
            offset: step_off,
            reason: format!("must be positive and finite, got {time_step_us}"),
        });
    }
    if !(carrier_freq_hz.is_finite() && carrier_freq_hz >= 0.0) {
        return Err(ChanModelError::InvalidHeader {
            field: "carrier_freq_hz",
            offset: carrier_off,
            reason: format!("must be finite and >= 0, got {carrier_freq_hz}"),
        });
    }

    let label_off = cur.pos;
    let label_bytes = cur.take(usize::from(label_len))?;
    let label = std::str::from_utf8(label_bytes)
        .map_err(|e| ChanModelError::InvalidHeader {
            field: "label",
            offset: label_off,
            reason: e.to_string(),
        })?
        .to_owned();

    let expected = u64::from(num_steps) * u64::from(num_bins) * 8;
    let payload_start = cur.pos;
    if (cur.buf.len() as u64) < expected {
        return Err(ChanModelError::Truncated {
            offset: payload_start + cur.buf.len() as u64,
        });
    }
    if (cur.buf.len() as u64) > expected {
        return Err(ChanModelError::InvalidHeader {
            field: "payload",
            offset: payload_start + expected,
            reason: format!("{} trailing bytes", cur.buf.len() as u64 - expected),
        });
    }

    let count = (num_steps as usize) * (num_bins as usize);
    let mut taps = Vec::with_capacity(count);
    for i in 0..count {
        let bytes = cur.take(8).expect("length verified above");
        let re = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
        let im = f32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if !re.is_finite() || !im.is_finite() {
            return Err(ChanModelError::NonFiniteTap {
                step: (i as u32) / num_bins,
                bin: (i as u32) % num_bins,
                offset: payload_start + i as u64 * 8,
            });
        }
        taps.push(Complex32::new(re, im));
    }

    let grid = DelayGrid::from_spacing_ns(bin_spacing_ns, num_bins)?;
    CirTrace::new(
        grid,
        duration_from_us(time_step_us),
        taps,
        carrier_freq_hz,
        label,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chan_model::DEFAULT_TIME_STEP;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_trace(steps: u32, bins: u32, seed: u64) -> CirTrace {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let taps: Vec<Complex32> = (0..steps * bins)
            .map(|_| Complex32::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let grid = DelayGrid::from_sample_rate(1.92e6, bins).unwrap();
        CirTrace::new(grid, DEFAULT_TIME_STEP, taps, 3.5e9, "rand".into()).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.cirt");
        let trace = random_trace(17, 9, 42);
        write_trace(&trace, &path).unwrap();
        let loaded = load_trace(&path).unwrap();
        assert_eq!(trace, loaded);
        // and the on-disk image re-encodes identically
        let bytes = std::fs::read(&path).unwrap();
        let path2 = dir.path().join("t2.cirt");
        write_trace(&loaded, &path2).unwrap();
        assert_eq!(bytes, std::fs::read(&path2).unwrap());
    }

    #[test]
    fn file_size_is_header_plus_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("size.cirt");
        let trace = random_trace(1000, 20, 7);
        write_trace(&trace, &path).unwrap();
        let expected = 42 + "rand".len() as u64 + 1000 * 20 * 8;
        assert_eq!(std::fs::metadata(&path).unwrap().len(), expected);
    }

    #[test]
    fn bad_magic_names_offset_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cirt");
        let trace = random_trace(2, 2, 1);
        write_trace(&trace, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0..4].copy_from_slice(b"XXXX");
        std::fs::write(&path, &bytes).unwrap();
        match load_trace(&path) {
            Err(ChanModelError::BadMagic { offset: 0 }) => {}
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn unsupported_version_rejected() {
        let trace = random_trace(2, 2, 1);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.cirt");
        write_trace(&trace, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[4] = 9;
        match parse_trace(&bytes) {
            Err(ChanModelError::UnsupportedVersion { version: 9, offset: 4 }) => {}
            other => panic!("expected UnsupportedVersion, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_names_offset() {
        let trace = random_trace(4, 4, 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.cirt");
        write_trace(&trace, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        let cut = bytes.len() - 5;
        match parse_trace(&bytes[..cut]) {
            Err(ChanModelError::Truncated { offset }) => {
                assert_eq!(offset, cut as u64);
            }
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn truncated_header_detected() {
        match parse_trace(b"CIRT\x01\x00") {
            Err(ChanModelError::Truncated { .. }) => {}
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_tap_rejected_on_load() {
        let trace = random_trace(2, 2, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.cirt");
        write_trace(&trace, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        let payload_start = 42 + "rand".len();
        // corrupt the imaginary part of step 1, bin 0 with a NaN pattern
        let off = payload_start + 2 * 8 + 4;
        bytes[off..off + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match parse_trace(&bytes) {
            Err(ChanModelError::NonFiniteTap { step: 1, bin: 0, offset }) => {
                assert_eq!(offset, payload_start as u64 + 16);
            }
            other => panic!("expected NonFiniteTap, got {other:?}"),
        }
    }

    #[test]
    fn nan_tap_rejected_before_any_bytes_written() {
        // Bypass CirTrace::new validation to exercise the writer's own check.
        let grid = DelayGrid::from_sample_rate(1.92e6, 1).unwrap();
        let trace = CirTrace {
            grid,
            time_step: DEFAULT_TIME_STEP,
            taps: vec![Complex32::new(f32::NAN, 0.0)],
            carrier_freq_hz: 0.0,
            label: String::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("never.cirt");
        match write_trace(&trace, &path) {
            Err(ChanModelError::NonFiniteTap { step: 0, bin: 0, .. }) => {}
            other => panic!("expected NonFiniteTap, got {other:?}"),
        }
        assert!(!path.exists(), "no file may be created on rejection");
    }

    #[test]
    fn single_step_identity_channel() {
        let grid = DelayGrid::from_sample_rate(1.92e6, 1).unwrap();
        let trace = CirTrace::new(
            grid,
            DEFAULT_TIME_STEP,
            vec![Complex32::new(1.0, 0.0)],
            0.0,
            String::new(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("id.cirt");
        write_trace(&trace, &path).unwrap();
        let loaded = load_trace(&path).unwrap();
        assert_eq!(loaded.num_steps(), 1);
        assert_eq!(loaded.num_bins(), 1);
        assert_eq!(loaded.taps_flat(), &[Complex32::new(1.0, 0.0)]);
    }

    #[test]
    fn trailing_bytes_rejected() {
        let trace = random_trace(2, 2, 5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("long.cirt");
        write_trace(&trace, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        assert!(matches!(
            parse_trace(&bytes),
            Err(ChanModelError::InvalidHeader { field: "payload", .. })
        ));
    }

    #[test]
    fn sidecar_mirrors_header() {
        let trace = random_trace(3, 2, 11);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("meta.cirt");
        write_trace(&trace, &path).unwrap();
        let sidecar = write_meta_sidecar(&trace, &path).unwrap();
        let text = std::fs::read_to_string(sidecar).unwrap();
        let json: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(json["num_steps"], 3);
        assert_eq!(json["num_bins"], 2);
        assert_eq!(json["label"], "rand");
    }

    #[test]
    fn odd_time_steps_survive_the_round_trip() {
        let grid = DelayGrid::from_sample_rate(1.92e6, 1).unwrap();
        for nanos in [1u64, 999, 1_000_001, 123_456_789] {
            let trace = CirTrace::new(
                grid,
                Duration::from_nanos(nanos),
                vec![Complex32::new(1.0, 0.0)],
                0.0,
                String::new(),
            )
            .unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("ts.cirt");
            write_trace(&trace, &path).unwrap();
            assert_eq!(load_trace(&path).unwrap().time_step(), trace.time_step());
        }
    }
}
