//! Import of externally produced CIRs: either native CIRT files or CSV path
//! lists of `(time_s, delay_ns, re, im)` rows.
//!
//! CSV rows are grouped onto the trace's time grid by rounding each row's
//! time to the nearest step. Steps without any row hold the previous step's
//! taps (steps before the first row are zero). Rows must be ordered by
//! non-decreasing time.

use super::{resample_paths, PathList, TraceGenError};
use crate::chan_model::{self, CirTrace, DelayGrid};
use num_complex::{Complex32, Complex64};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Duration;

/// Supported import encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImportFormat {
    /// CSV rows `(time_s, delay_ns, re, im)`, `#` comments allowed.
    CsvPaths,
    /// Native trace file; loads directly.
    Cirt,
}

/// Import an external CIR file as a replayable trace.
///
/// `grid` and `time_step` shape the CSV import; the CIRT branch carries its
/// own grid and ignores them.
pub fn import_external_cir(
    path: &Path,
    format: ImportFormat,
    grid: &DelayGrid,
    time_step: Duration,
) -> Result<CirTrace, TraceGenError> {
    match format {
        ImportFormat::Cirt => Ok(chan_model::load_trace(path)?),
        ImportFormat::CsvPaths => import_csv_paths(path, grid, time_step),
    }
}

/// Import a CSV path list; see [`import_external_cir`].
pub fn import_csv_paths(
    path: &Path,
    grid: &DelayGrid,
    time_step: Duration,
) -> Result<CirTrace, TraceGenError> {
    if time_step.is_zero() {
        return Err(TraceGenError::InvalidConfig("time step must be > 0".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)?;

    let step_s = time_step.as_secs_f64();
    let mut by_step: BTreeMap<u32, PathList> = BTreeMap::new();
    let mut prev_time = f64::NEG_INFINITY;
    for result in reader.records() {
        let record = result.map_err(|e| TraceGenError::MalformedRow {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(TraceGenError::MalformedRow {
                line,
                reason: format!("expected 4 fields, got {}", record.len()),
            });
        }
        let field = |i: usize, name: &str| -> Result<f64, TraceGenError> {
            record[i].parse::<f64>().map_err(|e| TraceGenError::MalformedRow {
                line,
                reason: format!("{name}: {e}"),
            })
        };
        let time_s = field(0, "time_s")?;
        let delay_ns = field(1, "delay_ns")?;
        let re = field(2, "re")?;
        let im = field(3, "im")?;
        if !time_s.is_finite() || time_s < 0.0 {
            return Err(TraceGenError::MalformedRow {
                line,
                reason: format!("time must be finite and >= 0, got {time_s}"),
            });
        }
        if time_s < prev_time {
            return Err(TraceGenError::NonMonotonicTime { line });
        }
        prev_time = time_s;

        let step = (time_s / step_s).round();
        if step > f64::from(u32::MAX) {
            return Err(TraceGenError::MalformedRow {
                line,
                reason: format!("time {time_s} s overflows the step counter"),
            });
        }
        by_step
            .entry(step as u32)
            .or_default()
            .push((delay_ns, Complex64::new(re, im)));
    }

    let Some((&last_step, _)) = by_step.iter().next_back() else {
        return Err(TraceGenError::InvalidConfig(format!(
            "{} holds no data rows",
            path.display()
        )));
    };

    let bins = grid.num_bins() as usize;
    let num_steps = last_step as usize + 1;
    let mut taps = Vec::with_capacity(num_steps * bins);
    let mut previous = vec![Complex32::new(0.0, 0.0); bins];
    for step in 0..num_steps as u32 {
        if let Some(paths) = by_step.get(&step) {
            let row = resample_paths(paths, grid)?;
            previous = row
                .iter()
                .map(|t| Complex32::new(t.re as f32, t.im as f32))
                .collect();
        }
        taps.extend_from_slice(&previous);
    }

    let label = path
        .file_stem()
        .map_or_else(|| "import".to_owned(), |s| s.to_string_lossy().into_owned());
    Ok(CirTrace::new(*grid, time_step, taps, 0.0, label)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chan_model::DEFAULT_TIME_STEP;
    use std::io::Write;

    fn grid() -> DelayGrid {
        DelayGrid::from_spacing_ns(100.0, 4).unwrap()
    }

    fn write_csv(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("paths.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn single_row_becomes_identity_trace() {
        let (_d, path) = write_csv("0.0,0,1,0\n");
        let trace = import_csv_paths(&path, &grid(), DEFAULT_TIME_STEP).unwrap();
        assert_eq!(trace.num_steps(), 1);
        assert_eq!(trace.step_taps(0).unwrap()[0], Complex32::new(1.0, 0.0));
    }

    #[test]
    fn duplicate_time_and_delay_rows_accumulate() {
        let (_d, path) = write_csv("0.0,200,0.25,0\n0.0,200,0.5,0.25\n");
        let trace = import_csv_paths(&path, &grid(), DEFAULT_TIME_STEP).unwrap();
        let tap = trace.step_taps(0).unwrap()[2];
        assert!((tap - Complex32::new(0.75, 0.25)).norm() < 1e-6);
    }

    #[test]
    fn gaps_hold_the_last_row() {
        let (_d, path) = write_csv("0.0,0,1,0\n0.003,0,2,0\n");
        let trace = import_csv_paths(&path, &grid(), DEFAULT_TIME_STEP).unwrap();
        assert_eq!(trace.num_steps(), 4);
        assert_eq!(trace.step_taps(0).unwrap()[0].re, 1.0);
        assert_eq!(trace.step_taps(1).unwrap()[0].re, 1.0); // held
        assert_eq!(trace.step_taps(2).unwrap()[0].re, 1.0); // held
        assert_eq!(trace.step_taps(3).unwrap()[0].re, 2.0);
    }

    #[test]
    fn times_round_to_the_nearest_step() {
        let (_d, path) = write_csv("0.0004,0,1,0\n0.0026,0,2,0\n");
        let trace = import_csv_paths(&path, &grid(), DEFAULT_TIME_STEP).unwrap();
        assert_eq!(trace.num_steps(), 4);
        assert_eq!(trace.step_taps(0).unwrap()[0].re, 1.0);
        assert_eq!(trace.step_taps(3).unwrap()[0].re, 2.0);
    }

    #[test]
    fn malformed_row_names_its_line() {
        let (_d, path) = write_csv("0.0,0,1,0\n0.001,zzz,1,0\n");
        match import_csv_paths(&path, &grid(), DEFAULT_TIME_STEP) {
            Err(TraceGenError::MalformedRow { line: 2, .. }) => {}
            other => panic!("expected MalformedRow at line 2, got {other:?}"),
        }
        let (_d, path) = write_csv("0.0,0,1\n");
        assert!(matches!(
            import_csv_paths(&path, &grid(), DEFAULT_TIME_STEP),
            Err(TraceGenError::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn decreasing_time_names_its_line() {
        let (_d, path) = write_csv("0.002,0,1,0\n0.001,0,1,0\n");
        match import_csv_paths(&path, &grid(), DEFAULT_TIME_STEP) {
            Err(TraceGenError::NonMonotonicTime { line: 2 }) => {}
            other => panic!("expected NonMonotonicTime at line 2, got {other:?}"),
        }
    }

    #[test]
    fn comments_and_empty_files() {
        let (_d, path) = write_csv("# header comment\n0.0,0,1,0\n");
        assert!(import_csv_paths(&path, &grid(), DEFAULT_TIME_STEP).is_ok());
        let (_d, path) = write_csv("# nothing else\n");
        assert!(matches!(
            import_csv_paths(&path, &grid(), DEFAULT_TIME_STEP),
            Err(TraceGenError::InvalidConfig(_))
        ));
    }

    #[test]
    fn cirt_branch_delegates_to_load_trace() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.cirt");
        let trace = CirTrace::new(
            grid(),
            DEFAULT_TIME_STEP,
            vec![Complex32::new(1.0, 0.0); 4],
            0.0,
            "x".into(),
        )
        .unwrap();
        chan_model::write_trace(&trace, &path).unwrap();
        let loaded =
            import_external_cir(&path, ImportFormat::Cirt, &grid(), DEFAULT_TIME_STEP).unwrap();
        assert_eq!(loaded, trace);
    }
}
