//! Output files: per-tick CSV, summary JSON and study tables.
//!
//! Per-tick CSV columns: `t, truth_x, truth_y, truth_z, truth_yaw, est_x,
//! est_y, est_z, est_yaw, lat_err, long_err` (meters, radians, seconds).
//! Every file is written to a temporary sibling and renamed into place.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::run::{RunResult, TickRecord};
use super::study::{ComboRow, SweepCell};

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn to_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialize to csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
}

pub fn records_csv(records: &[TickRecord]) -> String {
    to_csv(records)
}

pub fn to_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

pub fn combo_csv(rows: &[ComboRow]) -> String {
    to_csv(rows)
}

pub fn sweep_csv(cells: &[SweepCell]) -> String {
    to_csv(cells)
}

pub fn summary_table(result: &RunResult) -> String {
    let s = &result.summary;
    format!(
        "| metric | value |\n|---|---|\n\
         | ticks | {} |\n\
         | average lat. error (m) | {:.4} |\n\
         | average long. error (m) | {:.4} |\n\
         | max lat. error (m) | {:.4} |\n\
         | max long. error (m) | {:.4} |\n\
         | final position error (m) | {:.4} |\n\
         | measurements accepted / rejected | {} / {} |\n\
         | diverged | {} |\n",
        s.ticks,
        s.mean_abs_lateral,
        s.mean_abs_longitudinal,
        s.max_abs_lateral,
        s.max_abs_longitudinal,
        s.final_position_error,
        s.accepted,
        s.rejected,
        s.diverged
    )
}

pub fn combo_table(rows: &[ComboRow]) -> String {
    let mut s = String::from("| Features | Average lat. Error(m) | Average long. Error(m) |\n|---|---|---|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {:.3} | {:.3} |\n",
            r.name, r.mean_abs_lateral, r.mean_abs_longitudinal
        ));
    }
    s
}

/// One row per count, one column per noise level (mean position error).
pub fn sweep_table(cells: &[SweepCell]) -> String {
    let mut noises: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for c in cells {
        if !noises.contains(&c.noise) {
            noises.push(c.noise);
        }
        if !counts.contains(&c.count) {
            counts.push(c.count);
        }
    }
    let mut s = String::from("| points |");
    for n in &noises {
        s.push_str(&format!(" {n} px² |"));
    }
    s.push_str("\n|---|");
    s.push_str(&"---|".repeat(noises.len()));
    s.push('\n');
    for count in counts {
        s.push_str(&format!("| {count} |"));
        for n in &noises {
            let cell = cells.iter().find(|c| c.count == count && c.noise == *n);
            match cell {
                Some(c) => s.push_str(&format!(" {:.3} |", c.mean_position_error)),
                None => s.push_str(" |"),
            }
        }
        s.push('\n');
    }
    s
}
