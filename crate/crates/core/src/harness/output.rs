//! Output files of a run.
//!
//! * `<algorithm>_trace.csv`: header `symbol_index,residual_dbm`, one row per
//!   processed sample with the smoothed residual power.
//! * `summary.csv`: header
//!   `algorithm,epoch,start_symbol,attenuation_db,convergence_symbols,param_count`,
//!   one row per algorithm and epoch; empty cells mean "not reached" or "not
//!   covered".
//! * `run.log`: resolved configuration and per-algorithm notes.
//! * `<algorithm>.params`: networks trained during the run, loadable through
//!   the `weights_file` setting.
//!
//! Numbers are written in shortest round-trip decimal form, so identical runs
//! give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Result, SicError};

use super::run::{RunReport, SummaryRow};

pub const TRACE_HEADER: [&str; 2] = ["symbol_index", "residual_dbm"];
pub const SUMMARY_HEADER: [&str; 6] = [
    "algorithm",
    "epoch",
    "start_symbol",
    "attenuation_db",
    "convergence_symbols",
    "param_count",
];

fn csv_error(path: &Path, e: csv::Error) -> SicError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => SicError::io(path, source),
        other => SicError::io(path, std::io::Error::other(format!("{other:?}"))),
    }
}

fn write_csv(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        w.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| SicError::io(path, e))
}

fn optional<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn summary_record(row: &SummaryRow) -> Vec<String> {
    vec![
        row.algorithm.to_string(),
        row.epoch.to_string(),
        row.start_symbol.to_string(),
        optional(row.attenuation_db),
        optional(row.convergence_symbols),
        row.param_count.to_string(),
    ]
}

/// Writes every output file into `out_dir` (created if missing) and returns
/// the paths written.
pub fn write_outputs(report: &RunReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| SicError::io(out_dir, e))?;
    let mut written = Vec::new();
    for run in &report.runs {
        let path = out_dir.join(format!("{}_trace.csv", run.algorithm));
        let rows = run
            .smoothed_dbm
            .iter()
            .enumerate()
            .map(|(n, v)| vec![n.to_string(), v.to_string()]);
        write_csv(&path, &TRACE_HEADER, rows)?;
        written.push(path);
        if let Some(model) = &run.trained {
            let path = out_dir.join(format!("{}.params", run.algorithm));
            model.save(&path)?;
            written.push(path);
        }
    }
    let path = out_dir.join("summary.csv");
    let rows = report.runs.iter().flat_map(|r| r.summaries.iter().map(summary_record));
    write_csv(&path, &SUMMARY_HEADER, rows)?;
    written.push(path);

    let path = out_dir.join("run.log");
    let mut log = report.log.join("\n");
    log.push('\n');
    fs::write(&path, log).map_err(|e| SicError::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Human-readable summary: one line per algorithm and epoch.
pub fn format_table(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<14} {:>5} {:>7} {:>11} {:>12} {:>7}  notes",
        "algorithm", "epoch", "start", "atten [dB]", "converge at", "params"
    );
    for run in &report.runs {
        for row in &run.summaries {
            let atten = row.attenuation_db.map_or("-".to_string(), |a| format!("{a:.2}"));
            let conv = row.convergence_symbols.map_or("-".to_string(), |c| c.to_string());
            let note = if row.epoch == 1 {
                match &run.fault {
                    Some(f) => format!("fault: {f}"),
                    None => format!("{:.1} s", run.seconds),
                }
            } else {
                String::new()
            };
            let _ = writeln!(
                out,
                "{:<14} {:>5} {:>7} {:>11} {:>12} {:>7}  {}",
                run.algorithm.to_string(),
                row.epoch,
                row.start_symbol,
                atten,
                conv,
                row.param_count,
                note
            );
        }
    }
    out
}
