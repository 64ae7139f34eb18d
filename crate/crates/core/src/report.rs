//! CSV persistence of verification reports.

use std::path::Path;

use crate::error::Result;
use crate::tails::TailRow;
use crate::verify::LdpReport;

pub const LDP_COLUMNS: [&str; 6] = ["epsilon", "estimate", "stderr", "eps_log_estimate", "threshold", "pass"];
pub const TAIL_COLUMNS: [&str; 6] = ["check", "delta", "estimate", "stderr", "bound", "pass"];

/// Writes `epsilon,estimate,stderr,eps_log_estimate,threshold,pass`; `ln 0` is written as `-inf`.
pub fn write_ldp_csv(report: &LdpReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(LDP_COLUMNS)?;
    for r in &report.rows {
        w.write_record([
            r.epsilon.to_string(),
            r.estimate.to_string(),
            r.stderr.to_string(),
            r.eps_log_estimate.to_string(),
            r.threshold.to_string(),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_tails_csv(rows: &[TailRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TAIL_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.check.clone(),
            r.delta.to_string(),
            r.estimate.to_string(),
            r.stderr.to_string(),
            r.bound.to_string(),
            r.pass.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the `pass` column of a report CSV written by this module.
pub fn read_pass_column(path: &Path) -> Result<Vec<bool>> {
    let mut reader = csv::Reader::from_path(path)?;
    let idx = reader
        .headers()?
        .iter()
        .position(|h| h == "pass")
        .ok_or_else(|| crate::LdpError::Io(format!("{}: no pass column", path.display())))?;
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        out.push(record.get(idx) == Some("true"));
    }
    Ok(out)
}
