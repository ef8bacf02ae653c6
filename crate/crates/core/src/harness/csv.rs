use std::fmt::Write as _;
use std::path::Path;

use super::MetricsRecord;
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "sweep,scheme,esnr_db,sum_rate,trials,se_esnr,se_rate";

/// Cap applied to an infinite ESNR (perfect estimates).
pub const ESNR_CAP_DB: f64 = 300.0;

fn esnr_field(x: Option<f64>) -> String {
    match x {
        None => String::new(),
        Some(v) => format!("{:.6}", v.min(ESNR_CAP_DB)),
    }
}

/// Renders records as CSV, sorted by sweep value then scheme name.
pub fn to_csv(records: &[MetricsRecord]) -> Result<String> {
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    let mut rows: Vec<&MetricsRecord> = records.iter().collect();
    rows.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then_with(|| a.scheme.cmp(&b.scheme))
    });
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        // std formatting is locale-independent.
        writeln!(
            out,
            "{:.6},{},{},{:.6},{},{},{:.6}",
            r.sweep_value,
            r.scheme,
            esnr_field(r.mean_esnr_db),
            r.mean_sum_rate,
            r.trial_count,
            esnr_field(r.se_esnr_db),
            r.se_sum_rate,
        )
        .expect("writing to a String cannot fail");
    }
    Ok(out)
}

pub fn emit_csv(records: &[MetricsRecord], path: impl AsRef<Path>) -> Result<()> {
    let text = to_csv(records)?;
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
