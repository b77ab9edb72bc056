//! Merge evaluation reports into one table.

use std::path::Path;

use fmdl::metrics::EvalReport;

use crate::failure::{CliResult, Failure};

pub const COLUMNS: [&str; 11] = ["run", "samples", "acc", "auc", "eer", "ap", "fpr", "fnr", "iou", "pbca", "iinc"];

pub fn read_report(path: &Path) -> CliResult<EvalReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
    let mut report: EvalReport =
        serde_json::from_str(&text).map_err(|e| Failure::data(format!("{}: malformed report: {e}", path.display())))?;
    if report.name.is_empty() {
        report.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(report)
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_default()
}

/// One row of cells in [`COLUMNS`] order; missing values stay blank.
pub fn row(r: &EvalReport) -> Vec<String> {
    let d = &r.detection;
    let loc = r.localization.as_ref();
    vec![
        r.name.clone(),
        d.samples.to_string(),
        cell(Some(d.acc)),
        cell(Some(d.auc)),
        cell(Some(d.eer)),
        cell(Some(d.ap)),
        cell(d.fpr),
        cell(d.fnr),
        cell(loc.map(|l| l.iou)),
        cell(loc.map(|l| l.pbca)),
        cell(loc.map(|l| l.iinc)),
    ]
}

pub fn render_text(rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = COLUMNS.iter().map(|c| c.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(COLUMNS.to_vec());
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub fn write_csv(path: &Path, rows: &[Vec<String>]) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let fail = |e: csv::Error| Failure::data(format!("{}: {e}", path.display()));
    w.write_record(COLUMNS).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    w.flush().map_err(|e| Failure::io(path, e))
}
