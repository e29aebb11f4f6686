//! Report and series output: JSON for machines, CSV for tables and plots.

use anyhow::Result;
use cmaf_core::verify::MarginReport;
use serde_json::json;
use std::io::Write;
use std::path::Path;

pub const REPORTS_JSON: &str = "reports.json";
pub const REPORTS_CSV: &str = "reports.csv";

/// Writes `reports.json` and `reports.csv` into `dir`.
pub fn write_reports(dir: &Path, config_hash: &str, reports: &[MarginReport]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let doc = json!({ "config_hash": config_hash, "reports": reports });
    std::fs::write(dir.join(REPORTS_JSON), serde_json::to_vec_pretty(&doc)?)?;
    let mut w = csv::Writer::from_path(dir.join(REPORTS_CSV))?;
    write_csv(&mut w, config_hash, reports)?;
    w.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(w: &mut csv::Writer<W>, config_hash: &str, reports: &[MarginReport]) -> Result<()> {
    w.write_record(["check", "anchor", "margin", "passed", "t", "constants", "config_hash"])?;
    for r in reports {
        let constants: Vec<String> = r.constants.iter().map(|c| format!("{}={}", c.name, c.value)).collect();
        w.write_record([
            r.check.as_str(),
            r.anchor.as_str(),
            &r.margin.to_string(),
            if r.passed { "true" } else { "false" },
            &r.location.t.to_string(),
            &constants.join(";"),
            config_hash,
        ])?;
    }
    Ok(())
}

pub fn read_reports(dir: &Path) -> Result<Vec<MarginReport>> {
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.join(REPORTS_JSON))?)?;
    Ok(serde_json::from_value(doc["reports"].clone())?)
}

/// CSV with header `t,value`.
pub fn write_series(out: &mut dyn Write, rows: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "value"])?;
    for (t, v) in rows {
        w.write_record([t.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One line per report: verdict, check, margin and the inequality.
pub fn print_summary(reports: &[MarginReport]) {
    for r in reports {
        println!(
            "{:4}  {:<24} margin {:>12.4e}  {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.check,
            r.margin,
            r.anchor
        );
    }
}
