//! CSV and JSON output. Floats use Rust's shortest round-trip rendering in
//! both formats, so the two parse back to identical bits.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;

use crate::report::{RunReport, Table, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

fn csv_field(out: &mut String, v: &Value) {
    match v {
        Value::Float(x) => write!(out, "{x}").unwrap(),
        Value::Int(n) => write!(out, "{n}").unwrap(),
        Value::Text(s) if s.contains([',', '"', '\n']) => {
            write!(out, "\"{}\"", s.replace('"', "\"\"")).unwrap()
        }
        Value::Text(s) => out.push_str(s),
        Value::Empty => {}
    }
}

pub fn render_csv(table: &Table) -> String {
    let mut out = table.columns.join(",");
    out.push('\n');
    for row in &table.rows {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            csv_field(&mut out, v);
        }
        out.push('\n');
    }
    out
}

pub fn render_json(report: &RunReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

pub fn csv_file_name(experiment: &str, table: &str) -> String {
    format!("{experiment}.{table}.csv")
}

/// Writes every table as CSV and/or the whole report as `report.json`
/// under `dir`; returns the paths written.
pub fn emit(report: &RunReport, dir: &Path, formats: &[Format]) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, body: String| -> anyhow::Result<()> {
        std::fs::write(&path, body).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
        Ok(())
    };
    if formats.contains(&Format::Csv) {
        for e in &report.experiments {
            for t in &e.tables {
                put(dir.join(csv_file_name(&e.name, &t.name)), render_csv(t))?;
            }
        }
    }
    if formats.contains(&Format::Json) {
        put(dir.join("report.json"), render_json(report))?;
    }
    Ok(written)
}
