//! Run reports: summary cells, emitted tables and tolerance checks.

use std::collections::BTreeMap;

use fragwave_core::stats::z_of;
use fragwave_core::{SpectralProfile, Summary};
use serde::Serialize;

use crate::config::{Check, Param, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub se: f64,
    pub median: f64,
    pub trimmed_mean: f64,
}

impl From<&Summary> for SummaryStats {
    fn from(s: &Summary) -> Self {
        SummaryStats {
            mean: s.mean,
            se: s.se,
            median: s.median,
            trimmed_mean: s.trimmed_mean,
        }
    }
}

/// One reported quantity, keyed by metric name and parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Cell {
    pub metric: String,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub tags: BTreeMap<String, String>,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<SummaryStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl Cell {
    pub fn new(metric: &str, value: f64) -> Self {
        Cell {
            metric: metric.to_string(),
            params: BTreeMap::new(),
            tags: BTreeMap::new(),
            value,
            se: None,
            n: None,
            summary: None,
            label: None,
        }
    }

    /// Mean of `values` with its SE and the full summary.
    pub fn mean_of(metric: &str, values: &[f64]) -> Self {
        Cell::from_summary(metric, &Summary::of(values))
    }

    pub fn from_summary(metric: &str, s: &Summary) -> Self {
        let mut c = Cell::new(metric, s.mean);
        c.se = Some(s.se);
        c.n = Some(s.n);
        c.summary = Some(s.into());
        c
    }

    pub fn param(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    pub fn tag(mut self, name: &str, value: &str) -> Self {
        self.tags.insert(name.to_string(), value.to_string());
        self
    }

    pub fn with_se(mut self, se: f64) -> Self {
        self.se = Some(se);
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = Some(n);
        self
    }

    pub fn with_label(mut self, label: &str) -> Self {
        self.label = Some(label.to_string());
        self
    }

    fn describe(&self) -> String {
        let mut keys: Vec<String> = self
            .params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        keys.extend(self.tags.iter().map(|(k, v)| format!("{k}={v}")));
        if keys.is_empty() {
            self.metric.clone()
        } else {
            format!("{}[{}]", self.metric, keys.join(","))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Value {
    Float(f64),
    Int(u64),
    Text(String),
    Empty,
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<u64> for Value {
    fn from(v: u64) -> Self {
        Value::Int(v)
    }
}

impl From<usize> for Value {
    fn from(v: usize) -> Self {
        Value::Int(v as u64)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<Option<f64>> for Value {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Value::Empty, Value::Float)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len(), "table {}", self.name);
        self.rows.push(row);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub metric: String,
    /// The tolerance as applied, e.g. `|value − 1| ≤ 4·SE`.
    pub tolerance: String,
    pub cells: usize,
    pub failed: usize,
    /// The first failing cell, or the last one checked on a pass.
    pub detail: String,
    pub pass: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub wall_seconds: f64,
    /// Fragments created (simulation) or frozen (sweeps).
    pub fragments: u64,
    pub capped: u64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub kind: String,
    pub cells: Vec<Cell>,
    pub checks: Vec<CheckOutcome>,
    pub tables: Vec<Table>,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExperimentReport {
    pub fn passed(&self) -> bool {
        self.error.is_none() && self.checks.iter().all(|c| c.pass)
    }

    pub fn cell(&self, metric: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.metric == metric)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub config: RunConfig,
    pub master_seed: u64,
    pub workers: usize,
    pub experiments: Vec<ExperimentReport>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Pass,
    ToleranceFailure,
    Error,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::ToleranceFailure => 2,
            Status::Error => 1,
        }
    }
}

impl RunReport {
    pub fn status(&self) -> Status {
        if self.experiments.iter().any(|e| e.error.is_some()) {
            Status::Error
        } else if self.experiments.iter().all(|e| e.passed()) {
            Status::Pass
        } else {
            Status::ToleranceFailure
        }
    }

    pub fn experiment(&self, name: &str) -> Option<&ExperimentReport> {
        self.experiments.iter().find(|e| e.name == name)
    }
}

fn matches(cell: &Cell, check: &Check, profile: &SpectralProfile) -> bool {
    cell.metric == check.metric
        && check.filter.iter().all(|(key, want)| {
            if let Some(&have) = cell.params.get(key) {
                want.resolve(profile)
                    .is_some_and(|w| (have - w).abs() <= 1e-9 * w.abs().max(1.0))
            } else if let Some(have) = cell.tags.get(key) {
                match want {
                    Param::Sym(s) => s == have,
                    Param::Num(v) => have.parse::<f64>().ok() == Some(*v),
                }
            } else {
                false
            }
        })
}

/// Plain decimals for moderate magnitudes, scientific notation otherwise.
pub fn fmt_num(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && a.is_finite() && !(1e-3..1e6).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn tolerance_text(check: &Check, target: Option<f64>) -> String {
    let mut parts = Vec::new();
    let t = target.map(fmt_num).unwrap_or_default();
    if let Some(z) = check.z_max {
        parts.push(format!("|value − {t}| ≤ {}·SE", fmt_num(z)));
    }
    if let Some(a) = check.abs {
        parts.push(format!("|value − {t}| ≤ {}", fmt_num(a)));
    }
    if let Some(r) = check.rel {
        parts.push(format!("|value/{t} − 1| ≤ {}", fmt_num(r)));
    }
    if let Some(m) = check.max {
        parts.push(format!("value ≤ {}", fmt_num(m)));
    }
    if let Some(m) = check.min {
        parts.push(format!("value ≥ {}", fmt_num(m)));
    }
    if let Some(l) = &check.label {
        parts.push(format!("label = {l}"));
    }
    parts.join(" and ")
}

/// Returns whether `cell` passes and a short account of its numbers.
fn judge(cell: &Cell, check: &Check, target: Option<f64>) -> (bool, String) {
    let v = cell.value;
    let mut ok = !v.is_nan() || check.label.is_some();
    let mut text = format!("{} = {}", cell.describe(), fmt_num(v));
    if let Some(se) = cell.se {
        text.push_str(&format!(" (SE {})", fmt_num(se)));
    }
    if let (Some(zmax), Some(t)) = (check.z_max, target) {
        match cell.se {
            Some(se) => {
                let z = z_of(v - t, se, t.abs());
                ok &= z.abs() <= zmax;
                text.push_str(&format!(", z = {z:.3}"));
            }
            None => {
                ok = false;
                text.push_str(", no SE");
            }
        }
    }
    if let (Some(a), Some(t)) = (check.abs, target) {
        ok &= (v - t).abs() <= a;
    }
    if let (Some(r), Some(t)) = (check.rel, target) {
        let dev = (v / t - 1.0).abs();
        ok &= dev <= r;
        text.push_str(&format!(", rel dev {dev:.4}"));
    }
    if let Some(m) = check.max {
        ok &= v <= m;
    }
    if let Some(m) = check.min {
        ok &= v >= m;
    }
    if let Some(l) = &check.label {
        let have = cell.label.as_deref().unwrap_or("");
        ok &= have == l;
        text.push_str(&format!(", label {have}"));
    }
    (ok, text)
}

pub fn evaluate(check: &Check, cells: &[Cell], profile: &SpectralProfile) -> CheckOutcome {
    let target = check.target.as_ref().and_then(|t| t.resolve(profile));
    let tolerance = tolerance_text(check, target);
    let matched: Vec<&Cell> = cells
        .iter()
        .filter(|c| matches(c, check, profile))
        .collect();
    if matched.is_empty() || (check.target.is_some() && target.is_none()) {
        return CheckOutcome {
            metric: check.metric.clone(),
            tolerance,
            cells: 0,
            failed: 0,
            detail: "no matching cell".into(),
            pass: false,
        };
    }
    let judged: Vec<(bool, String)> = matched.iter().map(|c| judge(c, check, target)).collect();
    let failed = judged.iter().filter(|j| !j.0).count();
    let detail = judged
        .iter()
        .find(|j| !j.0)
        .or_else(|| judged.last())
        .map(|j| j.1.clone())
        .unwrap_or_default();
    CheckOutcome {
        metric: check.metric.clone(),
        tolerance,
        cells: matched.len(),
        failed,
        detail,
        pass: failed == 0,
    }
}
