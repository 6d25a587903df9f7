//! One PASS/FAIL line per acceptance criterion, driven by the configs in
//! `configs/`. Criteria that are known to be out of reach are still printed
//! as FAIL; they only fail this target if they are missing from `KNOWN_RED`.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use fragwave::config::RunConfig;
use fragwave::emit::{csv_file_name, emit, render_csv, Format};
use fragwave::report::RunReport;
use fragwave::{run, RunOptions};

/// `(config, experiment, metric)` of checks that fail for the documented
/// reasons in the README.
const KNOWN_RED: &[(&str, &str, &str)] = &[
    ("c4_lines", "line_w_p_bar", "W_line"),
    ("c6_speed", "largest_fragment", "speed"),
    ("c7_wave", "wave_p1", "horizon_diagnostic"),
];

const CRITERIA: &[(u32, &str, &str)] = &[
    (1, "c1_spectral", "spectral fixtures"),
    (2, "c2_additive", "additive martingale unit mean"),
    (3, "c3_derivative", "derivative martingales"),
    (4, "c4_lines", "stopping lines"),
    (5, "c5_lln", "laws of large numbers"),
    (6, "c6_speed", "largest-fragment speed"),
    (7, "c7_wave", "travelling wave at p = 1"),
    (8, "c8_many_to_one", "many-to-one"),
];

fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.json"))
}

fn load(name: &str) -> RunConfig {
    RunConfig::load(&config_path(name)).unwrap_or_else(|e| panic!("{name}: {e:#}"))
}

#[derive(Default)]
struct Tally {
    unexpected: Vec<String>,
    fixed: Vec<String>,
}

fn report_criterion(
    n: u32,
    title: &str,
    config: &str,
    report: &RunReport,
    secs: f64,
    tally: &mut Tally,
) {
    let all_pass = report.experiments.iter().all(|e| e.passed());
    println!(
        "criterion {n}: {} ({title}, {secs:.1} s)",
        if all_pass { "PASS" } else { "FAIL" }
    );
    for e in &report.experiments {
        if let Some(err) = &e.error {
            println!("    {}: ERROR {err}", e.name);
            tally.unexpected.push(format!("{config}/{}: error", e.name));
        }
        for c in &e.checks {
            let known = KNOWN_RED.contains(&(config, e.name.as_str(), c.metric.as_str()));
            let mark = match (c.pass, known) {
                (true, false) => "ok",
                (true, true) => "ok (listed as known red)",
                (false, true) => "FAIL (known red)",
                (false, false) => "FAIL",
            };
            println!(
                "    [{mark}] {}/{}: {}; {}",
                e.name, c.metric, c.tolerance, c.detail
            );
            let key = format!("{config}/{}/{}", e.name, c.metric);
            match (c.pass, known) {
                (false, false) => tally.unexpected.push(key),
                (true, true) => tally.fixed.push(key),
                _ => {}
            }
        }
    }
}

fn csv_bytes(report: &RunReport) -> BTreeMap<String, String> {
    report
        .experiments
        .iter()
        .flat_map(|e| {
            e.tables
                .iter()
                .map(move |t| (csv_file_name(&e.name, &t.name), render_csv(t)))
        })
        .collect()
}

/// Reruns the reproducibility suite on one and three workers and compares
/// the emitted CSV files byte for byte.
fn criterion_nine(tally: &mut Tally) {
    let start = Instant::now();
    let cfg = load("c9_reproducibility");
    let runs: Vec<RunReport> = [1usize, 3, 1]
        .iter()
        .map(|&w| {
            run(
                &cfg,
                &RunOptions {
                    seed: None,
                    workers: Some(w),
                },
            )
            .expect("c9 runs")
        })
        .collect();
    let mut problems = Vec::new();
    let base = csv_bytes(&runs[0]);
    for (k, r) in runs.iter().enumerate().skip(1) {
        if csv_bytes(r) != base {
            problems.push(format!("run {k} differs in memory"));
        }
    }
    let dirs: Vec<tempfile::TempDir> = runs.iter().map(|_| tempfile::tempdir().unwrap()).collect();
    let files: Vec<Vec<PathBuf>> = runs
        .iter()
        .zip(&dirs)
        .map(|(r, d)| emit(r, d.path(), &[Format::Csv]).unwrap())
        .collect();
    for (k, f) in files.iter().enumerate().skip(1) {
        for (a, b) in files[0].iter().zip(f) {
            if std::fs::read(a).unwrap() != std::fs::read(b).unwrap() {
                problems.push(format!("{} differs on run {k}", a.display()));
            }
        }
    }
    let rows: usize = runs[0]
        .experiments
        .iter()
        .flat_map(|e| &e.tables)
        .map(|t| t.rows.len())
        .sum();
    let ok = problems.is_empty()
        && runs
            .iter()
            .all(|r| r.experiments.iter().all(|e| e.error.is_none()));
    println!(
        "criterion 9: {} (reproducibility, {:.1} s)",
        if ok { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64()
    );
    println!(
        "    workers 1, 3, 1: {} CSV files, {rows} rows, byte-identical: {}",
        base.len(),
        problems.is_empty()
    );
    for p in &problems {
        println!("    {p}");
    }
    if !ok {
        tally.unexpected.push("c9_reproducibility".into());
    }
}

fn main() -> ExitCode {
    // `cargo test` passes harness flags; only a name filter is honoured.
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let wanted = |n: u32| {
        filter
            .as_ref()
            .is_none_or(|f| f == &n.to_string() || f == "acceptance")
    };
    let mut tally = Tally::default();
    for &(n, config, title) in CRITERIA {
        if !wanted(n) {
            continue;
        }
        let cfg = load(config);
        let start = Instant::now();
        let report = run(&cfg, &RunOptions::default()).expect("config runs");
        report_criterion(
            n,
            title,
            config,
            &report,
            start.elapsed().as_secs_f64(),
            &mut tally,
        );
    }
    if wanted(9) {
        criterion_nine(&mut tally);
    }
    for f in &tally.fixed {
        println!("note: {f} is listed as known red but passed");
    }
    if tally.unexpected.is_empty() {
        println!(
            "acceptance: no unexpected failures ({} known red)",
            KNOWN_RED.len()
        );
        ExitCode::SUCCESS
    } else {
        println!(
            "acceptance: unexpected failures: {}",
            tally.unexpected.join(", ")
        );
        ExitCode::FAILURE
    }
}
