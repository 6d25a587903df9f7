use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fragwave::config::{ExperimentConfig, Kind, MeasureSpec, RunConfig};
use fragwave::emit::{emit, render_csv, Format};
use fragwave::report::RunReport;
use fragwave::{run, RunOptions};

#[derive(Parser)]
#[command(
    name = "fragwave",
    version,
    about = "Fragmentation and travelling-wave experiments"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every experiment of a config file and check its tolerances.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `output`, else `out/<name>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replaces the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "FRAGWAVE_WORKERS")]
        workers: Option<usize>,
    },
    /// Print Φ, Φ′, c_p and η on a grid of p as CSV.
    Exponents {
        /// `uniform_binary`, `binary_half` or an inline measure JSON object.
        #[arg(long)]
        measure: String,
        /// `a:b:step`.
        #[arg(long = "p-grid", allow_hyphen_values = true)]
        p_grid: String,
    },
}

fn print_report(report: &RunReport) {
    let mut err = std::io::stderr().lock();
    for e in &report.experiments {
        let verdict = match (&e.error, e.passed()) {
            (Some(_), _) => "ERROR",
            (None, true) => "PASS",
            (None, false) => "FAIL",
        };
        let _ = writeln!(
            err,
            "{} ({}): {verdict} in {:.2} s",
            e.name, e.kind, e.diagnostics.wall_seconds
        );
        if let Some(msg) = &e.error {
            let _ = writeln!(err, "  error: {msg}");
        }
        for c in &e.checks {
            let mark = if c.pass { "ok  " } else { "FAIL" };
            let _ = writeln!(
                err,
                "  [{mark}] {}: {} ({} of {} cells failed); {}",
                c.metric, c.tolerance, c.failed, c.cells, c.detail
            );
        }
        for note in &e.diagnostics.notes {
            let _ = writeln!(err, "  note: {note}");
        }
    }
}

fn run_cmd(
    config: PathBuf,
    out: Option<PathBuf>,
    seed: Option<u64>,
    workers: Option<usize>,
) -> anyhow::Result<ExitCode> {
    let cfg = RunConfig::load(&config)?;
    let dir = out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    let report = run(&cfg, &RunOptions { seed, workers })?;
    print_report(&report);
    let written = emit(&report, &dir, &[Format::Csv, Format::Json])?;
    eprintln!("wrote {} files to {}", written.len(), dir.display());
    Ok(ExitCode::from(report.status().exit_code() as u8))
}

fn exponents_cmd(measure: &str, p_grid: String) -> anyhow::Result<ExitCode> {
    let cfg = RunConfig {
        name: "exponents".into(),
        master_seed: 0,
        workers: Some(1),
        output: None,
        experiments: vec![ExperimentConfig {
            p_grid: Some(p_grid),
            ..ExperimentConfig::new("exponents", Kind::Exponents, MeasureSpec::parse(measure)?)
        }],
    };
    let report = run(&cfg, &RunOptions::default())?;
    let e = &report.experiments[0];
    if let Some(msg) = &e.error {
        anyhow::bail!("{msg}");
    }
    let mut stdout = std::io::stdout().lock();
    for t in &e.tables {
        if t.name == "exponents" {
            stdout.write_all(render_csv(t).as_bytes())?;
        } else {
            eprint!("{}", render_csv(t));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    // Exit code 2 is reserved for tolerance failures.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.cmd {
        Cmd::Run {
            config,
            out,
            seed,
            workers,
        } => run_cmd(config, out, seed, workers),
        Cmd::Exponents { measure, p_grid } => exponents_cmd(&measure, p_grid),
    };
    result.unwrap_or_else(|err| {
        eprintln!("error: {err:#}");
        ExitCode::from(1)
    })
}
