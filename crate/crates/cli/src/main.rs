//! `gflow` command-line entry point.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use gflow_cli::commands::{detect_snapshot, sweep};
use gflow_cli::config::{from_document, load, read_document, Override, RunConfig, SCHEMA_VERSION};
use gflow_cli::run::{execute, EXIT_CONFIG, EXIT_NO_NECK, EXIT_OK, EXIT_VALIDATION};
use gflow_cli::validate::{default_suite_config, run_suite};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "gflow", version, about = "Axisymmetric G-flow with surgery")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to $OUT_DIR, then ./gflow_out.
    #[arg(long, global = true, env = "OUT_DIR")]
    out: Option<PathBuf>,
    /// Dotted-path override, e.g. `thresholds.g3=12`. Repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<Override>,
    /// Suppress progress output.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration.
    Run,
    /// Run the validation suite and print one line per check.
    Validate,
    /// Certify necks on a snapshot and print them as JSON lines.
    Detect { snapshot: PathBuf },
    /// Run the cartesian product of array-valued overrides.
    Sweep,
}

fn base_document(cli: &Cli, default: Value) -> Result<Value> {
    match &cli.config {
        Some(p) => read_document(p),
        None => Ok(default),
    }
}

fn config(cli: &Cli, default: impl FnOnce() -> Value) -> Result<RunConfig> {
    match &cli.config {
        Some(p) => load(p, &cli.overrides),
        None => from_document(default(), &cli.overrides),
    }
}

fn sphere_document() -> Value {
    json!({ "schema_version": SCHEMA_VERSION, "scenario": { "kind": "sphere" } })
}

fn config_error(e: anyhow::Error) -> i32 {
    eprintln!("error: {e:#}");
    EXIT_CONFIG
}

fn real_main(cli: Cli) -> i32 {
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("gflow_out"));
    match &cli.command {
        Command::Run => cmd_run(&cli, &out),
        Command::Validate => cmd_validate(&cli, &out),
        Command::Detect { snapshot } => cmd_detect(&cli, snapshot),
        Command::Sweep => cmd_sweep(&cli, &out),
    }
}

fn cmd_run(cli: &Cli, out: &Path) -> i32 {
    let cfg = match config(cli, sphere_document).and_then(|c| c.initial_components().map(|_| c)) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    match execute(&cfg, out, &mut ()) {
        Ok(o) => {
            if !cli.quiet {
                let verdict = o.verdict.map_or_else(|| "-".to_string(), |v| v.to_string());
                println!(
                    "t = {:.6}, steps = {}, surgeries = {}, necks = {}, verdict: {verdict}",
                    o.t, o.steps, o.surgeries, o.necks_detected
                );
            }
            if let Some(e) = &o.error {
                eprintln!("error: {e}");
            }
            o.exit_code
        }
        Err(e) => config_error(e),
    }
}

fn cmd_validate(cli: &Cli, out: &Path) -> i32 {
    let cfg = match config(cli, || serde_json::to_value(default_suite_config()).expect("serialisable")) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let checks = run_suite(&cfg, out);
    let failed = checks.iter().filter(|c| !c.pass).count();
    for c in &checks {
        if !cli.quiet || !c.pass {
            println!("{c}");
        }
    }
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    if failed == 0 {
        EXIT_OK
    } else {
        EXIT_VALIDATION
    }
}

fn cmd_detect(cli: &Cli, snapshot: &Path) -> i32 {
    let regions = config(cli, sphere_document).and_then(|cfg| detect_snapshot(&cfg, snapshot));
    let regions = match regions {
        Ok(r) => r,
        Err(e) => return config_error(e),
    };
    let mut stdout = std::io::stdout().lock();
    for r in &regions {
        let _ = writeln!(stdout, "{}", serde_json::to_string(r).expect("serialisable"));
    }
    if !cli.quiet {
        eprintln!("{} neck region(s)", regions.len());
    }
    if regions.is_empty() {
        EXIT_NO_NECK
    } else {
        EXIT_OK
    }
}

fn cmd_sweep(cli: &Cli, out: &Path) -> i32 {
    let base = match base_document(cli, sphere_document()) {
        Ok(b) => b,
        Err(e) => return config_error(e),
    };
    let cells = match sweep(&base, &cli.overrides, out) {
        Ok(c) => c,
        Err(e) => return config_error(e),
    };
    let mut summary = String::new();
    let mut code = EXIT_OK;
    for c in &cells {
        summary.push_str(&serde_json::to_string(c).expect("serialisable"));
        summary.push('\n');
        let cell_code = c.outcome.as_ref().map_or(EXIT_CONFIG, |o| o.exit_code);
        if code == EXIT_OK {
            code = cell_code;
        }
        if !cli.quiet {
            let detail = match (&c.outcome, &c.error) {
                (Some(o), _) => format!(
                    "verdict {:<24} surgeries {:>3}  necks {:>4}",
                    o.verdict.map_or_else(|| "-".to_string(), |v| v.to_string()),
                    o.surgeries,
                    o.necks_detected
                ),
                (None, Some(e)) => format!("error: {e}"),
                (None, None) => String::new(),
            };
            println!("cell_{:03}  exit {cell_code}  {detail}  [{}]", c.index, c.overrides.join(" "));
        }
    }
    if let Err(e) = std::fs::create_dir_all(out).and_then(|_| std::fs::write(out.join("sweep_summary.jsonl"), summary)) {
        return config_error(e.into());
    }
    code
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(real_main(cli) as u8)
}
