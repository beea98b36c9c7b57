mod config;
mod error;
mod output;
mod run;
mod sweep;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cohflux::protocol::{full_label_oracle, ORACLE_MAX_N};

use crate::config::{override_checks, parse_config, Check, Experiment};
use crate::error::{CliError, CliResult};
use crate::output::{to_json, write_distribution, write_json};

#[derive(Parser)]
#[command(name = "cohflux", version, about = "Coherence fluctuation experiments on battery-assisted protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write report.json, p_w.csv and p_rev_w.csv.
    Run(Common),
    /// Evaluate every point of the configured sweep and write sweep.csv.
    Sweep(Common),
    /// Parse and validate the config only.
    Validate(Common),
    /// Compare against the dense full-label computation (small instances only).
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated checks; overrides `checks` in the config.
    #[arg(long)]
    checks: Option<String>,
    #[arg(long)]
    quiet: bool,
}

fn load(args: &Common) -> CliResult<Experiment> {
    let mut exp = parse_config(&args.config)?;
    if let Some(list) = &args.checks {
        override_checks(&mut exp, list)?;
    }
    if let Some(out) = &args.out {
        exp.raw.out_dir = Some(out.clone());
    }
    Ok(exp)
}

fn prepare_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let stale = dir.join("error.json");
    if stale.exists() {
        fs::remove_file(stale)?;
    }
    Ok(())
}

fn summary_line(name: &str, holds: bool) -> String {
    format!("{:<26}{}", name, if holds { "ok" } else { "FAILED" })
}

fn cmd_run(exp: &Experiment, quiet: bool) -> CliResult<u8> {
    let dir = exp.out_dir();
    prepare_dir(&dir)?;
    let (report, dists) = run::run_experiment(exp)?;
    write_json(&dir.join("report.json"), &report)?;
    write_distribution(&dir.join("p_w.csv"), &dists.forward, dists.delta_w)?;
    if let Some(rev) = &dists.reverse {
        write_distribution(&dir.join("p_rev_w.csv"), rev, dists.delta_w)?;
    }
    if !quiet {
        for (name, holds) in &report.checks {
            println!("{}", summary_line(name, *holds));
        }
        println!("report written to {}", dir.join("report.json").display());
    }
    Ok(if report.all_hold { 0 } else { 1 })
}

fn cmd_sweep(exp: &Experiment, quiet: bool) -> CliResult<u8> {
    let dir = exp.out_dir();
    prepare_dir(&dir)?;
    let rows = sweep::sweep(exp)?;
    sweep::write_sweep(&dir.join("sweep.csv"), &rows)?;
    let mut all = true;
    for row in &rows {
        let holds = row.point.as_ref().map(|p| p.holds).unwrap_or(false);
        all &= holds;
        if !quiet {
            match &row.point {
                Ok(p) => println!(
                    "n={:<4} overlap={:.6} bound={:.6} r2={:.2e} {}",
                    row.n,
                    p.overlap,
                    p.bound,
                    p.r2,
                    if holds { "ok" } else { "FAILED" }
                ),
                Err(e) => println!("n={:<4} error: {e}", row.n),
            }
        }
    }
    Ok(if all { 0 } else { 1 })
}

fn cmd_validate(exp: &Experiment, quiet: bool) -> CliResult<u8> {
    if !quiet {
        print!("{}", to_json(&exp.raw)?);
    }
    Ok(0)
}

fn cmd_oracle(exp: &Experiment, quiet: bool) -> CliResult<u8> {
    let dir = exp.out_dir();
    prepare_dir(&dir)?;
    let n = exp.n().min(ORACLE_MAX_N);
    let report = full_label_oracle(&exp.coupling, exp.coupling.u(), n)?;
    let tol = exp.tolerance(Check::Oracle);
    let holds = report.max_discrepancy() <= tol;
    write_json(
        &dir.join("oracle.json"),
        &serde_json::json!({ "n": n, "oracle": report, "tolerance": tol, "holds": holds }),
    )?;
    if !quiet {
        println!("dense dimension {}, max discrepancy {:.3e}", report.dense_dim, report.max_discrepancy());
        println!("{}", summary_line("oracle", holds));
    }
    Ok(if holds { 0 } else { 1 })
}

type Handler = fn(&Experiment, bool) -> CliResult<u8>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, run): (&Common, Handler) = match &cli.command {
        Command::Run(a) => (a, cmd_run),
        Command::Sweep(a) => (a, cmd_sweep),
        Command::Validate(a) => (a, cmd_validate),
        Command::Oracle(a) => (a, cmd_oracle),
    };
    let mut out_dir = args.out.clone();
    let result = load(args).and_then(|exp| {
        out_dir = Some(exp.out_dir());
        run(&exp, args.quiet)
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => ExitCode::from(report_error(&e, out_dir.as_deref())),
    }
}

fn report_error(e: &CliError, dir: Option<&Path>) -> u8 {
    let record = e.record();
    let text = to_json(&record).unwrap_or_else(|_| format!("{{\"error\": {:?}}}\n", e.to_string()));
    eprint!("{text}");
    if let Some(dir) = dir {
        if fs::create_dir_all(dir).is_ok() {
            let _ = fs::write(dir.join("error.json"), &text);
        }
    }
    e.exit_code()
}
