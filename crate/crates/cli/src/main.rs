//! `stealthlab` command-line runner.

use std::path::PathBuf;
use std::process::ExitCode;
use std::thread;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use stealthlab::attacks::{ZdaSynthesis, ZeroBranch};
use stealthlab::export::write_run_outputs;
use stealthlab::scenario::{
    bundled_names, bundled_scenario, check_expectations, load_scenario, run_scenario, synthesize, Check,
    SynthesisRecord,
};

const OUT_DIR_ENV: &str = "STEALTHLAB_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "stealthlab-out";

#[derive(Parser, Debug)]
#[command(name = "stealthlab", version, about = "Stealthy attack scenarios on a lateral vehicle model")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario (file path or bundled name) and write CSV, SVG and summary.
    Run {
        spec: String,
        /// Output directory; falls back to $STEALTHLAB_OUT_DIR, then ./stealthlab-out.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print synthesized attack constants without simulating.
    Synthesize { spec: String },
    /// Run every bundled scenario and print a pass/fail table.
    Suite {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// List bundled scenarios.
    List,
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from)).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

fn cmd_run(spec: &str, out: Option<PathBuf>) -> Result<ExitCode> {
    let spec = load_scenario(spec)?;
    let (trace, summary) = run_scenario(&spec)?;
    let dir = out_dir(out);
    let files = write_run_outputs(&spec.name, &trace, &summary, &dir)?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    for e in &summary.events {
        eprintln!("note: {e}");
    }
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    eprintln!("wall time {:.3} s", summary.wall_time_s);
    Ok(ExitCode::SUCCESS)
}

fn cmd_synthesize(spec: &str) -> Result<ExitCode> {
    let spec = load_scenario(spec)?;
    let Some(record) = synthesize(&spec)? else {
        println!("scenario `{}` has nothing to synthesize", spec.name);
        return Ok(ExitCode::SUCCESS);
    };
    println!("{}", serde_json::to_string_pretty(&record)?);
    match record {
        SynthesisRecord::ZdaLinear { synthesis: ZdaSynthesis::Infeasible, .. } => {
            eprintln!("{}: no invariant zeros, attack not feasible", spec.name);
            Ok(ExitCode::from(2))
        }
        SynthesisRecord::ZdaNonlinear { plan, .. } if plan.branch != ZeroBranch::Z1 => {
            eprintln!("{}: no nontrivial zero-output trajectory from this state", spec.name);
            Ok(ExitCode::from(2))
        }
        _ => Ok(ExitCode::SUCCESS),
    }
}

struct SuiteRow {
    name: String,
    outcome: Result<(Vec<Check>, f64), String>,
}

fn run_one(name: &str, dir: &std::path::Path) -> SuiteRow {
    let outcome = (|| -> Result<(Vec<Check>, f64)> {
        let spec = bundled_scenario(name)?;
        let (trace, summary) = run_scenario(&spec)?;
        write_run_outputs(name, &trace, &summary, dir).with_context(|| format!("writing outputs for {name}"))?;
        Ok((check_expectations(&spec, &trace, &summary), summary.wall_time_s))
    })();
    SuiteRow { name: name.to_string(), outcome: outcome.map_err(|e| format!("{e:#}")) }
}

fn cmd_suite(out: Option<PathBuf>, jobs: Option<usize>) -> Result<ExitCode> {
    let dir = out_dir(out);
    let names = bundled_names();
    let jobs = jobs.unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let mut rows: Vec<Option<SuiteRow>> = (0..names.len()).map(|_| None).collect();
    thread::scope(|s| {
        let chunk = names.len().div_ceil(jobs);
        let handles: Vec<_> = names
            .chunks(chunk)
            .enumerate()
            .map(|(ci, group)| {
                let dir = &dir;
                s.spawn(move || group.iter().enumerate().map(|(i, n)| (ci * chunk + i, run_one(n, dir))).collect::<Vec<_>>())
            })
            .collect();
        for h in handles {
            for (i, row) in h.join().expect("suite worker panicked") {
                rows[i] = Some(row);
            }
        }
    });

    let width = names.iter().map(|n| n.len()).max().unwrap_or(8);
    let mut failed = 0;
    println!("{:<width$}  {:<6}  {:>8}  checks", "scenario", "result", "time [s]");
    for row in rows.into_iter().flatten() {
        match row.outcome {
            Ok((checks, wall)) => {
                let ok = checks.iter().all(|c| c.passed);
                if !ok {
                    failed += 1;
                }
                let detail: Vec<String> = checks
                    .iter()
                    .map(|c| format!("{}{}", if c.passed { "" } else { "FAILED " }, c.name))
                    .collect();
                println!("{:<width$}  {:<6}  {:>8.3}  {}", row.name, if ok { "pass" } else { "FAIL" }, wall, detail.join(", "));
                for c in checks.iter().filter(|c| !c.passed) {
                    println!("{:<width$}          {}: {}", "", c.name, c.detail);
                }
            }
            Err(e) => {
                failed += 1;
                println!("{:<width$}  {:<6}  {:>8}  {e}", row.name, "ERROR", "-");
            }
        }
    }
    println!("{} scenarios, {} failed; outputs in {}", names.len(), failed, dir.display());
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn cmd_list() -> Result<ExitCode> {
    for name in bundled_names() {
        let spec = bundled_scenario(name)?;
        println!("{name:<34} {}", spec.description);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = match args.command {
        Command::Run { spec, out } => cmd_run(&spec, out),
        Command::Synthesize { spec } => cmd_synthesize(&spec),
        Command::Suite { out, jobs } => cmd_suite(out, jobs),
        Command::List => cmd_list(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
