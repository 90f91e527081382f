use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dwell_consensus::plot::emit_plot_data;
use dwell_consensus::scenario::{prepare, resolve_out_dir, write_artifacts, Scenario, EXIT_ERROR, EXIT_INVALID};
use dwell_consensus::schedule::{check_adt, generate_signal, tightest_adt, AdtParams};
use dwell_consensus::sweep::{estimate_critical_params, prepare_sweep, write_sweep_csv};
use dwell_consensus::Error;

#[derive(Parser)]
#[command(
    name = "dwell-consensus",
    version,
    about = "Simulate and certify consensus over switching topologies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a scenario and write trajectory, certificate and summary.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dt: Option<f64>,
        /// Also write gnuplot files.
        #[arg(long)]
        plot: bool,
    },
    /// Run a (g, tau) grid and write the long-format table.
    Sweep {
        sweepfile: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        dt: Option<f64>,
    },
    /// Check a scenario without simulating.
    Validate { scenario: PathBuf },
    /// Print a random admissible switching signal as CSV.
    GenSignal {
        /// Scenario providing the topology set.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        tau: f64,
        #[arg(long)]
        n0: usize,
        #[arg(long = "T0")]
        t0: f64,
        #[arg(long)]
        horizon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write gnuplot data files for a finished run directory.
    Plot { rundir: PathBuf },
}

fn exit_for(e: &Error) -> i32 {
    match e {
        Error::Parse { .. } | Error::Validation(_) => EXIT_INVALID,
        _ => EXIT_ERROR,
    }
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Run {
            scenario,
            out,
            dt,
            plot,
        } => {
            let sc = Scenario::load(&scenario)?;
            let prep = prepare(&sc)?.with_overrides(dt, None, None)?;
            let res = prep.run()?;
            let dir = resolve_out_dir(&sc, &base_dir(&scenario), out.as_deref());
            let summary = write_artifacts(&dir, &prep, &res)?;
            if plot {
                emit_plot_data(&dir)?;
            }
            println!("{}: {} (exit {})", sc.name, summary.verdict, res.exit_code);
            println!(
                "final consensus error {:.3e} (max {:.3e}), artifacts in {}",
                summary.final_error,
                summary.max_error,
                dir.display()
            );
            Ok(res.exit_code)
        }
        Command::Sweep {
            sweepfile,
            out,
            workers,
            dt,
        } => {
            let (spec, prep) = prepare_sweep(&sweepfile)?;
            let prep = prep.with_overrides(dt, None, None)?;
            let workers = workers
                .or(spec.workers)
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let table = estimate_critical_params(&prep, &spec.g, &spec.tau, &spec.seeds, workers)?;
            let dir = match out {
                Some(d) => d,
                None => resolve_out_dir(&prep.scenario, &base_dir(&sweepfile), None).join("sweep"),
            };
            fs::create_dir_all(&dir)?;
            write_sweep_csv(&table, fs::File::create(dir.join("sweep.csv"))?)?;
            let cells = serde_json::json!({
                "cells": table.cells,
                "critical": table.critical.map(|(g, tau)| serde_json::json!({"g": g, "tau": tau})),
                "monotone_in_g": table.monotone_in_g,
            });
            fs::write(
                dir.join("sweep_summary.json"),
                serde_json::to_string_pretty(&cells)? + "\n",
            )?;
            for c in &table.cells {
                println!(
                    "g={:<8} tau={:<8} converged {:>5.1}%  certified {:>5.1}%",
                    c.g,
                    c.tau,
                    100.0 * c.success_rate,
                    100.0 * c.certified_rate
                );
            }
            match table.critical {
                Some((g, tau)) => println!("empirical (g*, tau*) = ({g}, {tau})"),
                None => println!("no fully certified grid point"),
            }
            if !table.monotone_in_g {
                eprintln!("warning: success rate is not monotone in g on some row");
            }
            Ok(0)
        }
        Command::Validate { scenario } => {
            let sc = Scenario::load(&scenario)?;
            let prep = prepare(&sc)?;
            println!(
                "{}: valid ({} topologies, mu = {:.6}, ell = {}, K = {:?})",
                sc.name,
                prep.ts.len(),
                prep.ts.mu(),
                prep.ell,
                prep.gain.k
            );
            Ok(0)
        }
        Command::GenSignal {
            scenario,
            tau,
            n0,
            t0,
            horizon,
            seed,
            out,
        } => {
            let sc = Scenario::load(&scenario)?;
            let prep = prepare(&sc)?;
            let adt = AdtParams::new(tau, n0, t0)?;
            let sig = generate_signal(&prep.ts, &adt, horizon, seed)?;
            let mut body = String::from("topology,duration\n");
            for iv in sig.intervals() {
                body.push_str(&format!("{},{}\n", prep.ts.topology(iv.topology).label(), iv.duration));
            }
            match out {
                Some(p) => fs::write(p, body)?,
                None => print!("{body}"),
            }
            eprintln!(
                "{} intervals, adt ok: {}, tightest tau {:.6}",
                sig.len(),
                check_adt(&sig, tau, n0),
                tightest_adt(&sig, n0)
            );
            Ok(0)
        }
        Command::Plot { rundir } => {
            for p in emit_plot_data(&rundir)? {
                println!("{}", p.display());
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            match &e {
                Error::Validation(list) => {
                    eprintln!("validation failed:");
                    for v in list {
                        eprintln!("  - {v}");
                    }
                }
                other => eprintln!("error: {other}"),
            }
            exit_for(&e)
        }
    };
    ExitCode::from(code as u8)
}
