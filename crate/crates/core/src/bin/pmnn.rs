use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use pmnn::bench::{
    convergence_study, parse_list, run_fdm, run_solve, run_table, weights, write_convergence_csv, write_prediction_csv,
    write_table_csv, write_weights, RunConfig, TableId, TestFunction,
};
use pmnn::benchmarks::ExampleId;
use pmnn::solver::Scheme;

#[derive(Parser)]
#[command(name = "pmnn", version, about = "Neural and finite-difference solvers for time-fractional equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the first N discretization weights.
    Weights {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value = "l1")]
        scheme: Scheme,
        #[arg(long, default_value_t = 8)]
        n: usize,
    },
    /// Empirical convergence order of a Caputo approximation (CSV).
    Convergence {
        #[arg(long, default_value = "l1")]
        scheme: Scheme,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        /// const, t, t2, t3 or t4
        #[arg(long, default_value = "t3")]
        function: TestFunction,
        /// Step counts, comma separated.
        #[arg(long, default_value = "64,128,256,512")]
        ns: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a network on a benchmark and write a JSON report.
    Solve {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write predictions on the evaluation grid (CSV).
        #[arg(long)]
        dump_prediction: Option<PathBuf>,
    },
    /// Reproduce one error table (CSV).
    Table {
        /// ode-err, pde1d-err, pde1d-nx, pde2d-err or pde2d-nx
        #[arg(long)]
        table: TableId,
        /// Seeds, comma separated (default 42).
        #[arg(long, default_value = "")]
        seeds: String,
        #[arg(long)]
        max_iters: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference reference solution (CSV).
    Fdm {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long, default_value = "1")]
    example: ExampleId,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value = "l1")]
    scheme: Scheme,
    #[arg(long, default_value_t = 41)]
    nt: usize,
    #[arg(long, default_value_t = 11)]
    nx: usize,
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Weights { alpha, scheme, n } => {
            let w = weights(alpha, scheme, n)?;
            let mut out = output(None)?;
            write_weights(&mut out, &w)?;
            out.flush()?;
        }
        Command::Convergence { scheme, alpha, function, ns, out } => {
            let steps: Vec<usize> = parse_list(&ns)?;
            let study = convergence_study(scheme, alpha, function, &steps)?;
            let mut w = output(out.as_deref())?;
            write_convergence_csv(&mut w, &study)?;
            w.flush()?;
        }
        Command::Solve { problem, seed, max_iters, out, dump_prediction } => {
            let config = RunConfig {
                example: problem.example,
                alpha: problem.alpha,
                scheme: problem.scheme,
                nt: problem.nt,
                nx: problem.nx,
                seed,
                max_iters,
            };
            let (ivp, params, report) = run_solve(&config)?;
            let mut w = output(out.as_deref())?;
            serde_json::to_writer_pretty(&mut w, &report)?;
            writeln!(w)?;
            w.flush()?;
            if let Some(path) = dump_prediction {
                let mut w = output(Some(&path))?;
                write_prediction_csv(&mut w, &ivp, &params)?;
                w.flush()?;
            }
        }
        Command::Table { table, seeds, max_iters, out } => {
            let seeds: Vec<u64> = parse_list(&seeds)?;
            let rows = run_table(table, &seeds, max_iters)?;
            let mut w = output(out.as_deref())?;
            write_table_csv(&mut w, &rows, &seeds)?;
            w.flush()?;
        }
        Command::Fdm { problem, out } => {
            let sol = run_fdm(problem.example, problem.alpha, problem.scheme, problem.nt, problem.nx)?;
            let ivp = problem.example.build(pmnn::caputo::FractionalOrder::new(problem.alpha)?);
            if let Some(e) = sol.max_abs_error(&ivp) {
                eprintln!("max abs error vs exact: {e}");
            }
            let mut w = output(out.as_deref())?;
            sol.write_csv(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

/// 3 for I/O failures, 2 for bad input, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<io::Error>().is_some() {
            return 3;
        }
        match cause.downcast_ref::<pmnn::Error>() {
            Some(pmnn::Error::Io(_)) => return 3,
            Some(pmnn::Error::InvalidArgument(_) | pmnn::Error::Domain(_)) => return 2,
            _ => {}
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
