//! Command-line front end: solve, oracle, sample, and check runs over a case
//! file. Exit codes: 0 success, 2 input error, 3 solver failure, 4
//! cross-check mismatch.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use tiesched::casefile::{emit_report, parse_case, BigM, CaseSpec};
use tiesched::harness;

#[derive(Parser)]
#[command(name = "tiesched", about = "Tie-line scheduling for multi-area DC power systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Probe step length override.
    #[arg(long, global = true)]
    epsilon: Option<f64>,

    /// Relative optimality tolerance override.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Big-M selection: "auto" or a fixed value.
    #[arg(long, global = true)]
    big_m: Option<String>,

    /// Iteration cap (outer loop for robust runs, inner loop as well).
    #[arg(long, global = true)]
    max_iters: Option<u32>,

    /// Write the run report to this file instead of stdout.
    #[arg(long, global = true, value_name = "OUT")]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Det,
    Robust,
}

#[derive(Subcommand)]
enum Command {
    /// Run the distributed scheduler.
    Solve {
        #[arg(long)]
        case: PathBuf,
        #[arg(long, value_enum, default_value = "det")]
        mode: Mode,
    },
    /// Run the ground-truth oracle for the same problem.
    Oracle {
        #[arg(long)]
        case: PathBuf,
        #[arg(long, value_enum, default_value = "det")]
        mode: Mode,
    },
    /// Robust solve plus a seeded scenario sweep.
    Sample {
        #[arg(long)]
        case: PathBuf,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every applicable cross-check on the case.
    Check {
        #[arg(long)]
        case: PathBuf,
    },
}

const EXIT_INPUT: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_MISMATCH: u8 = 4;

fn load_case(path: &PathBuf, cli: &Cli) -> Result<CaseSpec, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut case = parse_case(&text).map_err(|e| e.to_string())?;
    if let Some(eps) = cli.epsilon {
        case.options.epsilon = eps;
    }
    if let Some(tol) = cli.tol {
        case.options.tol_opt = tol;
    }
    if let Some(big_m) = &cli.big_m {
        case.options.big_m = if big_m == "auto" {
            BigM::Auto
        } else {
            BigM::Fixed(
                big_m
                    .parse::<f64>()
                    .map_err(|_| format!("--big-m must be \"auto\" or a number, got {big_m:?}"))?,
            )
        };
    }
    if let Some(iters) = cli.max_iters {
        case.options.max_outer_iters = iters;
        case.options.max_inner_iters = iters;
    }
    case.validate().map_err(|e| e.to_string())?;
    Ok(case)
}

fn emit(cli: &Cli, record: &tiesched::casefile::RunRecord) -> Result<(), String> {
    let text = emit_report(record);
    match &cli.report {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run() -> Result<(), (u8, String)> {
    let cli = Cli::parse();
    let input = |e: String| (EXIT_INPUT, e);
    let solver = |e: tiesched::Error| (EXIT_SOLVER, e.to_string());
    match &cli.command {
        Command::Solve { case, mode } => {
            let case = load_case(case, &cli).map_err(input)?;
            let robust = matches!(mode, Mode::Robust);
            let (record, _) = harness::run_solve(&case, robust).map_err(solver)?;
            eprintln!("cost {} after {} ledger rows", record.cost, record.iterations.len());
            emit(&cli, &record).map_err(input)
        }
        Command::Oracle { case, mode } => {
            let case = load_case(case, &cli).map_err(input)?;
            let robust = matches!(mode, Mode::Robust);
            let record = harness::run_oracle(&case, robust).map_err(solver)?;
            eprintln!("oracle cost {}", record.cost);
            emit(&cli, &record).map_err(input)
        }
        Command::Sample { case, n, seed } => {
            let case = load_case(case, &cli).map_err(input)?;
            let seed = seed.unwrap_or(case.options.seed);
            let record = harness::run_sample(&case, *n, seed).map_err(solver)?;
            eprintln!(
                "robust cost {}, worst sampled re-dispatch {}",
                record.cost,
                record.samples.as_ref().map(|s| s.max_p2).unwrap_or(f64::NAN)
            );
            emit(&cli, &record).map_err(input)
        }
        Command::Check { case } => {
            let case = load_case(case, &cli).map_err(input)?;
            let lines = harness::run_check(&case).map_err(solver)?;
            let mut all_ok = true;
            for line in &lines {
                println!(
                    "{}: {} ({})",
                    line.name,
                    if line.pass { "ok" } else { "MISMATCH" },
                    line.detail
                );
                all_ok &= line.pass;
            }
            if all_ok {
                Ok(())
            } else {
                Err((EXIT_MISMATCH, "cross-check mismatch".into()))
            }
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
