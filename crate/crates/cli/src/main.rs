use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use palmcluster_cli::config::{figure_config, load, Figure};
use palmcluster_cli::verify::{run_suite, Suite};
use palmcluster_cli::{init_threads, run, CliError};

/// Palm calculus and D2D coverage experiments for Poisson cluster processes.
///
/// Thread count: PALMCLUSTER_THREADS (default: all cores).
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureArg {
    Fig2,
    Fig3,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Palm,
    Exchange,
    Coverage,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML config or a run manifest.
    Run { config: PathBuf },
    /// Regenerate the coverage (fig2) or discovery (fig3) curves.
    Reproduce {
        figure: FigureArg,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Monte Carlo replications per sigma2.
        #[arg(long, default_value_t = 20_000)]
        reps: u64,
    },
    /// Quick analytic-versus-simulation checks.
    Verify {
        /// Run one suite only.
        #[arg(long)]
        suite: Option<SuiteArg>,
        #[arg(long, default_value_t = 20_000)]
        reps: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn verify(suite: Option<SuiteArg>, reps: u64, seed: u64) -> Result<(), CliError> {
    let suites = match suite {
        None => vec![Suite::Palm, Suite::Exchange, Suite::Coverage],
        Some(SuiteArg::Palm) => vec![Suite::Palm],
        Some(SuiteArg::Exchange) => vec![Suite::Exchange],
        Some(SuiteArg::Coverage) => vec![Suite::Coverage],
    };
    let mut failed = 0;
    for s in suites {
        for l in run_suite(s, reps, seed)? {
            println!("{} {}", if l.pass { "PASS" } else { "FAIL" }, l.text);
            failed += usize::from(!l.pass);
        }
    }
    if failed > 0 {
        return Err(CliError::Verification(format!("{failed} checks outside their confidence intervals")));
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config)?;
            let m = run::run(&cfg)?;
            for p in &m.outputs {
                println!("wrote {}", p.display());
            }
        }
        Command::Reproduce { figure, out, seed, reps } => {
            let fig = match figure {
                FigureArg::Fig2 => Figure::Fig2,
                FigureArg::Fig3 => Figure::Fig3,
            };
            let m = run::run(&figure_config(fig, seed, reps, &out))?;
            for p in &m.outputs {
                println!("wrote {}", p.display());
            }
        }
        Command::Verify { suite, reps, seed } => verify(suite, reps, seed)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
