use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stochwave_cli::{execute, parse_config, Command};

const GRAMMAR: &str = "usage: stochwave <identities|weights-order|simulate|carleman|stability|martingale> \
--config <path> [--output-dir <path>] [--paths <int>] [--seed <u64>]";

#[derive(Parser)]
#[command(name = "stochwave", version, about = "Stochastic wave scheme laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Residuals of the discrete calculus identities on random functions
    Identities(Common),
    /// Convergence orders of the discrete weight expressions
    WeightsOrder(Common),
    /// Solve an ensemble and write trajectories and observations
    Simulate(Common),
    /// Weighted energy estimate terms, optionally swept over one parameter
    Carleman(Common),
    /// Stability terms for two coupled ensembles
    Stability(Common),
    /// Orthogonality of the solution against the noise increments
    Martingale(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides `output_dir`
    #[arg(long, value_name = "PATH")]
    output_dir: Option<String>,
    /// Overrides `mc.paths`
    #[arg(long, value_name = "INT")]
    paths: Option<usize>,
    /// Overrides `mc.master_seed`
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            eprintln!("\n{GRAMMAR}");
            return ExitCode::from(2);
        }
        // --help and --version
        Err(e) => e.exit(),
    };
    let (cmd, args) = match cli.command {
        Sub::Identities(a) => (Command::Identities, a),
        Sub::WeightsOrder(a) => (Command::WeightsOrder, a),
        Sub::Simulate(a) => (Command::Simulate, a),
        Sub::Carleman(a) => (Command::Carleman, a),
        Sub::Stability(a) => (Command::Stability, a),
        Sub::Martingale(a) => (Command::Martingale, a),
    };
    let (mut cfg, bytes) = match parse_config(&args.config) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    let overrides = cfg.apply_overrides(args.paths, args.seed, args.output_dir.as_deref());
    match execute(cmd, &cfg, &bytes, &overrides) {
        Ok(outcome) => {
            // a closed stdout must not change the exit code
            let mut so = std::io::stdout().lock();
            for line in &outcome.summary {
                let _ = writeln!(so, "{line}");
            }
            for f in &outcome.files {
                let _ = writeln!(so, "wrote {}", f.display());
            }
            match outcome.code {
                0 => {}
                5 => eprintln!("error: weight parameters are not admissible on this grid"),
                _ => eprintln!("error: {} check failed", cmd.name()),
            }
            ExitCode::from(outcome.code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
