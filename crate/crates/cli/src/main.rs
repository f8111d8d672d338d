use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dude_cli::commands::{gradcheck_cases, gradcheck_cmd, svd_cmd};
use dude_cli::compare::{compare, comparison_csv};
use dude_cli::config::Overrides;
use dude_cli::experiment::run_experiment;
use dude_cli::CliError;

#[derive(Debug, Parser)]
#[command(name = "dude", version, about = "Low-rank adapter experiments: training runs, comparisons, gradient checks and SVD inspection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train every configured seed and write metrics_<seed>.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Tabulate mean and std of final loss per method across run directories.
    Compare {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare analytic gradients against central finite differences.
    Gradcheck {
        /// A method name, or `all`.
        #[arg(long)]
        method: String,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
    /// Truncated SVD of a CSV matrix.
    Svd {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        rank: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            seed,
            method,
            rank,
            lr,
        } => {
            let artifact = run_experiment(&config, &Overrides { seed, method, rank, lr })?;
            for path in &artifact.metrics {
                println!("wrote {}", path.display());
            }
            println!("wrote {}", artifact.summary.display());
        }
        Command::Compare { dirs, out } => {
            let rows = compare(&dirs, &out)?;
            print!("{}", comparison_csv(&rows));
        }
        Command::Gradcheck {
            method,
            d,
            k,
            rank,
            seed,
        } => {
            let cases = gradcheck_cases(&method, d, k, rank, seed)?;
            gradcheck_cmd(&cases, &mut std::io::stdout())?;
        }
        Command::Svd { input, rank, out } => {
            let outputs = svd_cmd(&input, rank, &out)?;
            println!("residual {:e}", outputs.residual_norm);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
