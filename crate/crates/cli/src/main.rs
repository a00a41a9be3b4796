//! `facloc`: generate instances, run the pipeline and its oracles, verify
//! results and export benchmark tables.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "facloc", version, about = "Distributed metric facility location simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded grid instance.
    Gen {
        n_f: usize,
        n_c: usize,
        seed: u64,
        /// Largest opening cost (default: four grid spans).
        #[arg(long)]
        f_max: Option<u64>,
        /// Side length of the placement grid.
        #[arg(long)]
        span: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an algorithm on an instance and check the result.
    Run {
        instance: PathBuf,
        #[arg(long, value_enum, default_value_t = Algorithm::Locate)]
        algorithm: Algorithm,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the result JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the pipeline over a grid of sizes and seeds and write a CSV table.
    Bench {
        /// Comma-separated sizes; each runs with n_f = n_c.
        #[arg(long, value_delimiter = ',', default_value = "64,256,1024")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 20)]
        trials: u64,
        #[arg(long)]
        out: PathBuf,
        /// Run the cells one after another.
        #[arg(long)]
        sequential: bool,
    },
    /// Validate an instance and, optionally, a result produced by `run`.
    Verify {
        instance: PathBuf,
        #[arg(long)]
        result: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum Algorithm {
    /// The distributed pipeline.
    Locate,
    /// Sequential greedy by radius.
    Mp,
    /// Exhaustive optimum (at most 20 facilities).
    Opt,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Gen { n_f, n_c, seed, f_max, span, out } => commands::gen(n_f, n_c, seed, f_max, span, &out),
        Command::Run { instance, algorithm, seed, out } => commands::run(&instance, algorithm, seed, out.as_deref()),
        Command::Bench { sizes, trials, out, sequential } => commands::bench(&sizes, trials, &out, sequential),
        Command::Verify { instance, result } => commands::verify(&instance, result.as_deref()),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("verification failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
