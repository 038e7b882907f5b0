// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use minkproj_cli::{run, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "minkproj", version, about = "Projection onto generalized Minkowski sets")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Cmd {
    /// Project the input model onto the configured set.
    Project,
    /// Minimize the configured objective over the set.
    SolveSpg,
    /// Project with an additional data-fit constraint on the sum.
    ProjectDatafit,
    /// Split a video into background and anomaly.
    VideoDecompose,
    /// Draw set elements by projecting random vectors.
    Sample,
    /// Validate the config and the set specification.
    Check,
    /// Write synthetic test data.
    Generate,
}

#[derive(Args)]
struct Common {
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// ADMM iteration limit (SPG iterations for solve-spg).
    #[arg(long, global = true)]
    max_iters: Option<usize>,
    /// Relative primal and dual ADMM tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = match cli.command {
        Cmd::Project => Command::Project,
        Cmd::SolveSpg => Command::SolveSpg,
        Cmd::ProjectDatafit => Command::ProjectDatafit,
        Cmd::VideoDecompose => Command::VideoDecompose,
        Cmd::Sample => Command::Sample,
        Cmd::Check => Command::Check,
        Cmd::Generate => Command::Generate,
    };
    let Some(config) = cli.common.config else {
        eprintln!("error: --config is required");
        return ExitCode::from(2);
    };
    let overrides = Overrides {
        out_dir: cli.common.out_dir,
        seed: cli.common.seed,
        max_iters: cli.common.max_iters,
        tol: cli.common.tol,
        threads: cli.common.threads,
    };
    let result = RunConfig::load(command, &config, overrides).and_then(|cfg| run(&cfg));
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
