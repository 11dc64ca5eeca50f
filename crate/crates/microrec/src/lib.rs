//! File formats, run configuration, and the pipeline driver behind the
//! `microrec` command.

pub mod config;
pub mod io;
pub mod stages;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::ResolvedConfig;
use crate::stages::{Session, Stage};

#[derive(Debug, Parser)]
#[command(name = "microrec", version, about = "Semi-supervised factor-graph recommendation of microblog items")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// INI config file; every key not given takes its default.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set edge.d_max=0`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and its withheld labels.
    Synth,
    /// Check the corpus against its invariants.
    Validate,
    /// Compute pair attributes, profiles, and distances.
    Features,
    /// Build influence edges and the factor graph.
    BuildGraph,
    /// Fit the weights on the known labels.
    Train,
    /// Predict the unknown labels.
    Predict,
    /// Score predictions against the withheld labels.
    Eval,
    /// Retrain and score every ablation variant.
    Ablate,
    /// synth (or ingest), validate, features, build-graph, train, predict, eval.
    Pipeline,
    /// Print the fully resolved config.
    Config,
}

pub const EXIT_STAGE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

pub fn resolve(cli: &Cli) -> Result<ResolvedConfig, config::ConfigError> {
    let mut cfg = match &cli.config {
        Some(path) => ResolvedConfig::load(path)?,
        None => ResolvedConfig::default(),
    };
    for o in &cli.overrides {
        cfg.apply_override(o)?;
    }
    Ok(cfg)
}

/// Runs the parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let resolved = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Command::Config = cli.command {
        print!("{}", resolved.render());
        return 0;
    }
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get())).max(1);
    let mut session = match Session::open(resolved, threads) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_STAGE;
        }
    };
    let result = match cli.command {
        Command::Synth => session.run(Stage::Synth),
        Command::Validate => session.run(Stage::Validate),
        Command::Features => session.run(Stage::Features),
        Command::BuildGraph => session.run(Stage::BuildGraph),
        Command::Train => session.run(Stage::Train),
        Command::Predict => session.run(Stage::Predict),
        Command::Eval => session.run(Stage::Eval),
        Command::Ablate => session.run(Stage::Ablate),
        Command::Pipeline => session.pipeline(),
        Command::Config => unreachable!("handled above"),
    };
    match result {
        Ok(()) => {
            println!("{}", session.dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_STAGE
        }
    }
}
