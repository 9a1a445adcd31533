#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;
mod output;
mod svg;

use config::Method;

#[derive(Parser, Debug)]
#[command(name = "bfpo", version, about = "Bi-factorial preference optimization on tabular policies")]
struct Cli {
    /// Base seed for training and audits; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config's `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write the all-pairs dataset and the ground truth.
    Gen {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train every configured method and write curves and a manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated methods, replacing the config's list.
        #[arg(long, value_delimiter = ',')]
        method: Option<Vec<Method>>,
    },
    /// Run the enumeration audit and print the report as JSON.
    Audit {
        #[arg(long)]
        config: PathBuf,
        /// Exit with status 1 unless the verdict is pass.
        #[arg(long)]
        expect_pass: bool,
        #[arg(long)]
        n_theta: Option<usize>,
    },
    /// Rerun the illustrative four-action comparison of DPO, IPO and BFPO.
    #[command(name = "reproduce-fig4")]
    ReproduceFig4,
    /// One training run per parameter value and an aggregate CSV of rankings.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<f64>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    Tau,
    Alpha,
}

pub struct Globals {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

impl Globals {
    pub fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

pub enum Failure {
    /// Bad input, unreadable files, invalid configs.
    Usage(anyhow::Error),
    /// A check the user asked for did not hold.
    Verdict(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = Globals { seed: cli.seed, out: cli.out, quiet: cli.quiet };
    let result = match cli.cmd {
        Cmd::Gen { config } => commands::gen(&g, &config),
        Cmd::Train { config, method } => commands::train(&g, &config, method),
        Cmd::Audit { config, expect_pass, n_theta } => commands::audit(&g, &config, expect_pass, n_theta),
        Cmd::ReproduceFig4 => commands::reproduce_fig4(&g),
        Cmd::Sweep { config, param, values } => commands::sweep(&g, &config, param, &values),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict(msg)) => {
            eprintln!("bfpo: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("bfpo: {e:#}");
            ExitCode::from(2)
        }
    }
}
