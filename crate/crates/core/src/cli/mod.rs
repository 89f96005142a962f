mod commands;
pub mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use config::{FlagLayer, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments, unreadable files, malformed configuration or grammar.
    #[error("{0}")]
    Usage(String),
    /// The inputs were fine but the answer is "no".
    #[error("{0}")]
    Semantic(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Semantic(_) => 1,
            CliError::Usage(_) => 2,
        }
    }
}

/// Outcome of a subcommand that ran to completion: its report and exit code.
pub struct Outcome {
    pub stdout: String,
    pub code: u8,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Outcome { stdout, code: 0 }
    }

    fn failed(stdout: String) -> Self {
        Outcome { stdout, code: 1 }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "xmlprompt",
    version,
    about = "Typed XML prompt trees: grammar masks, metrics, fixed points, invariants and protocol runs"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "XMLPROMPT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true, env = "XMLPROMPT_SEED")]
    pub seed: Option<u64>,
    /// Depth bound of the tree metric.
    #[arg(long, global = true, env = "XMLPROMPT_MAX_DEPTH")]
    pub max_depth: Option<usize>,
    /// Round or step budget.
    #[arg(long, global = true, env = "XMLPROMPT_BUDGET")]
    pub budget: Option<usize>,
    /// Completion endpoint for http proposers.
    #[arg(long, global = true, env = "XMLPROMPT_ENDPOINT")]
    pub endpoint: Option<String>,
    /// Evidence confidence threshold of the answer gate.
    #[arg(long, global = true, env = "XMLPROMPT_THRESHOLD")]
    pub threshold: Option<f64>,
    /// Run protocol branches on threads.
    #[arg(long, global = true, env = "XMLPROMPT_CONCURRENT")]
    pub concurrent: Option<bool>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a document against a grammar.
    Validate {
        grammar: PathBuf,
        document: PathBuf,
        /// Start rule other than the grammar's first.
        #[arg(long)]
        start: Option<String>,
    },
    /// List the vocabulary tokens allowed after a prefix, one per line.
    Mask {
        grammar: PathBuf,
        prefix: PathBuf,
        vocab: PathBuf,
    },
    /// Draw grammar-constrained samples.
    Sample {
        grammar: PathBuf,
        /// Vocabulary file; printable ASCII characters otherwise.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        max_tokens: Option<usize>,
        #[arg(long)]
        stop_prob: Option<f64>,
        /// Prune tokens that make any of these invariants unsatisfiable.
        #[arg(long)]
        invariants: Option<PathBuf>,
    },
    /// Run a protocol or hole-filler spec and write its transcript.
    Iterate {
        spec: PathBuf,
        /// Transcript directory.
        #[arg(long, default_value = "transcript")]
        out: PathBuf,
    },
    /// Check every invariant of a file against a document.
    Check {
        invariants: PathBuf,
        document: PathBuf,
    },
    /// Estimate the contraction factor of a spec's iteration.
    EstimateQ {
        spec: PathBuf,
        #[arg(long)]
        pairs: Option<usize>,
    },
}

impl Cli {
    fn flags(&self) -> FlagLayer {
        FlagLayer {
            seed: self.seed,
            max_depth: self.max_depth,
            budget: self.budget,
            endpoint: self.endpoint.clone(),
            threshold: self.threshold,
            concurrent: self.concurrent,
        }
    }

    pub fn config(&self) -> Result<RunConfig, CliError> {
        let base = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        base.apply(&self.flags())
    }
}

pub fn execute(cli: &Cli) -> Result<Outcome, CliError> {
    let mut cfg = cli.config()?;
    match &cli.command {
        Command::Validate {
            grammar,
            document,
            start,
        } => commands::validate(grammar, document, start.as_deref()),
        Command::Mask {
            grammar,
            prefix,
            vocab,
        } => commands::mask(grammar, prefix, vocab),
        Command::Sample {
            grammar,
            vocab,
            count,
            max_tokens,
            stop_prob,
            invariants,
        } => {
            let s = &mut cfg.sample;
            s.count = count.unwrap_or(s.count);
            s.max_tokens = max_tokens.unwrap_or(s.max_tokens);
            s.stop_prob = stop_prob.unwrap_or(s.stop_prob);
            if !(0.0..=1.0).contains(&s.stop_prob) {
                return Err(CliError::Usage(
                    "stop probability must lie in [0, 1]".into(),
                ));
            }
            commands::sample(&cfg, grammar, vocab.as_deref(), invariants.as_deref())
        }
        Command::Iterate { spec, out } => commands::iterate(&cfg, spec, out),
        Command::Check {
            invariants,
            document,
        } => commands::check(invariants, document),
        Command::EstimateQ { spec, pairs } => {
            cfg.estimate.pairs = pairs.unwrap_or(cfg.estimate.pairs);
            commands::estimate_q(&cfg, spec)
        }
    }
}

pub fn main_with(cli: Cli) -> ExitCode {
    match execute(&cli) {
        Ok(out) => {
            print!("{}", out.stdout);
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
