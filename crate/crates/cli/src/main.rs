//! `factdebate`: claim-level hallucination detection by multi-agent debate.
//!
//! Exit status: 0 when the verdict is factual (or nothing was checkable),
//! 1 when a hallucination was found, 2 on any error.

mod commands;
mod config;

use std::collections::BTreeMap;
use std::io::IsTerminal;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

use crate::config::Layer;

#[derive(Parser, Debug)]
#[command(name = "factdebate", version, about = "Detect hallucinations by debating each claim")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

/// Flags override `FACTDEBATE_*` variables, which override the config file.
/// The API keys are deliberately file or environment only.
#[derive(Args, Debug, Default)]
struct GlobalArgs {
    /// TOML config file (default: $FACTDEBATE_CONFIG)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Completion backend: http, scripted or replay
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Script file for the scripted backend
    #[arg(long, global = true, value_name = "FILE")]
    script: Option<String>,
    /// Fixture directory for the replay backend
    #[arg(long, global = true, value_name = "DIR")]
    fixtures: Option<String>,
    /// Chat completions endpoint for the http backend
    #[arg(long, global = true, value_name = "URL")]
    endpoint: Option<String>,
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    temperature: Option<String>,
    #[arg(long, global = true)]
    max_tokens: Option<String>,
    /// Provider calls allowed per run; 0 disables the limit
    #[arg(long, global = true)]
    call_budget: Option<String>,
    /// Requests per minute; 0 disables throttling
    #[arg(long, global = true)]
    rate_limit_rpm: Option<String>,
    /// Directory for the content-addressed response cache
    #[arg(long, global = true, value_name = "DIR")]
    cache_dir: Option<String>,
    /// true-to-skeptic, true-to-trust, always-skeptic or always-trust
    #[arg(long, global = true)]
    policy: Option<String>,
    #[arg(long, global = true)]
    min_rounds: Option<String>,
    #[arg(long, global = true)]
    max_rounds: Option<String>,
    /// Evidence snippets per claim
    #[arg(long, global = true)]
    evidence_k: Option<String>,
    /// Re-asks allowed per agent when its reply does not parse
    #[arg(long, global = true)]
    opinion_retries: Option<String>,
    /// Search provider: none, fixture or web
    #[arg(long, global = true)]
    search: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    search_fixtures: Option<String>,
    #[arg(long, global = true, value_name = "URL")]
    search_endpoint: Option<String>,
    #[arg(long, global = true)]
    search_cx: Option<String>,
    /// Worker threads for claims and responses
    #[arg(long, global = true)]
    parallel: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
}

impl GlobalArgs {
    fn flag_layer(&self) -> Layer {
        let pairs = [
            ("backend", &self.backend),
            ("script", &self.script),
            ("fixtures", &self.fixtures),
            ("endpoint", &self.endpoint),
            ("model", &self.model),
            ("temperature", &self.temperature),
            ("max_tokens", &self.max_tokens),
            ("call_budget", &self.call_budget),
            ("rate_limit_rpm", &self.rate_limit_rpm),
            ("cache_dir", &self.cache_dir),
            ("policy", &self.policy),
            ("min_rounds", &self.min_rounds),
            ("max_rounds", &self.max_rounds),
            ("evidence_k", &self.evidence_k),
            ("opinion_retries", &self.opinion_retries),
            ("search", &self.search),
            ("search_fixtures", &self.search_fixtures),
            ("search_endpoint", &self.search_endpoint),
            ("search_cx", &self.search_cx),
            ("parallel", &self.parallel),
            ("seed", &self.seed),
        ];
        pairs
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k.to_string(), v)))
            .collect()
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Verify one response read from a JSON sample file
    Verify {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Write the transcript document here instead of stdout
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Run a labelled dataset and report claim- and response-level metrics
    Evaluate {
        #[arg(long, value_name = "FILE")]
        dataset: PathBuf,
        /// factool-qa, halueval-qa, halueval-summarization or halueval-dialogue
        #[arg(long)]
        format: String,
        /// Draw a balanced subset of this size
        #[arg(long)]
        n: Option<usize>,
        /// Probability that a drawn sample is hallucinated
        #[arg(long, default_value_t = 0.5)]
        p: f64,
        /// Directory for report.json and per-response transcripts
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Debate a single claim against given evidence
    Debate {
        #[arg(long)]
        claim: String,
        /// JSON array of evidence strings, best first
        #[arg(long, value_name = "FILE")]
        evidence: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Print the claims extracted from a response, one JSON object per line
    Detect {
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
    },
    /// Print the evidence gathered for a claim, one JSON object per line
    Retrieve {
        #[arg(long)]
        claim: String,
        /// Reference text to rank instead of searching
        #[arg(long, value_name = "FILE")]
        knowledge: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("FACTDEBATE_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .init();

    let cli = Cli::parse();
    let env: BTreeMap<String, String> = std::env::vars().collect();
    let result = config::resolve(cli.global.config.as_deref(), &env, &cli.global.flag_layer())
        .and_then(|cfg| commands::run(&cfg, cli.command));
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}
