//! `casloop` — run chat-LLM × CAS episodes, render and grade transcripts,
//! and report benchmark statistics.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "casloop", version, about = "Drive a CAS REPL from a chat LLM and benchmark the runs")]
struct Cli {
    /// TOML config file (default: ./casloop.toml when present)
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one problem against one context pack
    Run(commands::run::RunArgs),
    /// Print a stored JSONL transcript in the rendered text format
    Render {
        /// Path to a transcript .jsonl file
        transcript: PathBuf,
    },
    /// Record a rubric assessment for a finished run (interactive)
    Grade {
        /// Run id, e.g. 10ex/sRMt/attempt1
        run_id: String,
        #[arg(long, default_value = "anonymous")]
        grader: String,
        #[arg(long)]
        results_dir: Option<PathBuf>,
    },
    /// Aggregate results and grades into grid/CSV/markdown reports
    Report(commands::report::ReportArgs),
    /// Context pack utilities
    Packs {
        #[command(subcommand)]
        command: PacksCommand,
    },
    /// Problem registry utilities
    Problems {
        #[command(subcommand)]
        command: ProblemsCommand,
    },
}

#[derive(Subcommand)]
enum PacksCommand {
    /// Load every pack under the packs directory and report findings
    Validate {
        #[arg(long)]
        packs_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ProblemsCommand {
    /// List the shipped problems
    List {
        /// Print full statements instead of one line per problem
        #[arg(long)]
        full: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run(args) => commands::run::execute(cli.config.as_deref(), args),
        Command::Render { transcript } => commands::render::execute(&transcript),
        Command::Grade { run_id, grader, results_dir } => {
            commands::grade::execute(cli.config.as_deref(), &run_id, &grader, results_dir)
        }
        Command::Report(args) => commands::report::execute(cli.config.as_deref(), args),
        Command::Packs { command: PacksCommand::Validate { packs_dir } } => {
            commands::packs::validate(cli.config.as_deref(), packs_dir)
        }
        Command::Problems { command: ProblemsCommand::List { full } } => {
            commands::problems::list(full)
        }
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
