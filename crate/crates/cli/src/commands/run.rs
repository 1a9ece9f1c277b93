//! `casloop run`: execute one (pack, problem) episode with live services or
//! scripted mocks, persisting the transcript and a result-log line.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use casloop_core::agent::{run_episode, RunConfig, SessionFactory};
use casloop_core::context::load_pack;
use casloop_core::evalbench::ResultRow;
use casloop_core::gateway::{
    ChatClient, HttpChatClient, ScriptedClient, Usage, DEFAULT_THINKING_BUDGET,
};
use casloop_core::repl::{BackendDescriptor, CasSession, ReplError, ReplaySession, Session};
use casloop_core::transcript::{
    parse_jsonl, parse_rendered, replay_scripts_from_rendered, replay_scripts_from_transcript,
    JsonlSink,
};

#[derive(clap::Args)]
pub struct RunArgs {
    /// Context pack id (a directory under the packs dir)
    #[arg(long)]
    pub pack: String,
    /// Problem id, e.g. sRMt
    #[arg(long)]
    pub problem: String,
    #[arg(long)]
    pub max_turns: Option<u32>,
    /// Enable extended thinking; a bare flag uses the default budget
    #[arg(long, num_args = 0..=1, default_missing_value = "1024")]
    pub thinking_budget: Option<u32>,
    /// Scripted model: a rendered transcript or a JSONL transcript file
    #[arg(long, value_name = "SCRIPT")]
    pub mock_llm: Option<PathBuf>,
    /// CAS stand-in: `echo` or `replay` (replay reads the --mock-llm file)
    #[arg(long, value_name = "MODE")]
    pub mock_cas: Option<String>,
    #[arg(long)]
    pub attempts: Option<u32>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub packs_dir: Option<PathBuf>,
    #[arg(long)]
    pub results_dir: Option<PathBuf>,
    /// Abort the run once this many tokens have been spent
    #[arg(long)]
    pub token_budget: Option<u64>,
}

/// What a `--mock-llm` script file provided.
struct MockScripts {
    llm: Vec<(String, Usage)>,
    cas_entries: Vec<String>,
}

fn load_mock_scripts(path: &Path, config: &RunConfig) -> anyhow::Result<MockScripts> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading mock script {}", path.display()))?;
    if text.starts_with("# +++++++++++++++++ META TRY") {
        let rendered = parse_rendered(&text)?;
        let (llm, cas_entries) = replay_scripts_from_rendered(&rendered, config);
        Ok(MockScripts { llm, cas_entries })
    } else if text.trim_start().starts_with('{') {
        let transcript = parse_jsonl(&text)?;
        let (llm, cas_entries) = replay_scripts_from_transcript(&transcript);
        Ok(MockScripts { llm, cas_entries })
    } else {
        bail!(
            "unrecognized mock script format in {}: expected a rendered transcript or JSONL",
            path.display()
        );
    }
}

struct SubprocessFactory(BackendDescriptor);

impl SessionFactory for SubprocessFactory {
    fn create(&mut self) -> Result<Box<dyn CasSession>, ReplError> {
        Ok(Box::new(Session::start(self.0.clone())?))
    }
}

struct ReplayFactory(Vec<String>);

impl SessionFactory for ReplayFactory {
    fn create(&mut self) -> Result<Box<dyn CasSession>, ReplError> {
        Ok(Box::new(ReplaySession::new(self.0.clone())))
    }
}

pub fn execute(config_path: Option<&Path>, args: RunArgs) -> anyhow::Result<ExitCode> {
    let mut flags = BTreeMap::new();
    if let Some(v) = args.max_turns {
        flags.insert("max_turns".to_string(), v.to_string());
    }
    if let Some(v) = args.attempts {
        flags.insert("attempt_limit".to_string(), v.to_string());
    }
    if let Some(v) = &args.model {
        flags.insert("model_id".to_string(), v.clone());
    }
    if let Some(v) = args.max_tokens {
        flags.insert("max_tokens".to_string(), v.to_string());
    }
    if let Some(v) = args.temperature {
        flags.insert("temperature".to_string(), v.to_string());
    }
    if let Some(v) = &args.packs_dir {
        flags.insert("packs_dir".to_string(), v.display().to_string());
    }
    if let Some(v) = &args.results_dir {
        flags.insert("results_dir".to_string(), v.display().to_string());
    }
    let mut config = super::load_config(config_path, flags)?;
    if let Some(budget) = args.thinking_budget {
        config.defaults.params.thinking_budget =
            Some(if budget == 0 { DEFAULT_THINKING_BUDGET } else { budget });
    }

    // validate inputs before any file is created
    let problem = casloop_core::context::get_problem(&args.problem)?;
    let pack_dir = config.packs_dir.join(&args.pack);
    if !pack_dir.is_dir() {
        bail!(
            "unknown pack id {:?}: no directory {}",
            args.pack,
            pack_dir.display()
        );
    }
    let loaded = load_pack(&pack_dir)?;
    for warning in &loaded.warnings {
        log::warn!("{warning}");
    }

    let run_config = config.defaults.clone();
    let mock = match &args.mock_llm {
        Some(path) => Some(load_mock_scripts(path, &run_config)?),
        None => None,
    };

    let client: Box<dyn ChatClient> = match &mock {
        Some(scripts) => Box::new(ScriptedClient::new(scripts.llm.clone())),
        None => {
            if config.provider.adapter != "anthropic" {
                bail!("unknown provider adapter {:?}", config.provider.adapter);
            }
            let key = std::env::var(&config.provider.key_env).with_context(|| {
                format!("API key environment variable {} not set", config.provider.key_env)
            })?;
            Box::new(
                HttpChatClient::new(config.provider.endpoint.clone(), key)
                    .with_token_budget(args.token_budget),
            )
        }
    };

    let mut factory: Box<dyn SessionFactory> = match args.mock_cas.as_deref() {
        None => Box::new(SubprocessFactory(config.backend.clone())),
        Some("echo") => Box::new(SubprocessFactory(BackendDescriptor::echo())),
        Some("replay") => {
            let Some(scripts) = &mock else {
                bail!("--mock-cas replay requires --mock-llm with a transcript script");
            };
            Box::new(ReplayFactory(scripts.cas_entries.clone()))
        }
        Some(other) => bail!("unknown --mock-cas mode {other:?} (expected echo or replay)"),
    };

    let run_id = casloop_core::evalbench::run_id_for(&args.pack, &args.problem);
    let transcript_file = super::transcript_path(&config.results_dir, &run_id);
    let mut sink = JsonlSink::create(&transcript_file)?;

    let (result, _transcript) = run_episode(
        &run_id,
        problem,
        &loaded.pack,
        &run_config,
        client.as_ref(),
        factory.as_mut(),
        &mut sink,
    )?;

    let row = ResultRow {
        run_id: run_id.clone(),
        pack_id: args.pack.clone(),
        problem_id: args.problem.clone(),
        result: result.clone(),
    };
    let log_path = super::results_log_path(&config.results_dir);
    let mut log_file = OpenOptions::new().create(true).append(true).open(&log_path)?;
    writeln!(log_file, "{}", serde_json::to_string(&row)?)?;

    println!(
        "run {run_id}: {} after {} turn(s), {} restart(s); transcript {}",
        result.status,
        result.turns,
        result.restarts,
        transcript_file.display()
    );
    Ok(ExitCode::SUCCESS)
}
