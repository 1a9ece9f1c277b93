//! One episode: build the initial conversation from pack and problem, then
//! alternate LLM completion and CAS execution until the model stops emitting
//! runnable statements, gives up, or hits the turn limit.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::context::{ContextPack, Problem};
use crate::gateway::{ChatClient, ChatMessage, GenerationParams, Usage};
use crate::repl::{split_statements, CasSession, ReplError, Statement, StatementKind,
    StatementResult};

/// Knobs for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_max_turns")]
    pub max_turns: u32,
    #[serde(default)]
    pub extraction_mode: ExtractionMode,
    pub params: GenerationParams,
    /// Harness-level re-runs after session/transport errors only.
    #[serde(default = "default_attempt_limit")]
    pub attempt_limit: u32,
    /// Phrases that mark an abort; matched case-insensitively on the whole
    /// assistant message.
    #[serde(default = "default_give_up_lexicon")]
    pub give_up_lexicon: Vec<String>,
}

fn default_max_turns() -> u32 {
    100
}

fn default_attempt_limit() -> u32 {
    1
}

fn default_give_up_lexicon() -> Vec<String> {
    ["give up", "cannot proceed", "unable to solve"]
        .map(String::from)
        .to_vec()
}

impl RunConfig {
    pub fn new(params: GenerationParams) -> Self {
        Self {
            max_turns: default_max_turns(),
            extraction_mode: ExtractionMode::default(),
            params,
            attempt_limit: default_attempt_limit(),
            give_up_lexicon: default_give_up_lexicon(),
        }
    }
}

/// How CAS input is pulled out of an assistant message. Verbatim feeds the
/// whole message (prose arrives as `#` comments the CAS ignores); fenced
/// keeps only fenced code blocks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionMode {
    #[default]
    Verbatim,
    Fenced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub attempt_index: u32,
    pub turn_index: u32,
    pub assistant_text: String,
    pub statement_results: Vec<StatementResult>,
    pub usage: Usage,
    pub wall_time_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    SolvedClaimed,
    GaveUp,
    TurnLimit,
    SessionError,
    TransportError,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RunStatus::SolvedClaimed => "solved_claimed",
            RunStatus::GaveUp => "gave_up",
            RunStatus::TurnLimit => "turn_limit",
            RunStatus::SessionError => "session_error",
            RunStatus::TransportError => "transport_error",
        };
        f.write_str(s)
    }
}

impl RunStatus {
    /// Statuses that end the run for scientific reasons; the others are
    /// infrastructure failures eligible for another attempt.
    pub fn is_retryable(self) -> bool {
        matches!(self, RunStatus::SessionError | RunStatus::TransportError)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub status: RunStatus,
    pub turns: u32,
    pub restarts: u32,
    pub transcript_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptMeta {
    pub run_id: String,
    pub problem_id: String,
    pub pack_id: String,
    pub params: GenerationParams,
    pub started_at: String,
}

/// Full in-memory record of one run, mirroring the on-disk JSONL layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub meta: TranscriptMeta,
    pub turns: Vec<TurnRecord>,
    pub result: Option<RunResult>,
    pub ended_at: Option<String>,
}

/// Incremental observer so a crash mid-run still leaves a parseable prefix.
pub trait TranscriptSink {
    fn on_meta(&mut self, meta: &TranscriptMeta) -> std::io::Result<()>;
    fn on_turn(&mut self, turn: &TurnRecord) -> std::io::Result<()>;
    fn on_final(&mut self, result: &RunResult, ended_at: &str) -> std::io::Result<()>;
}

/// Sink that drops everything; handy when only the return value matters.
pub struct NullSink;

impl TranscriptSink for NullSink {
    fn on_meta(&mut self, _: &TranscriptMeta) -> std::io::Result<()> {
        Ok(())
    }
    fn on_turn(&mut self, _: &TurnRecord) -> std::io::Result<()> {
        Ok(())
    }
    fn on_final(&mut self, _: &RunResult, _: &str) -> std::io::Result<()> {
        Ok(())
    }
}

/// Creates a fresh CAS session per attempt; attempts share nothing.
pub trait SessionFactory {
    fn create(&mut self) -> Result<Box<dyn CasSession>, ReplError>;
}

impl<F> SessionFactory for F
where
    F: FnMut() -> Result<Box<dyn CasSession>, ReplError>,
{
    fn create(&mut self) -> Result<Box<dyn CasSession>, ReplError> {
        self()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationDecision {
    Continue,
    SolvedClaimed,
    GaveUp,
}

/// Pull the CAS chunk out of an assistant message.
pub fn extract_statements(assistant_text: &str, mode: ExtractionMode) -> String {
    match mode {
        ExtractionMode::Verbatim => assistant_text.to_string(),
        ExtractionMode::Fenced => {
            let mut inside = false;
            let mut blocks: Vec<&str> = Vec::new();
            for line in assistant_text.split('\n') {
                if line.trim_start().starts_with("```") {
                    inside = !inside;
                    continue;
                }
                if inside {
                    blocks.push(line);
                }
            }
            blocks.join("\n")
        }
    }
}

/// A message ends the run either by matching the give-up lexicon or by
/// carrying nothing runnable (a pure-commentary final answer).
pub fn detect_termination(
    assistant_text: &str,
    statements: &[Statement],
    lexicon: &[String],
) -> TerminationDecision {
    let lower = assistant_text.to_lowercase();
    if lexicon
        .iter()
        .any(|p| !p.is_empty() && lower.contains(&p.to_lowercase()))
    {
        return TerminationDecision::GaveUp;
    }
    if statements.iter().any(|s| s.kind.runs_on_backend()) {
        TerminationDecision::Continue
    } else {
        TerminationDecision::SolvedClaimed
    }
}

/// Total executed restart statements across all turns and attempts.
pub fn count_restarts(transcript: &Transcript) -> u32 {
    transcript
        .turns
        .iter()
        .flat_map(|t| &t.statement_results)
        .filter(|r| r.statement.kind == StatementKind::Restart)
        .count() as u32
}

/// Outputs fed back to the model: per-statement texts joined by one blank
/// line, no decorative prefixes.
pub fn chunk_feedback(results: &[StatementResult]) -> String {
    results
        .iter()
        .map(StatementResult::output_text)
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Stand-in user message for turns whose statements printed nothing; the
/// provider rejects empty message content.
pub const EMPTY_OUTPUT_FEEDBACK: &str = "(no output)";

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

/// Run one episode. Session and transport failures fold into the terminal
/// status after the partial transcript is persisted; only sink I/O errors
/// escape as hard errors.
pub fn run_episode(
    run_id: &str,
    problem: &Problem,
    pack: &ContextPack,
    config: &RunConfig,
    client: &dyn ChatClient,
    sessions: &mut dyn SessionFactory,
    sink: &mut dyn TranscriptSink,
) -> std::io::Result<(RunResult, Transcript)> {
    let meta = TranscriptMeta {
        run_id: run_id.to_string(),
        problem_id: problem.id.clone(),
        pack_id: pack.id.clone(),
        params: config.params.clone(),
        started_at: now_rfc3339(),
    };
    sink.on_meta(&meta)?;

    let system_prompt = crate::context::render_system_prompt(pack);
    let attempt_limit = config.attempt_limit.max(1);
    let mut turns: Vec<TurnRecord> = Vec::new();
    let mut restarts: u32 = 0;
    let mut status = RunStatus::SessionError;

    'attempts: for attempt in 1..=attempt_limit {
        let mut session = match sessions.create() {
            Ok(session) => session,
            Err(e) => {
                log::error!("run {run_id}: attempt {attempt} could not start a session: {e}");
                status = RunStatus::SessionError;
                continue 'attempts;
            }
        };
        let mut history = vec![
            ChatMessage::system(system_prompt.clone()),
            ChatMessage::user(problem.statement.clone()),
        ];

        for turn_index in 1..=config.max_turns {
            let turn_started = Instant::now();
            let (message, usage) = match client.complete(&history, &config.params) {
                Ok(reply) => reply,
                Err(e) => {
                    log::error!("run {run_id}: turn {turn_index} transport failure: {e}");
                    status = RunStatus::TransportError;
                    continue 'attempts;
                }
            };

            let chunk = extract_statements(&message.content, config.extraction_mode);
            let statements = split_statements(&chunk);
            let decision =
                detect_termination(&message.content, &statements, &config.give_up_lexicon);

            if decision != TerminationDecision::Continue {
                let turn = TurnRecord {
                    attempt_index: attempt,
                    turn_index,
                    assistant_text: message.content,
                    statement_results: Vec::new(),
                    usage,
                    wall_time_ms: turn_started.elapsed().as_millis() as u64,
                };
                sink.on_turn(&turn)?;
                turns.push(turn);
                status = match decision {
                    TerminationDecision::GaveUp => RunStatus::GaveUp,
                    _ => RunStatus::SolvedClaimed,
                };
                log::info!("run {run_id}: turn {turn_index} -> {status}");
                break 'attempts;
            }

            let executed = session.execute_chunk(&chunk);
            let (results, failure) = match executed {
                Ok(results) => (results, None),
                Err(e) => (Vec::new(), Some(e)),
            };
            restarts += results
                .iter()
                .filter(|r| r.statement.kind == StatementKind::Restart)
                .count() as u32;

            let turn = TurnRecord {
                attempt_index: attempt,
                turn_index,
                assistant_text: message.content.clone(),
                statement_results: results,
                usage,
                wall_time_ms: turn_started.elapsed().as_millis() as u64,
            };
            sink.on_turn(&turn)?;
            let feedback = chunk_feedback(&turn.statement_results);
            turns.push(turn);

            if let Some(e) = failure {
                log::error!("run {run_id}: turn {turn_index} session failure: {e}");
                status = RunStatus::SessionError;
                continue 'attempts;
            }
            log::info!("run {run_id}: turn {turn_index} -> continue");

            if turn_index == config.max_turns {
                status = RunStatus::TurnLimit;
                break 'attempts;
            }

            history.push(ChatMessage::assistant(message.content));
            history.push(ChatMessage::user(if feedback.is_empty() {
                EMPTY_OUTPUT_FEEDBACK.to_string()
            } else {
                feedback
            }));
        }
        break 'attempts;
    }

    let result = RunResult {
        status,
        turns: turns.len() as u32,
        restarts,
        transcript_ref: run_id.to_string(),
    };
    let ended_at = now_rfc3339();
    sink.on_final(&result, &ended_at)?;
    let transcript = Transcript {
        meta,
        turns,
        result: Some(result.clone()),
        ended_at: Some(ended_at),
    };
    Ok((result, transcript))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{Background, ContextPack, PackDocument, Sector};
    use crate::gateway::{RecordingClient, RepeatClient, ScriptedClient};
    use crate::repl::ReplaySession;

    fn toy_problem() -> Problem {
        Problem {
            id: "toy".to_string(),
            statement: "Compute something.".to_string(),
            background: Background::Flat,
            sector: Sector::Scalar,
        }
    }

    fn toy_pack() -> ContextPack {
        ContextPack {
            id: "toypack".to_string(),
            documents: vec![PackDocument {
                title: "Doc".to_string(),
                body: "body".to_string(),
            }],
            preamble: None,
            declared_token_size: None,
        }
    }

    fn replay_factory(entries: Vec<String>) -> impl FnMut() -> Result<Box<dyn CasSession>, ReplError> {
        move || Ok(Box::new(ReplaySession::new(entries.clone())) as Box<dyn CasSession>)
    }

    #[test]
    fn comment_only_first_message_solves_in_one_turn() {
        let client = ScriptedClient::new([("# all done".to_string(), Usage::default())]);
        let config = RunConfig::new(GenerationParams::new("m"));
        let (result, transcript) = run_episode(
            "t/1",
            &toy_problem(),
            &toy_pack(),
            &config,
            &client,
            &mut replay_factory(vec![]),
            &mut NullSink,
        )
        .unwrap();
        assert_eq!(result.status, RunStatus::SolvedClaimed);
        assert_eq!(result.turns, 1);
        assert_eq!(result.restarts, 0);
        assert_eq!(count_restarts(&transcript), 0);
    }

    #[test]
    fn give_up_phrase_ends_the_run() {
        let client = ScriptedClient::new([
            ("x := 1;".to_string(), Usage::default()),
            ("I give up on this approach entirely.".to_string(), Usage::default()),
        ]);
        let config = RunConfig::new(GenerationParams::new("m"));
        let (result, _) = run_episode(
            "t/2",
            &toy_problem(),
            &toy_pack(),
            &config,
            &client,
            &mut replay_factory(vec!["1".to_string()]),
            &mut NullSink,
        )
        .unwrap();
        assert_eq!(result.status, RunStatus::GaveUp);
        assert_eq!(result.turns, 2);
    }

    #[test]
    fn always_coding_client_hits_turn_limit_exactly() {
        for max_turns in [1u32, 5, 100] {
            let client = RepeatClient::new("x := x + 1;");
            let mut config = RunConfig::new(GenerationParams::new("m"));
            config.max_turns = max_turns;
            let entries = vec!["ok".to_string(); max_turns as usize];
            let (result, transcript) = run_episode(
                "t/3",
                &toy_problem(),
                &toy_pack(),
                &config,
                &client,
                &mut replay_factory(entries),
                &mut NullSink,
            )
            .unwrap();
            assert_eq!(result.status, RunStatus::TurnLimit);
            assert_eq!(result.turns, max_turns);
            assert_eq!(transcript.turns.len(), max_turns as usize);
        }
    }

    #[test]
    fn conversation_roles_alternate_after_system_user_pair() {
        let client = RecordingClient::new(ScriptedClient::new([
            ("a := 1;".to_string(), Usage::default()),
            ("b := 2;".to_string(), Usage::default()),
            ("# done".to_string(), Usage::default()),
        ]));
        let config = RunConfig::new(GenerationParams::new("m"));
        run_episode(
            "t/4",
            &toy_problem(),
            &toy_pack(),
            &config,
            &client,
            &mut replay_factory(vec!["1".to_string(), "2".to_string()]),
            &mut NullSink,
        )
        .unwrap();
        let requests = client.recorded_requests();
        assert_eq!(requests.len(), 3);
        let last = requests[2]["messages"].as_array().unwrap();
        let roles: Vec<&str> = last.iter().map(|m| m["role"].as_str().unwrap()).collect();
        assert_eq!(roles, ["user", "assistant", "user", "assistant", "user"]);
        // feedback carries raw outputs
        assert_eq!(last[2]["content"], "1");
    }

    #[test]
    fn restarts_counted_from_executed_statements() {
        let client = ScriptedClient::new([
            ("restart;\nx := 1;".to_string(), Usage::default()),
            ("restart;".to_string(), Usage::default()),
            ("# summary".to_string(), Usage::default()),
        ]);
        let config = RunConfig::new(GenerationParams::new("m"));
        let (result, transcript) = run_episode(
            "t/5",
            &toy_problem(),
            &toy_pack(),
            &config,
            &client,
            &mut replay_factory(vec!["one".to_string(), "two".to_string()]),
            &mut NullSink,
        )
        .unwrap();
        assert_eq!(result.restarts, 2);
        assert_eq!(count_restarts(&transcript), 2);
        assert_eq!(result.turns, 3);
        assert_eq!(result.status, RunStatus::SolvedClaimed);
    }

    #[test]
    fn session_death_surfaces_as_session_error() {
        let client = RepeatClient::new("x := 1;");
        let config = RunConfig::new(GenerationParams::new("m"));
        let (result, transcript) = run_episode(
            "t/6",
            &toy_problem(),
            &toy_pack(),
            &config,
            &client,
            &mut replay_factory(vec!["only one".to_string()]),
            &mut NullSink,
        )
        .unwrap();
        // replay script exhausted on turn 2 -> dead session
        assert_eq!(result.status, RunStatus::SessionError);
        assert_eq!(result.turns, 2);
        assert_eq!(transcript.turns[1].statement_results.len(), 0);
    }

    #[test]
    fn transport_error_is_terminal_without_more_attempts() {
        let client = ScriptedClient::new([("x := 1;".to_string(), Usage::default())]);
        let config = RunConfig::new(GenerationParams::new("m"));
        let (result, _) = run_episode(
            "t/7",
            &toy_problem(),
            &toy_pack(),
            &config,
            &client,
            &mut replay_factory(vec!["a".to_string(), "b".to_string()]),
            &mut NullSink,
        )
        .unwrap();
        assert_eq!(result.status, RunStatus::TransportError);
        assert_eq!(result.turns, 1);
    }

    #[test]
    fn second_attempt_runs_after_session_error() {
        let client = ScriptedClient::new([
            ("x := 1;".to_string(), Usage::default()),
            ("# done".to_string(), Usage::default()),
        ]);
        let mut config = RunConfig::new(GenerationParams::new("m"));
        config.attempt_limit = 2;
        // first attempt: empty replay -> dies on turn 1; second attempt solves
        let mut scripts = vec![vec![], vec![]].into_iter();
        let mut factory = move || {
            Ok(Box::new(ReplaySession::new(scripts.next().unwrap_or_default()))
                as Box<dyn CasSession>)
        };
        let (result, transcript) = run_episode(
            "t/8",
            &toy_problem(),
            &toy_pack(),
            &config,
            &client,
            &mut factory,
            &mut NullSink,
        )
        .unwrap();
        assert_eq!(result.status, RunStatus::SolvedClaimed);
        assert_eq!(result.turns, 2); // one failed turn + the solving turn
        assert_eq!(transcript.turns[0].attempt_index, 1);
        assert_eq!(transcript.turns[1].attempt_index, 2);
        assert_eq!(transcript.turns[1].turn_index, 1);
    }

    #[test]
    fn fenced_extraction_keeps_only_code_blocks() {
        let text = "Some prose.\n```maple\nx := 1;\n```\nmore\n```\ny := 2;\n```";
        assert_eq!(extract_statements(text, ExtractionMode::Fenced), "x := 1;\ny := 2;");
        assert_eq!(extract_statements("no code", ExtractionMode::Fenced), "");
        assert_eq!(extract_statements(text, ExtractionMode::Verbatim), text);
    }

    #[test]
    fn termination_rules() {
        let lexicon = default_give_up_lexicon();
        let check = |text: &str| {
            let stmts = split_statements(text);
            detect_termination(text, &stmts, &lexicon)
        };
        assert_eq!(check("1+1;"), TerminationDecision::Continue);
        assert_eq!(check("# notes only"), TerminationDecision::SolvedClaimed);
        assert_eq!(
            check("I give up on this approach entirely."),
            TerminationDecision::GaveUp
        );
        // restart still counts as runnable work
        assert_eq!(check("restart;"), TerminationDecision::Continue);
        // prose without terminators is a runnable trailing fragment
        assert_eq!(check("let me think about it"), TerminationDecision::Continue);
    }
}
