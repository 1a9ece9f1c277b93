//! CAS REPL layer: a long-lived subprocess session with prompt detection,
//! statement tokenization, output capture and classification, and
//! restart/death handling.

mod replay;
mod session;
mod tokenizer;

pub use replay::ReplaySession;
pub use session::Session;
pub use tokenizer::{is_restart, split_statements};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// How to launch and talk to one CAS backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub name: String,
    /// Argv of the backend process; first element is the executable.
    pub launch_command: Vec<String>,
    /// The ready marker the backend prints at the start of a line when it
    /// waits for input.
    #[serde(default = "default_prompt_marker")]
    pub prompt_marker: String,
    /// Statements run once per (re)start, outputs hidden from the agent.
    #[serde(default = "default_init_statements")]
    pub init_statements: Vec<String>,
    /// Per-statement wall-clock budget.
    #[serde(with = "secs_f64", default = "default_statement_timeout")]
    pub statement_timeout: Duration,
    /// Cap on captured bytes per statement; `None` keeps everything.
    #[serde(default)]
    pub output_byte_limit: Option<usize>,
    /// Line prefix the backend uses for warnings.
    #[serde(default = "default_warning_prefix")]
    pub warning_prefix: String,
    /// Line prefix the backend uses for errors.
    #[serde(default = "default_error_prefix")]
    pub error_prefix: String,
}

fn default_prompt_marker() -> String {
    "> ".to_string()
}

fn default_init_statements() -> Vec<String> {
    vec!["interface(prettyprint = 0):".to_string()]
}

fn default_statement_timeout() -> Duration {
    Duration::from_secs(300)
}

fn default_warning_prefix() -> String {
    "Warning,".to_string()
}

fn default_error_prefix() -> String {
    "Error,".to_string()
}

mod secs_f64 {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        let secs = f64::deserialize(d)?;
        if !secs.is_finite() || secs < 0.0 {
            return Err(serde::de::Error::custom("timeout must be non-negative"));
        }
        Ok(Duration::from_secs_f64(secs))
    }
}

impl BackendDescriptor {
    /// Command-line Maple with human-oriented 2-D printing switched off.
    pub fn maple() -> Self {
        Self {
            name: "maple".to_string(),
            launch_command: vec!["maple".to_string(), "-q".to_string()],
            prompt_marker: default_prompt_marker(),
            init_statements: default_init_statements(),
            statement_timeout: default_statement_timeout(),
            output_byte_limit: None,
            warning_prefix: default_warning_prefix(),
            error_prefix: default_error_prefix(),
        }
    }

    /// Identity backend: echoes every input line back as its result.
    /// Runs as a real subprocess so the full driver path is exercised.
    pub fn echo() -> Self {
        let script = "printf '> '; while IFS= read -r line; do \
                      printf '%s\\n' \"$line\"; printf '> '; done";
        Self {
            name: "echo".to_string(),
            launch_command: vec!["/bin/sh".to_string(), "-c".to_string(), script.to_string()],
            prompt_marker: default_prompt_marker(),
            init_statements: Vec::new(),
            statement_timeout: Duration::from_secs(10),
            output_byte_limit: None,
            warning_prefix: default_warning_prefix(),
            error_prefix: default_error_prefix(),
        }
    }
}

/// Statement classification produced by the tokenizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatementKind {
    Executable,
    Restart,
    CommentOnly,
    Blank,
}

impl StatementKind {
    /// Whether this statement has any effect on the backend when sent.
    pub fn runs_on_backend(self) -> bool {
        matches!(self, StatementKind::Executable | StatementKind::Restart)
    }
}

/// One tokenized statement. `text` is the exact input slice including the
/// terminator and any leading whitespace/comments, so that concatenating a
/// chunk's statements reproduces the chunk byte-for-byte.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Statement {
    pub text: String,
    pub kind: StatementKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Result,
    Warning,
    Error,
    Banner,
}

/// A run of adjacent output lines of the same kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputBlock {
    pub kind: OutputKind,
    pub text: String,
}

/// Outcome of executing one statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatementResult {
    pub statement: Statement,
    pub outputs: Vec<OutputBlock>,
    pub duration_ms: u64,
    pub truncated: bool,
}

impl StatementResult {
    /// The statement's captured output as one text, block boundaries joined
    /// back on line breaks.
    pub fn output_text(&self) -> String {
        self.outputs
            .iter()
            .map(|b| b.text.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Error)]
pub enum ReplError {
    #[error("failed to launch backend: {0}")]
    LaunchFailed(String),
    #[error("init statement failed: {0}")]
    InitFailed(String),
    #[error("statement timed out after {timeout:?}: {statement}")]
    Timeout { statement: String, timeout: Duration },
    #[error("backend session is dead")]
    SessionDead,
    #[error("backend i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// A live CAS session. One handle must be driven from one thread at a time;
/// distinct sessions are independent.
pub trait CasSession: Send {
    fn execute_chunk(&mut self, chunk: &str) -> Result<Vec<StatementResult>, ReplError>;
}

/// Split captured text into blocks, classifying each line by prefix and
/// merging adjacent lines of the same kind.
pub(crate) fn classify_output(
    text: &str,
    warning_prefix: &str,
    error_prefix: &str,
) -> Vec<OutputBlock> {
    let mut blocks: Vec<OutputBlock> = Vec::new();
    if text.is_empty() {
        return blocks;
    }
    for line in text.split('\n') {
        let kind = if line.starts_with(error_prefix) {
            OutputKind::Error
        } else if line.starts_with(warning_prefix) {
            OutputKind::Warning
        } else {
            OutputKind::Result
        };
        match blocks.last_mut() {
            Some(last) if last.kind == kind => {
                last.text.push('\n');
                last.text.push_str(line);
            }
            _ => blocks.push(OutputBlock { kind, text: line.to_string() }),
        }
    }
    blocks
}
