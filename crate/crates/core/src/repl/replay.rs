//! Deterministic replay backend.
//!
//! A `ReplaySession` serves recorded outputs instead of launching a process.
//! Each call of [`CasSession::execute_chunk`] whose chunk contains at least
//! one runnable statement consumes the next recorded entry; the entry's text
//! is attributed to the chunk's last runnable statement, which keeps the
//! turn-level feedback byte-identical to the recording. Chunks made only of
//! comments and blanks consume nothing, mirroring the live driver.

use std::collections::VecDeque;

use super::{
    classify_output, split_statements, CasSession, ReplError, StatementResult,
};

#[derive(Debug, Clone)]
pub struct ReplaySession {
    entries: VecDeque<String>,
    warning_prefix: String,
    error_prefix: String,
}

impl ReplaySession {
    /// One entry per expected runnable chunk, in execution order. Empty
    /// strings stand for chunks that produced no output.
    pub fn new(entries: impl IntoIterator<Item = String>) -> Self {
        Self {
            entries: entries.into_iter().collect(),
            warning_prefix: "Warning,".to_string(),
            error_prefix: "Error,".to_string(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.entries.len()
    }
}

impl CasSession for ReplaySession {
    fn execute_chunk(&mut self, chunk: &str) -> Result<Vec<StatementResult>, ReplError> {
        let statements = split_statements(chunk);
        let last_runnable = statements
            .iter()
            .rposition(|s| s.kind.runs_on_backend());

        let recorded = match last_runnable {
            Some(_) => match self.entries.pop_front() {
                Some(entry) => entry,
                None => {
                    log::warn!("replay script exhausted; treating session as dead");
                    return Err(ReplError::SessionDead);
                }
            },
            None => String::new(),
        };

        Ok(statements
            .into_iter()
            .enumerate()
            .map(|(i, statement)| {
                let outputs = if Some(i) == last_runnable && !recorded.is_empty() {
                    classify_output(&recorded, &self.warning_prefix, &self.error_prefix)
                } else {
                    Vec::new()
                };
                StatementResult { statement, outputs, duration_ms: 0, truncated: false }
            })
            .collect())
    }
}
