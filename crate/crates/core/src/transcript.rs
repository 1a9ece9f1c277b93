//! On-disk transcript formats.
//!
//! Two representations exist. The JSONL file is the machine format: one
//! `meta` record, one `turn` record per turn, one `final` record. The
//! rendered text format is the human/golden format: per attempt a
//! `META TRY` banner, per turn a `TURN` banner followed by the assistant
//! message verbatim and every CAS output line prefixed with `~ `. The two
//! functions [`parse_rendered`] and [`render_rendered`] are mutual inverses
//! on well-formed transcripts, byte for byte.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{
    chunk_feedback, detect_termination, extract_statements, RunConfig, RunResult, Transcript,
    TranscriptMeta, TranscriptSink, TurnRecord, TerminationDecision,
};
use crate::gateway::Usage;
use crate::repl::split_statements;

const META_PREFIX: &str = "# +++++++++++++++++ META TRY ";
const META_SUFFIX: &str = " ++++++++++++++ ";
const TURN_PREFIX: &str = "# ----------------- TURN ";
const TURN_SUFFIX: &str = " -----------------";
const OUTPUT_PREFIX: &str = "~ ";
const INCOMPLETE_TRAILER: &str = "[run incomplete]";

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One line of the JSONL transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TranscriptRecord {
    Meta(TranscriptMeta),
    Turn(TurnRecord),
    Final { result: RunResult, ended_at: String },
}

/// Append-only JSONL writer; a crash mid-run leaves a parseable prefix.
pub struct JsonlSink {
    writer: BufWriter<File>,
    path: PathBuf,
}

impl JsonlSink {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(Self { writer: BufWriter::new(File::create(path)?), path: path.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn write(&mut self, record: &TranscriptRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.writer, record)?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()
    }
}

impl TranscriptSink for JsonlSink {
    fn on_meta(&mut self, meta: &TranscriptMeta) -> std::io::Result<()> {
        self.write(&TranscriptRecord::Meta(meta.clone()))
    }

    fn on_turn(&mut self, turn: &TurnRecord) -> std::io::Result<()> {
        self.write(&TranscriptRecord::Turn(turn.clone()))
    }

    fn on_final(&mut self, result: &RunResult, ended_at: &str) -> std::io::Result<()> {
        self.write(&TranscriptRecord::Final {
            result: result.clone(),
            ended_at: ended_at.to_string(),
        })
    }
}

/// Read a JSONL transcript. A missing final record is tolerated (crash
/// artifact); everything else about the shape is enforced.
pub fn read_jsonl(path: &Path) -> Result<Transcript, TranscriptError> {
    let text = std::fs::read_to_string(path)?;
    parse_jsonl(&text)
}

pub fn parse_jsonl(text: &str) -> Result<Transcript, TranscriptError> {
    let mut meta: Option<TranscriptMeta> = None;
    let mut turns: Vec<TurnRecord> = Vec::new();
    let mut final_part: Option<(RunResult, String)> = None;

    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: TranscriptRecord = serde_json::from_str(line).map_err(|e| {
            TranscriptError::SchemaViolation(format!("line {}: {e}", lineno + 1))
        })?;
        match record {
            TranscriptRecord::Meta(m) => {
                if meta.replace(m).is_some() {
                    return Err(TranscriptError::SchemaViolation(
                        "more than one meta record".to_string(),
                    ));
                }
            }
            TranscriptRecord::Turn(t) => {
                if final_part.is_some() {
                    return Err(TranscriptError::SchemaViolation(
                        "turn record after final record".to_string(),
                    ));
                }
                turns.push(t);
            }
            TranscriptRecord::Final { result, ended_at } => {
                if final_part.replace((result, ended_at)).is_some() {
                    return Err(TranscriptError::SchemaViolation(
                        "more than one final record".to_string(),
                    ));
                }
            }
        }
    }

    let meta = meta.ok_or_else(|| {
        TranscriptError::SchemaViolation("missing meta record on first line".to_string())
    })?;
    validate_turn_numbering(&turns)?;
    let (result, ended_at) = match final_part {
        Some((r, e)) => (Some(r), Some(e)),
        None => (None, None),
    };
    Ok(Transcript { meta, turns, result, ended_at })
}

fn validate_turn_numbering(turns: &[TurnRecord]) -> Result<(), TranscriptError> {
    let mut attempt = 1;
    let mut next_turn = 1;
    for t in turns {
        if t.attempt_index == attempt + 1 {
            attempt += 1;
            next_turn = 1;
        }
        if t.attempt_index != attempt || t.turn_index != next_turn {
            return Err(TranscriptError::SchemaViolation(format!(
                "expected attempt {attempt} turn {next_turn}, found attempt {} turn {}",
                t.attempt_index, t.turn_index
            )));
        }
        next_turn += 1;
    }
    Ok(())
}

/// Rendered-format model: what the text format can express.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTranscript {
    pub attempts: Vec<RenderedAttempt>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedAttempt {
    pub turns: Vec<RenderedTurn>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedTurn {
    /// Assistant message verbatim, without a trailing newline.
    pub assistant_text: String,
    /// CAS output lines with the `~ ` prefix already stripped.
    pub output_lines: Vec<String>,
}

fn attempt_banner(k: usize) -> String {
    format!("{META_PREFIX}{k}{META_SUFFIX}")
}

fn turn_banner(n: usize) -> String {
    format!("{TURN_PREFIX}{n}{TURN_SUFFIX}")
}

fn banner_number(line: &str, prefix: &str, suffix: &str) -> Option<usize> {
    let middle = line.strip_prefix(prefix)?.strip_suffix(suffix)?;
    if middle.is_empty() || !middle.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    middle.parse().ok()
}

/// Serialize the rendered model to the text format.
pub fn render_rendered(transcript: &RenderedTranscript) -> String {
    let mut out = String::new();
    for (a, attempt) in transcript.attempts.iter().enumerate() {
        out.push_str(&attempt_banner(a + 1));
        out.push_str("\n\n");
        for (t, turn) in attempt.turns.iter().enumerate() {
            out.push_str(&turn_banner(t + 1));
            out.push('\n');
            if !turn.assistant_text.is_empty() {
                out.push_str(&turn.assistant_text);
                out.push('\n');
            }
            for line in &turn.output_lines {
                out.push_str(OUTPUT_PREFIX);
                out.push_str(line);
                out.push('\n');
            }
        }
    }
    out
}

/// Parse the text format back into the rendered model, enforcing banner
/// numbering and the assistant-then-outputs line order inside each turn.
pub fn parse_rendered(text: &str) -> Result<RenderedTranscript, TranscriptError> {
    let mut lines: VecDeque<&str> = text.split('\n').collect();
    if lines.back() == Some(&"") {
        lines.pop_back(); // trailing newline
    }

    let mut attempts: Vec<RenderedAttempt> = Vec::new();
    let Some(first) = lines.front() else {
        return Err(TranscriptError::SchemaViolation("empty transcript".to_string()));
    };
    if banner_number(first, META_PREFIX, META_SUFFIX).is_none() {
        return Err(TranscriptError::SchemaViolation(
            "transcript must open with an attempt banner".to_string(),
        ));
    }

    while let Some(line) = lines.pop_front() {
        let Some(k) = banner_number(line, META_PREFIX, META_SUFFIX) else {
            return Err(TranscriptError::SchemaViolation(format!(
                "expected attempt banner, found {line:?}"
            )));
        };
        if k != attempts.len() + 1 {
            return Err(TranscriptError::SchemaViolation(format!(
                "attempt banner out of order: expected {}, found {k}",
                attempts.len() + 1
            )));
        }
        if lines.pop_front() != Some("") {
            return Err(TranscriptError::SchemaViolation(
                "attempt banner must be followed by a blank line".to_string(),
            ));
        }

        let mut turns: Vec<RenderedTurn> = Vec::new();
        loop {
            match lines.front() {
                Some(line) if banner_number(line, TURN_PREFIX, TURN_SUFFIX).is_some() => {}
                _ => break,
            }
            let line = lines.pop_front().unwrap();
            let n = banner_number(line, TURN_PREFIX, TURN_SUFFIX).unwrap();
            if n != turns.len() + 1 {
                return Err(TranscriptError::SchemaViolation(format!(
                    "turn banner out of order: expected {}, found {n}",
                    turns.len() + 1
                )));
            }

            let mut assistant_lines: Vec<&str> = Vec::new();
            let mut output_lines: Vec<String> = Vec::new();
            while let Some(&line) = lines.front() {
                if is_banner(line) || line.starts_with(OUTPUT_PREFIX) {
                    break;
                }
                assistant_lines.push(lines.pop_front().unwrap());
            }
            while let Some(&line) = lines.front() {
                if let Some(output) = line.strip_prefix(OUTPUT_PREFIX) {
                    output_lines.push(output.to_string());
                    lines.pop_front();
                } else {
                    break;
                }
            }
            if let Some(&line) = lines.front() {
                if !is_banner(line) {
                    return Err(TranscriptError::SchemaViolation(format!(
                        "unexpected line after turn outputs: {line:?}"
                    )));
                }
            }
            turns.push(RenderedTurn {
                assistant_text: assistant_lines.join("\n"),
                output_lines,
            });
        }
        if turns.is_empty() {
            return Err(TranscriptError::SchemaViolation(format!(
                "attempt {k} has no turns"
            )));
        }
        attempts.push(RenderedAttempt { turns });

        match lines.front() {
            None => break,
            Some(line) if banner_number(line, META_PREFIX, META_SUFFIX).is_some() => {}
            Some(line) => {
                return Err(TranscriptError::SchemaViolation(format!(
                    "expected attempt banner or end of file, found {line:?}"
                )));
            }
        }
    }
    Ok(RenderedTranscript { attempts })
}

fn is_banner(line: &str) -> bool {
    banner_number(line, META_PREFIX, META_SUFFIX).is_some()
        || banner_number(line, TURN_PREFIX, TURN_SUFFIX).is_some()
}

/// Project a full transcript onto the rendered model: statement outputs are
/// flattened into the same text the agent loop fed back to the model.
pub fn to_rendered(transcript: &Transcript) -> RenderedTranscript {
    let mut attempts: Vec<RenderedAttempt> = Vec::new();
    for turn in &transcript.turns {
        while attempts.len() < turn.attempt_index as usize {
            attempts.push(RenderedAttempt { turns: Vec::new() });
        }
        let feedback = chunk_feedback(&turn.statement_results);
        let output_lines = if feedback.is_empty() {
            Vec::new()
        } else {
            feedback.split('\n').map(str::to_string).collect()
        };
        attempts[turn.attempt_index as usize - 1].turns.push(RenderedTurn {
            assistant_text: turn.assistant_text.clone(),
            output_lines,
        });
    }
    RenderedTranscript { attempts }
}

/// Render a full transcript to the text format; incomplete transcripts get
/// an explicit trailer instead of silently looking finished.
pub fn render_transcript(transcript: &Transcript) -> String {
    let mut out = render_rendered(&to_rendered(transcript));
    if transcript.result.is_none() {
        out.push_str(INCOMPLETE_TRAILER);
        out.push('\n');
    }
    out
}

/// Mock scripts recovered from a rendered transcript: the assistant texts in
/// order (zero usage) and one CAS output entry per turn that would reach the
/// backend under the given config.
pub fn replay_scripts_from_rendered(
    rendered: &RenderedTranscript,
    config: &RunConfig,
) -> (Vec<(String, Usage)>, Vec<String>) {
    let mut llm_script = Vec::new();
    let mut cas_entries = Vec::new();
    for attempt in &rendered.attempts {
        for turn in &attempt.turns {
            llm_script.push((turn.assistant_text.clone(), Usage::default()));
            let chunk = extract_statements(&turn.assistant_text, config.extraction_mode);
            let statements = split_statements(&chunk);
            let decision =
                detect_termination(&turn.assistant_text, &statements, &config.give_up_lexicon);
            if decision == TerminationDecision::Continue {
                cas_entries.push(turn.output_lines.join("\n"));
            }
        }
    }
    (llm_script, cas_entries)
}

/// Mock scripts recovered from a stored JSONL transcript, with recorded
/// usage and exact per-chunk outputs.
pub fn replay_scripts_from_transcript(
    transcript: &Transcript,
) -> (Vec<(String, Usage)>, Vec<String>) {
    let mut llm_script = Vec::new();
    let mut cas_entries = Vec::new();
    for turn in &transcript.turns {
        llm_script.push((turn.assistant_text.clone(), turn.usage));
        if turn
            .statement_results
            .iter()
            .any(|r| r.statement.kind.runs_on_backend())
        {
            cas_entries.push(chunk_feedback(&turn.statement_results));
        }
    }
    (llm_script, cas_entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{RunStatus, TurnRecord};
    use crate::gateway::GenerationParams;

    fn turn(text: &str, outputs: &[&str]) -> RenderedTurn {
        RenderedTurn {
            assistant_text: text.to_string(),
            output_lines: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn banners_match_the_published_layout() {
        assert_eq!(attempt_banner(1), "# +++++++++++++++++ META TRY 1 ++++++++++++++ ");
        assert_eq!(turn_banner(3), "# ----------------- TURN 3 -----------------");
    }

    #[test]
    fn single_turn_roundtrip() {
        let rt = RenderedTranscript {
            attempts: vec![RenderedAttempt {
                turns: vec![turn("x := 1;\n# done", &["1"])],
            }],
        };
        let text = render_rendered(&rt);
        assert_eq!(parse_rendered(&text).unwrap(), rt);
    }

    #[test]
    fn leading_blank_assistant_lines_survive_roundtrip() {
        let rt = RenderedTranscript {
            attempts: vec![RenderedAttempt {
                turns: vec![turn("\n\n# leading blanks", &[]), turn("next;", &["out"])],
            }],
        };
        let text = render_rendered(&rt);
        assert_eq!(parse_rendered(&text).unwrap(), rt);
    }

    #[test]
    fn empty_assistant_text_renders_headers_only() {
        let rt = RenderedTranscript {
            attempts: vec![RenderedAttempt { turns: vec![turn("", &[])] }],
        };
        let text = render_rendered(&rt);
        assert_eq!(
            text,
            "# +++++++++++++++++ META TRY 1 ++++++++++++++ \n\n# ----------------- TURN 1 -----------------\n"
        );
        assert_eq!(parse_rendered(&text).unwrap(), rt);
    }

    #[test]
    fn multiple_attempts_roundtrip() {
        let rt = RenderedTranscript {
            attempts: vec![
                RenderedAttempt { turns: vec![turn("a;", &["1", "2"])] },
                RenderedAttempt { turns: vec![turn("b;", &[]), turn("# end", &[])] },
            ],
        };
        assert_eq!(parse_rendered(&render_rendered(&rt)).unwrap(), rt);
    }

    #[test]
    fn out_of_order_banners_are_schema_violations() {
        let good = render_rendered(&RenderedTranscript {
            attempts: vec![RenderedAttempt { turns: vec![turn("a;", &[])] }],
        });
        let bad = good.replace("TURN 1", "TURN 2");
        assert!(parse_rendered(&bad).is_err());
        let bad = good.replace("META TRY 1", "META TRY 2");
        assert!(parse_rendered(&bad).is_err());
        assert!(parse_rendered("not a transcript\n").is_err());
    }

    fn sample_transcript() -> Transcript {
        let meta = TranscriptMeta {
            run_id: "10ex/sRMt/attempt1".to_string(),
            problem_id: "sRMt".to_string(),
            pack_id: "10ex".to_string(),
            params: GenerationParams::new("m"),
            started_at: "2026-01-01T00:00:00Z".to_string(),
        };
        let results = crate::repl::ReplaySession::new(["out".to_string()])
            .execute_chunk("x := 1;")
            .unwrap();
        let turns = vec![TurnRecord {
            attempt_index: 1,
            turn_index: 1,
            assistant_text: "x := 1;".to_string(),
            statement_results: results,
            usage: Usage::default(),
            wall_time_ms: 3,
        }];
        let result = RunResult {
            status: RunStatus::SolvedClaimed,
            turns: 1,
            restarts: 0,
            transcript_ref: "10ex/sRMt/attempt1".to_string(),
        };
        Transcript {
            meta,
            turns,
            result: Some(result),
            ended_at: Some("2026-01-01T00:01:00Z".to_string()),
        }
    }

    use crate::repl::CasSession;

    #[test]
    fn jsonl_roundtrip_preserves_the_transcript() {
        let transcript = sample_transcript();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut sink = JsonlSink::create(&path).unwrap();
        sink.on_meta(&transcript.meta).unwrap();
        for t in &transcript.turns {
            sink.on_turn(t).unwrap();
        }
        sink.on_final(
            transcript.result.as_ref().unwrap(),
            transcript.ended_at.as_deref().unwrap(),
        )
        .unwrap();
        drop(sink);
        let read = read_jsonl(&path).unwrap();
        assert_eq!(read, transcript);
    }

    #[test]
    fn missing_final_record_reads_as_incomplete() {
        let transcript = sample_transcript();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let mut sink = JsonlSink::create(&path).unwrap();
        sink.on_meta(&transcript.meta).unwrap();
        sink.on_turn(&transcript.turns[0]).unwrap();
        drop(sink);
        let read = read_jsonl(&path).unwrap();
        assert!(read.result.is_none());
        let rendered = render_transcript(&read);
        assert!(rendered.ends_with("[run incomplete]\n"));
    }

    #[test]
    fn rendered_transcript_flattens_statement_outputs() {
        let transcript = sample_transcript();
        let text = render_transcript(&transcript);
        assert!(text.contains("~ out\n"));
        assert!(!text.contains(INCOMPLETE_TRAILER));
    }

    #[test]
    fn bad_turn_numbering_is_rejected() {
        let transcript = sample_transcript();
        let mut turn2 = transcript.turns[0].clone();
        turn2.turn_index = 3;
        let mut turns = transcript.turns.clone();
        turns.push(turn2);
        assert!(validate_turn_numbering(&turns).is_err());
    }
}
