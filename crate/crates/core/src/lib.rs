//! Harness for driving a computer-algebra-system (CAS) REPL from a chat LLM,
//! plus the evaluation bench that runs context-pack × problem matrices,
//! records transcripts, and aggregates pass/fail and turn statistics.
//!
//! The crate is organized around the lifecycle of one run:
//!
//! - [`context`] — problem registry, context packs, system-prompt rendering
//! - [`gateway`] — chat-completion clients (HTTP adapter plus scripted mocks)
//! - [`repl`] — CAS subprocess driver, statement tokenizer, replay backend
//! - [`agent`] — the turn loop: complete → execute → feed back, with
//!   termination detection and restart counting
//! - [`transcript`] — JSONL transcript schema and the rendered text format
//! - [`evalbench`] — run matrices, rubric grades, metrics, reports
//! - [`config`] — harness configuration and precedence resolution

pub mod agent;
pub mod config;
pub mod context;
pub mod evalbench;
pub mod gateway;
pub mod repl;
pub mod transcript;
