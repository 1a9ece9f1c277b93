//! `casloop render`: print a stored JSONL transcript in the rendered text
//! format, bit-exact with the golden layout.

use std::path::Path;
use std::process::ExitCode;

use casloop_core::transcript::{read_jsonl, render_transcript};

pub fn execute(transcript: &Path) -> anyhow::Result<ExitCode> {
    let parsed = read_jsonl(transcript)?;
    print!("{}", render_transcript(&parsed));
    Ok(ExitCode::SUCCESS)
}
