//! `casloop packs validate`: load every pack directory, report issues and
//! size estimates.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::bail;
use casloop_core::context::{estimate_tokens, load_pack, render_system_prompt};

pub fn validate(
    config_path: Option<&Path>,
    packs_dir: Option<PathBuf>,
) -> anyhow::Result<ExitCode> {
    let mut flags = BTreeMap::new();
    if let Some(dir) = &packs_dir {
        flags.insert("packs_dir".to_string(), dir.display().to_string());
    }
    let config = super::load_config(config_path, flags)?;
    if !config.packs_dir.is_dir() {
        bail!("packs directory {} does not exist", config.packs_dir.display());
    }

    let mut entries: Vec<PathBuf> = std::fs::read_dir(&config.packs_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    if entries.is_empty() {
        bail!("no pack directories under {}", config.packs_dir.display());
    }

    let mut failures = 0usize;
    for dir in &entries {
        match load_pack(dir) {
            Ok(loaded) => {
                let estimate = estimate_tokens(&render_system_prompt(&loaded.pack));
                let declared = loaded
                    .pack
                    .declared_token_size
                    .map(|d| format!(", declared {d}"))
                    .unwrap_or_default();
                println!(
                    "pack {}: ok ({} document(s), ~{} tokens{declared})",
                    loaded.pack.id,
                    loaded.pack.documents.len(),
                    estimate.estimated_tokens
                );
                for warning in &loaded.warnings {
                    println!("  warning: {warning}");
                }
            }
            Err(e) => {
                failures += 1;
                println!("pack {}: INVALID: {e}", dir.display());
            }
        }
    }
    Ok(if failures == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
