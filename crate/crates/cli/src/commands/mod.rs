pub mod grade;
pub mod packs;
pub mod problems;
pub mod render;
pub mod report;
pub mod run;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use casloop_core::config::{build_config, env_layer, file_layer, ConfigLayers, HarnessConfig};

/// Resolve the effective config: flags > `CASLOOP_*` env > config file >
/// defaults. Without `--config`, `./casloop.toml` is picked up when present.
pub fn load_config(
    config_path: Option<&Path>,
    flags: BTreeMap<String, String>,
) -> anyhow::Result<HarnessConfig> {
    let file = match config_path {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config file {}", path.display()))?;
            file_layer(&text)?
        }
        None => {
            let default = Path::new("casloop.toml");
            if default.exists() {
                file_layer(&std::fs::read_to_string(default)?)?
            } else {
                BTreeMap::new()
            }
        }
    };
    let layers = ConfigLayers { flags, env: env_layer(std::env::vars()), file };
    Ok(build_config(&layers)?)
}

/// File-system-safe name for a run id (`10ex/sRMt/attempt1` →
/// `10ex__sRMt__attempt1`).
pub fn run_file_stem(run_id: &str) -> String {
    run_id.replace('/', "__")
}

pub fn transcript_path(results_dir: &Path, run_id: &str) -> PathBuf {
    results_dir
        .join("transcripts")
        .join(format!("{}.jsonl", run_file_stem(run_id)))
}

pub fn results_log_path(results_dir: &Path) -> PathBuf {
    results_dir.join("results.jsonl")
}

pub fn grades_log_path(results_dir: &Path) -> PathBuf {
    results_dir.join("grades.jsonl")
}
