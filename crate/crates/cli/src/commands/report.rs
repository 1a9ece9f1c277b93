//! `casloop report`: aggregate the results and grades logs into the grid,
//! CSV, and markdown reports.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::bail;
use casloop_core::evalbench::{
    aggregate_metrics, export_results, load_grades_jsonl, load_results_jsonl,
    pack_column_order, render_grid, ReportFormat,
};

#[derive(clap::Args)]
pub struct ReportArgs {
    /// Which artifacts to write: all, grid, csv, or markdown
    #[arg(long, default_value = "all")]
    pub format: String,
    #[arg(long)]
    pub results_dir: Option<PathBuf>,
}

pub fn execute(config_path: Option<&Path>, args: ReportArgs) -> anyhow::Result<ExitCode> {
    let mut flags = BTreeMap::new();
    if let Some(dir) = &args.results_dir {
        flags.insert("results_dir".to_string(), dir.display().to_string());
    }
    let config = super::load_config(config_path, flags)?;
    let results_path = super::results_log_path(&config.results_dir);
    if !results_path.is_file() {
        bail!("no results log at {}; run something first", results_path.display());
    }
    let rows = load_results_jsonl(&results_path)?;
    if rows.is_empty() {
        bail!("results log {} is empty", results_path.display());
    }
    let grades_path = super::grades_log_path(&config.results_dir);
    let grades = if grades_path.is_file() {
        load_grades_jsonl(&grades_path)?
    } else {
        Vec::new()
    };

    let results: Vec<(String, String, casloop_core::agent::RunResult)> = rows
        .iter()
        .map(|r| (r.pack_id.clone(), r.problem_id.clone(), r.result.clone()))
        .collect();
    let table = aggregate_metrics(&results, &grades)?;

    let grid = render_grid(&grades);
    let csv = export_results(&table, ReportFormat::Csv);
    let markdown = export_results(&table, ReportFormat::Markdown);

    let wanted = args.format.as_str();
    if !matches!(wanted, "all" | "grid" | "csv" | "markdown") {
        bail!("unknown format {wanted:?} (expected all, grid, csv, or markdown)");
    }
    let mut written = Vec::new();
    if matches!(wanted, "all" | "grid") {
        let path = config.results_dir.join("grid.txt");
        std::fs::write(&path, &grid)?;
        written.push(path);
    }
    if matches!(wanted, "all" | "csv") {
        let path = config.results_dir.join("metrics.csv");
        std::fs::write(&path, &csv)?;
        written.push(path);
    }
    if matches!(wanted, "all" | "markdown") {
        let path = config.results_dir.join("report.md");
        std::fs::write(&path, &markdown)?;
        written.push(path);
    }

    print!("{grid}");
    println!();
    println!(
        "{:<12} {:>11} {:>13} {:>14} {:>16} {:>5}",
        "pack", "mean_turns", "median_turns", "mean_restarts", "median_restarts", "pass"
    );
    for pack in pack_column_order(table.per_pack.keys().map(String::as_str)) {
        let summary = &table.per_pack[&pack];
        println!(
            "{:<12} {:>11.3} {:>13.1} {:>14.3} {:>16.1} {:>5}",
            pack,
            summary.mean_turns,
            summary.median_turns,
            summary.mean_restarts,
            summary.median_restarts,
            summary.pass_count
        );
    }
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
