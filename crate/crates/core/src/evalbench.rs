//! Run-matrix planning, rubric grades and verdicts, per-pack metrics, and
//! report rendering (grid, CSV, markdown).

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{RunConfig, RunResult, RunStatus};
use crate::context::{problems, CANONICAL_PACK_IDS};

/// The four grading rules. The fourth is a forgiveness rule: a correct final
/// result with a forgotten subtlety still passes, so it never takes the
/// plain `violated` finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    R1Setup,
    R2BackgroundEom,
    R3PerturbationAnalysis,
    R4Subtlety,
}

pub const ALL_RULES: [Rule; 4] = [
    Rule::R1Setup,
    Rule::R2BackgroundEom,
    Rule::R3PerturbationAnalysis,
    Rule::R4Subtlety,
];

impl Rule {
    pub fn description(self) -> &'static str {
        match self {
            Rule::R1Setup => "setup of the theory, background, and perturbations",
            Rule::R2BackgroundEom => "background equations of motion computed and substituted",
            Rule::R3PerturbationAnalysis => {
                "perturbation analysis and higher-derivative reduction"
            }
            Rule::R4Subtlety => "forgotten subtleties despite a correct final result",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Finding {
    Ok,
    Violated,
    ViolatedButHarmless,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleAssessment {
    pub rule: Rule,
    pub finding: Finding,
    #[serde(default)]
    pub note: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        })
    }
}

/// One human rubric assessment of one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GradeRecord {
    pub run_id: String,
    pub assessments: Vec<RuleAssessment>,
    pub verdict: Verdict,
    pub grader: String,
    pub graded_at: String,
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("incomplete assessment: expected exactly one finding per rule")]
    IncompleteAssessment,
    #[error("rule {0:?} does not admit finding {1:?}")]
    InvalidFinding(Rule, Finding),
    #[error("unknown pack id: {0}")]
    UnknownPack(String),
    #[error("unknown problem id: {0}")]
    UnknownProblem(String),
    #[error("duplicate id in input: {0}")]
    DuplicateId(String),
    #[error("duplicate cell: {0}/{1}")]
    DuplicateCell(String, String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed record: {0}")]
    Malformed(String),
}

/// Fail iff any rule is violated outright; harmless and not-applicable
/// findings never fail a run.
pub fn derive_verdict(assessments: &[RuleAssessment]) -> Result<Verdict, EvalError> {
    let mut seen = BTreeSet::new();
    for a in assessments {
        if a.rule == Rule::R4Subtlety && a.finding == Finding::Violated {
            return Err(EvalError::InvalidFinding(a.rule, a.finding));
        }
        if !seen.insert(a.rule) {
            return Err(EvalError::IncompleteAssessment);
        }
    }
    if seen.len() != ALL_RULES.len() {
        return Err(EvalError::IncompleteAssessment);
    }
    if assessments.iter().any(|a| a.finding == Finding::Violated) {
        Ok(Verdict::Fail)
    } else {
        Ok(Verdict::Pass)
    }
}

/// One planned run of the matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub run_id: String,
    pub pack_id: String,
    pub problem_id: String,
    pub config: RunConfig,
}

pub fn run_id_for(pack_id: &str, problem_id: &str) -> String {
    format!("{pack_id}/{problem_id}/attempt1")
}

/// Cartesian product, packs outer and problems inner, with stable run ids.
pub fn plan_matrix(
    known_packs: &BTreeSet<String>,
    pack_ids: &[String],
    problem_ids: &[String],
    config: &RunConfig,
) -> Result<Vec<RunSpec>, EvalError> {
    let mut seen = BTreeSet::new();
    for id in pack_ids {
        if !known_packs.contains(id) {
            return Err(EvalError::UnknownPack(id.clone()));
        }
        if !seen.insert(id.clone()) {
            return Err(EvalError::DuplicateId(id.clone()));
        }
    }
    let registry: BTreeSet<&str> = problems().iter().map(|p| p.id.as_str()).collect();
    let mut seen = BTreeSet::new();
    for id in problem_ids {
        if !registry.contains(id.as_str()) {
            return Err(EvalError::UnknownProblem(id.clone()));
        }
        if !seen.insert(id.clone()) {
            return Err(EvalError::DuplicateId(id.clone()));
        }
    }
    let mut specs = Vec::with_capacity(pack_ids.len() * problem_ids.len());
    for pack in pack_ids {
        for problem in problem_ids {
            specs.push(RunSpec {
                run_id: run_id_for(pack, problem),
                pack_id: pack.clone(),
                problem_id: problem.clone(),
                config: config.clone(),
            });
        }
    }
    Ok(specs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub turns: u32,
    pub restarts: u32,
    pub status: RunStatus,
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackSummary {
    pub mean_turns: f64,
    pub median_turns: f64,
    pub mean_restarts: f64,
    pub median_restarts: f64,
    pub pass_count: u32,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsTable {
    pub per_cell: BTreeMap<(String, String), CellStats>,
    pub per_pack: BTreeMap<String, PackSummary>,
}

fn median(sorted: &[u32]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] as f64 + sorted[n / 2] as f64) / 2.0
    }
}

/// Aggregate per-cell results into per-pack means/medians and pass counts.
/// Ungraded cells still count toward turn/restart statistics; only graded
/// passes feed `pass_count`.
pub fn aggregate_metrics(
    results: &[(String, String, RunResult)],
    grades: &[GradeRecord],
) -> Result<MetricsTable, EvalError> {
    let verdict_by_ref: BTreeMap<&str, Verdict> = grades
        .iter()
        .map(|g| (g.run_id.as_str(), g.verdict))
        .collect();

    let mut per_cell = BTreeMap::new();
    for (pack, problem, result) in results {
        let key = (pack.clone(), problem.clone());
        let stats = CellStats {
            turns: result.turns,
            restarts: result.restarts,
            status: result.status,
            verdict: verdict_by_ref.get(result.transcript_ref.as_str()).copied(),
        };
        if per_cell.insert(key, stats).is_some() {
            return Err(EvalError::DuplicateCell(pack.clone(), problem.clone()));
        }
    }

    let mut per_pack = BTreeMap::new();
    let packs: BTreeSet<&String> = per_cell.keys().map(|(p, _)| p).collect();
    for pack in packs {
        let cells: Vec<&CellStats> = per_cell
            .iter()
            .filter(|((p, _), _)| p == pack)
            .map(|(_, c)| c)
            .collect();
        let mut turns: Vec<u32> = cells.iter().map(|c| c.turns).collect();
        let mut restarts: Vec<u32> = cells.iter().map(|c| c.restarts).collect();
        turns.sort_unstable();
        restarts.sort_unstable();
        let n = cells.len() as f64;
        per_pack.insert(
            pack.clone(),
            PackSummary {
                mean_turns: turns.iter().map(|&t| t as f64).sum::<f64>() / n,
                median_turns: median(&turns),
                mean_restarts: restarts.iter().map(|&r| r as f64).sum::<f64>() / n,
                median_restarts: median(&restarts),
                pass_count: cells
                    .iter()
                    .filter(|c| c.verdict == Some(Verdict::Pass))
                    .count() as u32,
            },
        );
    }
    Ok(MetricsTable { per_cell, per_pack })
}

/// Canonical column order: shipped packs first, then anything else sorted.
pub fn pack_column_order<'a>(ids: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let seen: BTreeSet<&str> = ids.into_iter().collect();
    let mut out: Vec<String> = CANONICAL_PACK_IDS
        .iter()
        .filter(|id| seen.contains(**id))
        .map(|id| id.to_string())
        .collect();
    out.extend(
        seen.iter()
            .filter(|id| !CANONICAL_PACK_IDS.contains(*id))
            .map(|id| id.to_string()),
    );
    out
}

fn split_run_id(run_id: &str) -> Option<(&str, &str)> {
    let mut parts = run_id.split('/');
    match (parts.next(), parts.next()) {
        (Some(pack), Some(problem)) if !pack.is_empty() && !problem.is_empty() => {
            Some((pack, problem))
        }
        _ => None,
    }
}

const MARK_PASS: char = '#';
const MARK_FAIL: char = 'o';
const MARK_UNGRADED: char = '.';

/// Monospaced pass/fail grid: problems as rows, packs as columns, `#` for a
/// pass, `o` for a fail, `.` when ungraded, plus a pass-count footer.
pub fn render_grid(grades: &[GradeRecord]) -> String {
    let mut verdicts: BTreeMap<(String, String), Verdict> = BTreeMap::new();
    for grade in grades {
        if let Some((pack, problem)) = split_run_id(&grade.run_id) {
            verdicts.insert((pack.to_string(), problem.to_string()), grade.verdict);
        }
    }
    let mut columns = pack_column_order(verdicts.keys().map(|(p, _)| p.as_str()));
    if columns.is_empty() {
        columns = CANONICAL_PACK_IDS.iter().map(|s| s.to_string()).collect();
    }

    let label_width = problems()
        .iter()
        .map(|p| p.id.len())
        .chain(["pass".len()])
        .max()
        .unwrap_or(4);
    let mut out = String::new();
    write!(out, "{:label_width$}", "").unwrap();
    for col in &columns {
        write!(out, "  {col}").unwrap();
    }
    out.push('\n');
    for problem in problems() {
        write!(out, "{:label_width$}", problem.id).unwrap();
        for col in &columns {
            let mark = match verdicts.get(&(col.clone(), problem.id.clone())) {
                Some(Verdict::Pass) => MARK_PASS,
                Some(Verdict::Fail) => MARK_FAIL,
                None => MARK_UNGRADED,
            };
            write!(out, "  {mark:^width$}", width = col.len()).unwrap();
        }
        out.push('\n');
    }
    write!(out, "{:label_width$}", "pass").unwrap();
    for col in &columns {
        let count = problems()
            .iter()
            .filter(|p| verdicts.get(&(col.clone(), p.id.clone())) == Some(&Verdict::Pass))
            .count();
        write!(out, "  {count:^width$}", width = col.len()).unwrap();
    }
    out.push('\n');
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// Row and column order used by both exports: registry problems first, packs
/// in canonical order.
fn table_order(table: &MetricsTable) -> (Vec<String>, Vec<String>) {
    let packs = pack_column_order(table.per_cell.keys().map(|(p, _)| p.as_str()));
    let mut problem_ids: Vec<String> = problems().iter().map(|p| p.id.clone()).collect();
    for (_, problem) in table.per_cell.keys() {
        if !problem_ids.contains(problem) {
            problem_ids.push(problem.clone());
        }
    }
    (packs, problem_ids)
}

/// Render the table as CSV (one row per cell) or as a markdown grid whose
/// cells carry `turns|restarts`.
pub fn export_results(table: &MetricsTable, format: ReportFormat) -> String {
    let (packs, problem_ids) = table_order(table);
    match format {
        ReportFormat::Csv => {
            let mut out = String::from("pack,problem,turns,restarts,status,verdict\n");
            for pack in &packs {
                for problem in &problem_ids {
                    let Some(cell) = table.per_cell.get(&(pack.clone(), problem.clone()))
                    else {
                        continue;
                    };
                    let verdict = cell.verdict.map(|v| v.to_string()).unwrap_or_default();
                    writeln!(
                        out,
                        "{pack},{problem},{},{},{},{verdict}",
                        cell.turns, cell.restarts, cell.status
                    )
                    .unwrap();
                }
            }
            out
        }
        ReportFormat::Markdown => {
            let mut out = String::new();
            write!(out, "| problem |").unwrap();
            for pack in &packs {
                write!(out, " {pack} |").unwrap();
            }
            out.push('\n');
            write!(out, "| --- |").unwrap();
            for _ in &packs {
                write!(out, " --- |").unwrap();
            }
            out.push('\n');
            for problem in &problem_ids {
                if !packs
                    .iter()
                    .any(|p| table.per_cell.contains_key(&(p.clone(), problem.clone())))
                {
                    continue;
                }
                write!(out, "| {problem} |").unwrap();
                for pack in &packs {
                    match table.per_cell.get(&(pack.clone(), problem.clone())) {
                        Some(cell) => {
                            write!(out, " {}|{} |", cell.turns, cell.restarts).unwrap()
                        }
                        None => write!(out, "  |").unwrap(),
                    }
                }
                out.push('\n');
            }
            out
        }
    }
}

/// One line of the results log: where a finished run landed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub pack_id: String,
    pub problem_id: String,
    pub result: RunResult,
}

pub fn load_results_jsonl(path: &Path) -> Result<Vec<ResultRow>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| EvalError::Malformed(e.to_string())))
        .collect()
}

pub fn load_grades_jsonl(path: &Path) -> Result<Vec<GradeRecord>, EvalError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| EvalError::Malformed(e.to_string())))
        .collect()
}
