//! `casloop grade`: interactive rubric walk-through for one finished run.
//! The verdict is derived, shown, and appended to the grades log; aborting
//! mid-prompt writes nothing.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use casloop_core::evalbench::{
    derive_verdict, Finding, GradeRecord, Rule, RuleAssessment, ALL_RULES,
};

fn parse_finding(input: &str) -> Option<Finding> {
    match input.trim().to_ascii_lowercase().as_str() {
        "ok" | "o" => Some(Finding::Ok),
        "violated" | "v" => Some(Finding::Violated),
        "harmless" | "violated_but_harmless" | "h" => Some(Finding::ViolatedButHarmless),
        "na" | "n/a" | "not_applicable" => Some(Finding::NotApplicable),
        _ => None,
    }
}

fn rule_label(rule: Rule) -> &'static str {
    match rule {
        Rule::R1Setup => "R1 setup",
        Rule::R2BackgroundEom => "R2 background equations",
        Rule::R3PerturbationAnalysis => "R3 perturbation analysis",
        Rule::R4Subtlety => "R4 subtlety",
    }
}

/// Walk the four rules over any line source; `None` from the source aborts.
fn collect_assessments(
    mut next_line: impl FnMut(&str) -> Option<String>,
) -> anyhow::Result<Option<Vec<RuleAssessment>>> {
    let mut assessments = Vec::with_capacity(ALL_RULES.len());
    for rule in ALL_RULES {
        let finding = loop {
            let options = if rule == Rule::R4Subtlety {
                "ok/harmless/na"
            } else {
                "ok/violated/harmless/na"
            };
            let prompt = format!("{} ({}) [{}]: ", rule_label(rule), rule.description(), options);
            let Some(line) = next_line(&prompt) else { return Ok(None) };
            if line.trim() == "q" {
                return Ok(None);
            }
            match parse_finding(&line) {
                Some(Finding::Violated) if rule == Rule::R4Subtlety => {
                    println!("a forgotten subtlety with a correct result is never a fail; use harmless or na");
                }
                Some(finding) => break finding,
                None => println!("unrecognized finding {:?}", line.trim()),
            }
        };
        let Some(note) = next_line("note (optional): ") else { return Ok(None) };
        assessments.push(RuleAssessment { rule, finding, note: note.trim().to_string() });
    }
    Ok(Some(assessments))
}

pub fn execute(
    config_path: Option<&Path>,
    run_id: &str,
    grader: &str,
    results_dir: Option<PathBuf>,
) -> anyhow::Result<ExitCode> {
    let mut flags = BTreeMap::new();
    if let Some(dir) = &results_dir {
        flags.insert("results_dir".to_string(), dir.display().to_string());
    }
    let config = super::load_config(config_path, flags)?;

    let transcript = super::transcript_path(&config.results_dir, run_id);
    if !transcript.is_file() {
        bail!("unknown run {run_id:?}: no transcript at {}", transcript.display());
    }

    println!("grading {run_id} (transcript: {})", transcript.display());
    let stdin = std::io::stdin();
    let mut lines = stdin.lock().lines();
    let assessments = collect_assessments(|prompt| {
        print!("{prompt}");
        std::io::stdout().flush().ok();
        lines.next().and_then(Result::ok)
    })?;
    let Some(assessments) = assessments else {
        eprintln!("aborted; no record written");
        return Ok(ExitCode::FAILURE);
    };

    let verdict = derive_verdict(&assessments)?;
    let record = GradeRecord {
        run_id: run_id.to_string(),
        assessments,
        verdict,
        grader: grader.to_string(),
        graded_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    let path = super::grades_log_path(&config.results_dir);
    let mut file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .with_context(|| format!("opening {}", path.display()))?;
    writeln!(file, "{}", serde_json::to_string(&record)?)?;
    println!("verdict: {verdict} (recorded in {})", path.display());
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted(answers: &[&str]) -> impl FnMut(&str) -> Option<String> {
        let mut queue: std::collections::VecDeque<String> =
            answers.iter().map(|s| s.to_string()).collect();
        move |_prompt| queue.pop_front()
    }

    #[test]
    fn harmless_background_finding_still_passes() {
        let answers = ["ok", "", "harmless", "solve skipped", "ok", "", "ok", ""];
        let assessments = collect_assessments(scripted(&answers)).unwrap().unwrap();
        assert_eq!(derive_verdict(&assessments).unwrap().to_string(), "pass");
    }

    #[test]
    fn violated_reduction_fails() {
        let answers = ["ok", "", "ok", "", "violated", "bad reduction", "ok", ""];
        let assessments = collect_assessments(scripted(&answers)).unwrap().unwrap();
        assert_eq!(derive_verdict(&assessments).unwrap().to_string(), "fail");
    }

    #[test]
    fn eof_mid_walk_aborts_without_a_record() {
        let answers = ["ok", "", "ok"];
        assert!(collect_assessments(scripted(&answers)).unwrap().is_none());
    }

    #[test]
    fn r4_rejects_violated_and_reprompts() {
        let answers = ["ok", "", "ok", "", "ok", "", "violated", "na", ""];
        let assessments = collect_assessments(scripted(&answers)).unwrap().unwrap();
        assert_eq!(assessments[3].finding, Finding::NotApplicable);
    }
}
