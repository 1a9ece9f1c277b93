//! Problem registry, context packs, system-prompt rendering, and token-size
//! estimation.
//!
//! Problems ship embedded as plain ASCII text. Packs live on disk as a
//! directory with a `pack.toml` manifest listing ordered documents, an
//! optional preamble file, and an optional declared token size.

use std::fmt;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Background {
    Cosmological,
    Flat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sector {
    Scalar,
    Vector,
    Tensor,
}

/// One benchmark task, statement shipped verbatim as plain text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    pub background: Background,
    pub sector: Sector,
}

#[derive(Debug, Error)]
pub enum ContextError {
    #[error("unknown problem id: {0}")]
    UnknownProblem(String),
}

const SRF_ACTION: &str = "Consider Mp^2/2*(R-2*Lambda)+1/2*sigma^2*(m^2+f(R)) gravity on a cosmological background, where Mp is the Planck mass, Lambda is the cosmological constant, sigma is the scalar field, m^2 is the mass, and f(R) is a function of Ricci scalar.";
const SRI2F_ACTION: &str = "Consider Mp^2/2*(R-2*Lambda)+1/2*sigma^2*(m^2+xi*Rmn*Rmn) gravity on a cosmological background, where Mp is the Planck mass, sigma is the scalar field, m^2 is the mass, and xi is the coupling constant. Here Rmn*Rmn denotes the Ricci tensor contracted with itself.";
const SRI2M_ACTION: &str = "Consider Mp^2/2*(R-2*Lambda)+1/2*sigma^2*(m^2+xi*Rmn*Rmn) gravity on a flat background, where Mp is the Planck mass, sigma is the scalar field, m^2 is the mass, and xi is the coupling constant. Here Rmn*Rmn denotes the Ricci tensor contracted with itself.";

fn ask(sector: &str) -> String {
    format!(
        " Find the quadratic action for the {sector} perturbations around this background, and express it in terms of the propagating modes."
    )
}

fn build_registry() -> Vec<Problem> {
    let p = |id: &str, statement: String, background, sector| Problem {
        id: id.to_string(),
        statement,
        background,
        sector,
    };
    vec![
        p(
            "R2Fs",
            "Consider Mp^2/2*R+beta*R^2 gravity on a cosmological background, where Mp is the Planck mass, and beta is the coupling. Find the quadratic action for the scalar perturbation around this background, and express it in terms of the propagating modes. Perform the calculation in the Jordan frame, you are not allowed to use the Einstein frame.".to_string(),
            Background::Cosmological,
            Sector::Scalar,
        ),
        p("sRFs", format!("{SRF_ACTION}{}", ask("scalar")), Background::Cosmological, Sector::Scalar),
        p("sRFv", format!("{SRF_ACTION}{}", ask("vector")), Background::Cosmological, Sector::Vector),
        p("sRFt", format!("{SRF_ACTION}{}", ask("tensor")), Background::Cosmological, Sector::Tensor),
        p(
            "sRMs",
            format!(
                "Consider Mp^2/2*(R-2*Lambda)+1/2*sigma^2*(m^2+f(R)) gravity on a flat background, where Mp is the Planck mass, sigma is the scalar field, m^2 is the mass, and f(R) is a function of Ricci scalar.{}",
                ask("scalar")
            ),
            Background::Flat,
            Sector::Scalar,
        ),
        p(
            "sRMt",
            format!(
                "Consider Mp^2/2*R+1/2*sigma^2*(m^2+f(R)) gravity on a flat background, where Mp is the Planck mass, sigma is the scalar field, m^2 is the mass, and f(R) is a function of Ricci scalar.{}",
                ask("tensor")
            ),
            Background::Flat,
            Sector::Tensor,
        ),
        p("sRi2Ms", format!("{SRI2M_ACTION}{}", ask("scalar")), Background::Flat, Sector::Scalar),
        p("sRi2Fs", format!("{SRI2F_ACTION}{}", ask("scalar")), Background::Cosmological, Sector::Scalar),
        p("sRi2Ft", format!("{SRI2F_ACTION}{}", ask("tensor")), Background::Cosmological, Sector::Tensor),
    ]
}

/// The nine shipped problems, in registry order.
pub fn problems() -> &'static [Problem] {
    static REGISTRY: OnceLock<Vec<Problem>> = OnceLock::new();
    REGISTRY.get_or_init(build_registry)
}

pub fn get_problem(id: &str) -> Result<&'static Problem, ContextError> {
    problems()
        .iter()
        .find(|p| p.id == id)
        .ok_or_else(|| ContextError::UnknownProblem(id.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackDocument {
    pub title: String,
    pub body: String,
}

/// The in-context-learning payload: ordered documents plus an optional
/// pack-level preamble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPack {
    pub id: String,
    pub documents: Vec<PackDocument>,
    pub preamble: Option<String>,
    pub declared_token_size: Option<u64>,
}

/// Ids of the packs shipped with the harness, in report order.
pub const CANONICAL_PACK_IDS: [&str; 4] = ["10ex", "3broad", "3tailored", "instruction"];

#[derive(Debug, Deserialize)]
struct PackManifest {
    id: String,
    #[serde(default)]
    declared_token_size: Option<u64>,
    #[serde(default)]
    preamble_file: Option<String>,
    #[serde(default)]
    documents: Vec<ManifestDocument>,
}

#[derive(Debug, Deserialize)]
struct ManifestDocument {
    title: String,
    file: String,
    #[serde(default)]
    placeholder: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PackIssue {
    DocumentMissing(String),
    EncodingError(String),
    PreambleMissing(String),
    NoDocuments,
}

impl fmt::Display for PackIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PackIssue::DocumentMissing(title) => write!(f, "document missing: {title}"),
            PackIssue::EncodingError(file) => write!(f, "not valid UTF-8: {file}"),
            PackIssue::PreambleMissing(file) => write!(f, "preamble file missing: {file}"),
            PackIssue::NoDocuments => write!(f, "pack has no documents"),
        }
    }
}

#[derive(Debug, Error)]
pub enum PackError {
    #[error("manifest missing: {0}")]
    ManifestMissing(String),
    #[error("manifest unreadable: {0}")]
    ManifestInvalid(String),
    #[error("pack validation failed: {}", .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Validation(Vec<PackIssue>),
}

/// A pack plus non-fatal findings (placeholder documents and the like).
#[derive(Debug, Clone)]
pub struct LoadedPack {
    pub pack: ContextPack,
    pub warnings: Vec<String>,
}

/// Load a pack directory. Validation findings are collected across all
/// documents rather than failing on the first one.
pub fn load_pack(dir: &Path) -> Result<LoadedPack, PackError> {
    let manifest_path = dir.join("pack.toml");
    let manifest_text = std::fs::read_to_string(&manifest_path)
        .map_err(|_| PackError::ManifestMissing(manifest_path.display().to_string()))?;
    let manifest: PackManifest =
        toml::from_str(&manifest_text).map_err(|e| PackError::ManifestInvalid(e.to_string()))?;

    let mut issues = Vec::new();
    let mut warnings = Vec::new();
    let mut documents = Vec::new();
    let mut placeholders = Vec::new();

    if manifest.documents.is_empty() {
        issues.push(PackIssue::NoDocuments);
    }
    for entry in &manifest.documents {
        let path = dir.join(&entry.file);
        match std::fs::read(&path) {
            Err(_) => issues.push(PackIssue::DocumentMissing(entry.title.clone())),
            Ok(bytes) => match String::from_utf8(bytes) {
                Err(_) => issues.push(PackIssue::EncodingError(entry.file.clone())),
                Ok(body) => {
                    documents.push(PackDocument { title: entry.title.clone(), body });
                }
            },
        }
        if entry.placeholder {
            placeholders.push(entry.title.clone());
        }
    }

    let preamble = match &manifest.preamble_file {
        None => None,
        Some(file) => {
            let path = dir.join(file);
            match std::fs::read_to_string(&path) {
                Err(_) => {
                    issues.push(PackIssue::PreambleMissing(file.clone()));
                    None
                }
                Ok(text) => Some(text),
            }
        }
    };

    if !issues.is_empty() {
        return Err(PackError::Validation(issues));
    }
    if !placeholders.is_empty() {
        warnings.push(format!(
            "pack '{}' ships placeholder documents ({}); supply fully worked \
             examples to make runs comparable with the reference results",
            manifest.id,
            placeholders.join(", ")
        ));
    }

    Ok(LoadedPack {
        pack: ContextPack {
            id: manifest.id,
            documents,
            preamble,
            declared_token_size: manifest.declared_token_size,
        },
        warnings,
    })
}

/// Deterministic system-prompt layout: preamble, then each document under a
/// `=== title ===` header, blank lines between sections.
pub fn render_system_prompt(pack: &ContextPack) -> String {
    let mut sections: Vec<String> = Vec::new();
    if let Some(preamble) = &pack.preamble {
        if !preamble.is_empty() {
            sections.push(preamble.clone());
        }
    }
    for doc in &pack.documents {
        sections.push(format!("=== {} ===\n{}", doc.title, doc.body));
    }
    sections.join("\n\n")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    BytesDiv4,
    ProviderReported,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenEstimate {
    pub estimated_tokens: u64,
    pub method: EstimateMethod,
}

/// Cheap offline size estimate: ceil(bytes / 4). Reconcile with
/// [`TokenEstimate::provider_reported`] once a real usage number exists.
pub fn estimate_tokens(text: &str) -> TokenEstimate {
    TokenEstimate {
        estimated_tokens: (text.len() as u64).div_ceil(4),
        method: EstimateMethod::BytesDiv4,
    }
}

impl TokenEstimate {
    /// Post-hoc estimate from the first turn's reported input tokens.
    pub fn provider_reported(tokens: u64) -> Self {
        Self { estimated_tokens: tokens, method: EstimateMethod::ProviderReported }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_exactly_nine_problems_with_fixed_metadata() {
        let expected = [
            ("R2Fs", Background::Cosmological, Sector::Scalar),
            ("sRFs", Background::Cosmological, Sector::Scalar),
            ("sRFv", Background::Cosmological, Sector::Vector),
            ("sRFt", Background::Cosmological, Sector::Tensor),
            ("sRMs", Background::Flat, Sector::Scalar),
            ("sRMt", Background::Flat, Sector::Tensor),
            ("sRi2Ms", Background::Flat, Sector::Scalar),
            ("sRi2Fs", Background::Cosmological, Sector::Scalar),
            ("sRi2Ft", Background::Cosmological, Sector::Tensor),
        ];
        let all = problems();
        assert_eq!(all.len(), 9);
        for (problem, (id, background, sector)) in all.iter().zip(expected) {
            assert_eq!(problem.id, id);
            assert_eq!(problem.background, background);
            assert_eq!(problem.sector, sector);
        }
    }

    #[test]
    fn statements_are_plain_ascii_without_backslashes() {
        for problem in problems() {
            assert!(problem.statement.is_ascii(), "{} not ascii", problem.id);
            assert!(!problem.statement.contains('\\'), "{} has backslash", problem.id);
            assert!(!problem.statement.is_empty());
        }
    }

    #[test]
    fn r2fs_statement_is_the_published_plain_text() {
        let p = get_problem("R2Fs").unwrap();
        assert!(p
            .statement
            .starts_with("Consider Mp^2/2*R+beta*R^2 gravity on a cosmological background,"));
        assert!(p.statement.ends_with("you are not allowed to use the Einstein frame."));
    }

    #[test]
    fn srmt_is_flat_tensor() {
        let p = get_problem("sRMt").unwrap();
        assert_eq!(p.background, Background::Flat);
        assert_eq!(p.sector, Sector::Tensor);
        assert!(p.statement.contains("flat background"));
    }

    #[test]
    fn unknown_problem_is_an_error() {
        assert!(matches!(get_problem("xyz"), Err(ContextError::UnknownProblem(_))));
    }

    #[test]
    fn render_prompt_with_only_preamble_is_the_preamble() {
        let pack = ContextPack {
            id: "p".to_string(),
            documents: vec![],
            preamble: Some("P".to_string()),
            declared_token_size: None,
        };
        assert_eq!(render_system_prompt(&pack), "P");
    }

    #[test]
    fn render_prompt_is_deterministic_and_ordered() {
        let pack = ContextPack {
            id: "p".to_string(),
            documents: vec![
                PackDocument { title: "A".to_string(), body: "a".to_string() },
                PackDocument { title: "B".to_string(), body: "b".to_string() },
                PackDocument { title: "C".to_string(), body: "c".to_string() },
            ],
            preamble: None,
            declared_token_size: None,
        };
        let once = render_system_prompt(&pack);
        assert_eq!(once, render_system_prompt(&pack));
        let a = once.find("=== A ===").unwrap();
        let b = once.find("=== B ===").unwrap();
        let c = once.find("=== C ===").unwrap();
        assert!(a < b && b < c);
    }

    #[test]
    fn token_estimate_is_ceil_bytes_over_four() {
        assert_eq!(estimate_tokens(&"x".repeat(8000)).estimated_tokens, 2000);
        assert_eq!(estimate_tokens("").estimated_tokens, 0);
        assert_eq!(estimate_tokens("abc").estimated_tokens, 1);
        assert_eq!(estimate_tokens("abcde").estimated_tokens, 2);
    }

    #[test]
    fn estimator_is_monotone_in_length() {
        let mut last = 0;
        for n in 0..64 {
            let est = estimate_tokens(&"y".repeat(n)).estimated_tokens;
            assert!(est >= last);
            last = est;
        }
    }

    #[test]
    fn missing_manifest_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_pack(dir.path()), Err(PackError::ManifestMissing(_))));
    }

    #[test]
    fn validation_issues_are_collected_not_fail_fast() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("pack.toml"),
            r#"
id = "broken"
[[documents]]
title = "One"
file = "missing_one.txt"
[[documents]]
title = "Two"
file = "missing_two.txt"
"#,
        )
        .unwrap();
        match load_pack(dir.path()) {
            Err(PackError::Validation(issues)) => {
                assert_eq!(issues.len(), 2);
                assert!(issues
                    .iter()
                    .all(|i| matches!(i, PackIssue::DocumentMissing(_))));
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    #[test]
    fn placeholder_documents_produce_a_warning() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("doc.txt"), "body").unwrap();
        std::fs::write(
            dir.path().join("pack.toml"),
            r#"
id = "partial"
[[documents]]
title = "Doc"
file = "doc.txt"
placeholder = true
"#,
        )
        .unwrap();
        let loaded = load_pack(dir.path()).unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        assert!(loaded.warnings[0].contains("placeholder"));
    }
}
