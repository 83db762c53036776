//! Dataset interchange (JSONL), validation and the planted benchmark.

mod planted;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::searchenv::{Corpus, SearchError};

pub use planted::{make_planted_benchmark, AnswerKeyEntry, PlantedBenchmark, PlantedConfig};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineProblem {
    Parse(String),
    DanglingReference { claim_id: String, doc_id: String },
    DuplicateId(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineError {
    pub path: String,
    pub line: usize,
    pub problem: LineProblem,
}

impl std::fmt::Display for LineError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match &self.problem {
            LineProblem::Parse(m) => write!(f, "{}:{}: parse error: {m}", self.path, self.line),
            LineProblem::DanglingReference { claim_id, doc_id } => write!(
                f,
                "{}:{}: claim {claim_id:?} references unknown doc {doc_id:?}",
                self.path, self.line
            ),
            LineProblem::DuplicateId(id) => write!(f, "{}:{}: duplicate id {id:?}", self.path, self.line),
        }
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{}", format_report(.0))]
    Invalid(Vec<LineError>),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn format_report(errors: &[LineError]) -> String {
    let mut s = format!("{} invalid line(s)", errors.len());
    for e in errors.iter().take(20) {
        s.push_str("\n  ");
        s.push_str(&e.to_string());
    }
    s
}

impl IngestError {
    pub fn line_errors(&self) -> &[LineError] {
        match self {
            IngestError::Invalid(v) => v,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "supports", alias = "SUPPORTS", alias = "Supports")]
    Supports,
    #[serde(rename = "refutes", alias = "REFUTES", alias = "Refutes")]
    Refutes,
    #[serde(
        rename = "notenoughinfo",
        alias = "NotEnoughInfo",
        alias = "NOT ENOUGH INFO",
        alias = "not enough info",
        alias = "nei"
    )]
    NotEnoughInfo,
}

/// One line of the claims/relevance file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim_id: String,
    pub claim: String,
    pub relevant_doc_ids: Vec<String>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct DocLine {
    doc_id: String,
    text: String,
}

/// Loaded claims and corpus with relevance attached.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub claims: Vec<ClaimRecord>,
    pub corpus: Corpus,
    pub dropped_not_enough_info: usize,
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path).map(BufReader::new).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, IngestError> {
    File::create(path).map(BufWriter::new).map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// Parses JSONL, skipping blank lines. Every other line yields a value or an error.
fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, Result<T, String>)>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| IngestError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push((i + 1, serde_json::from_str(&line).map_err(|e| e.to_string())));
    }
    Ok(out)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, IngestError> {
    let path = path.as_ref();
    let mut corpus = Corpus::new();
    let mut errors = Vec::new();
    for (line, rec) in read_jsonl::<DocLine>(path)? {
        let problem = match rec {
            Ok(d) => match corpus.add_doc(d.doc_id, d.text) {
                Ok(()) => continue,
                Err(SearchError::DuplicateDoc(id)) => LineProblem::DuplicateId(id),
                Err(e) => LineProblem::Parse(e.to_string()),
            },
            Err(m) => LineProblem::Parse(m),
        };
        errors.push(LineError {
            path: path.display().to_string(),
            line,
            problem,
        });
    }
    if errors.is_empty() {
        Ok(corpus)
    } else {
        Err(IngestError::Invalid(errors))
    }
}

/// Claims file without corpus validation; `NotEnoughInfo` claims are kept.
pub fn load_claims(path: impl AsRef<Path>) -> Result<Vec<ClaimRecord>, IngestError> {
    let path = path.as_ref();
    let mut claims = Vec::new();
    let mut errors = Vec::new();
    for (line, rec) in read_jsonl::<ClaimRecord>(path)? {
        match rec {
            Ok(c) => claims.push(c),
            Err(m) => errors.push(LineError {
                path: path.display().to_string(),
                line,
                problem: LineProblem::Parse(m),
            }),
        }
    }
    if errors.is_empty() {
        Ok(claims)
    } else {
        Err(IngestError::Invalid(errors))
    }
}

/// Loads both files, drops `NotEnoughInfo` claims and attaches relevance.
pub fn load_dataset(claims_path: impl AsRef<Path>, corpus_path: impl AsRef<Path>) -> Result<Dataset, IngestError> {
    let claims_path = claims_path.as_ref();
    let mut corpus = load_corpus(corpus_path)?;
    let mut errors = Vec::new();
    let mut claims = Vec::new();
    let mut dropped = 0usize;
    let mut seen = std::collections::HashSet::new();
    for (line, rec) in read_jsonl::<ClaimRecord>(claims_path)? {
        let err = |problem| LineError {
            path: claims_path.display().to_string(),
            line,
            problem,
        };
        let c = match rec {
            Ok(c) => c,
            Err(m) => {
                errors.push(err(LineProblem::Parse(m)));
                continue;
            }
        };
        if c.label == Label::NotEnoughInfo {
            dropped += 1;
            continue;
        }
        if !seen.insert(c.claim_id.clone()) {
            errors.push(err(LineProblem::DuplicateId(c.claim_id)));
            continue;
        }
        match corpus.set_relevance(&c.claim_id, c.relevant_doc_ids.iter().cloned()) {
            Ok(()) => claims.push(c),
            Err(SearchError::DanglingReference { claim_id, doc_id }) => {
                errors.push(err(LineProblem::DanglingReference { claim_id, doc_id }))
            }
            Err(e) => errors.push(err(LineProblem::Parse(e.to_string()))),
        }
    }
    if !errors.is_empty() {
        return Err(IngestError::Invalid(errors));
    }
    log::info!(
        "loaded {} claims ({} NotEnoughInfo dropped) over {} documents",
        claims.len(),
        dropped,
        corpus.len()
    );
    Ok(Dataset {
        claims,
        corpus,
        dropped_not_enough_info: dropped,
    })
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for d in corpus.docs() {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n").map_err(|e| IngestError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
    }
    w.flush().map_err(|e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn save_jsonl<T: Serialize>(items: &[T], path: impl AsRef<Path>) -> Result<(), IngestError> {
    let path = path.as_ref();
    let io = |e| IngestError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_claims(claims: &[ClaimRecord], path: impl AsRef<Path>) -> Result<(), IngestError> {
    save_jsonl(claims, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    const CORPUS: &str = r#"{"doc_id": "d1", "text": "the cat sat"}
{"doc_id": "d2", "text": "dogs bark"}
"#;

    #[test]
    fn drops_not_enough_info() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = write(dir.path(), "corpus.jsonl", CORPUS);
        let claims = write(
            dir.path(),
            "claims.jsonl",
            r#"{"claim_id": "c1", "claim": "cats sit", "relevant_doc_ids": ["d1"], "label": "supports"}
{"claim_id": "c2", "claim": "nobody knows", "relevant_doc_ids": [], "label": "NotEnoughInfo"}
{"claim_id": "c3", "claim": "dogs are quiet", "relevant_doc_ids": ["d2"], "label": "refutes"}
"#,
        );
        let ds = load_dataset(&claims, &corpus).unwrap();
        let ids: Vec<&str> = ds.claims.iter().map(|c| c.claim_id.as_str()).collect();
        assert_eq!(ids, ["c1", "c3"]);
        assert_eq!(ds.dropped_not_enough_info, 1);
        assert!(ds.corpus.relevant("c2").is_none());
    }

    #[test]
    fn dangling_reference_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = write(dir.path(), "corpus.jsonl", CORPUS);
        let claims = write(
            dir.path(),
            "claims.jsonl",
            "\n{\"claim_id\": \"c1\", \"claim\": \"x\", \"relevant_doc_ids\": [\"d9\"], \"label\": \"supports\"}\nnot json\n",
        );
        let err = load_dataset(&claims, &corpus).unwrap_err();
        let lines = err.line_errors();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0].line, 2);
        assert_eq!(
            lines[0].problem,
            LineProblem::DanglingReference {
                claim_id: "c1".into(),
                doc_id: "d9".into()
            }
        );
        assert_eq!(lines[1].line, 3);
        assert!(matches!(lines[1].problem, LineProblem::Parse(_)));
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut corpus = Corpus::new();
        corpus.add_doc("a", "alpha \"quoted\" text").unwrap();
        corpus.add_doc("b", "beta").unwrap();
        let claims = vec![ClaimRecord {
            claim_id: "c".into(),
            claim: "alpha?".into(),
            relevant_doc_ids: vec!["a".into()],
            label: Label::Refutes,
        }];
        corpus.set_relevance("c", ["a"]).unwrap();
        save_corpus(&corpus, dir.path().join("corpus.jsonl")).unwrap();
        save_claims(&claims, dir.path().join("claims.jsonl")).unwrap();
        let ds = load_dataset(dir.path().join("claims.jsonl"), dir.path().join("corpus.jsonl")).unwrap();
        assert_eq!(ds.claims, claims);
        assert_eq!(ds.corpus, corpus);
    }

    #[test]
    fn duplicate_doc_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = write(
            dir.path(),
            "corpus.jsonl",
            "{\"doc_id\": \"d\", \"text\": \"a\"}\n{\"doc_id\": \"d\", \"text\": \"b\"}\n",
        );
        let err = load_corpus(&corpus).unwrap_err();
        assert_eq!(err.line_errors()[0].problem, LineProblem::DuplicateId("d".into()));
    }
}
