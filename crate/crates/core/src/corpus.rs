//! Study-record ingestion, seeded splits, and instruction-prompt rendering.
//!
//! A study record carries an identifier, a reference report, and confidence
//! scores for 18 thoracic conditions from up to two X-ray views. Records
//! travel as line-delimited JSON, one object per line:
//!
//! ```json
//! {"id":"s1","frontal":[0.1, ...18 values...],"lateral":null,"report":"..."}
//! ```
//!
//! Prompts follow the instruction/input/response convention: the input
//! block lists `frontal:` then `lateral:`, each view rendering one
//! `<label>: <score>` line per condition at four decimal places, or the
//! single line `view absent`. Inference prompts keep the response empty.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of condition scores per view.
pub const SCORE_COUNT: usize = 18;

/// The 18 condition labels, in canonical rendering order.
pub const CONDITION_LABELS: [&str; SCORE_COUNT] = [
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Effusion",
    "Emphysema",
    "Enlarged Cardiomediastinum",
    "Fibrosis",
    "Fracture",
    "Hernia",
    "Infiltration",
    "Lung Lesion",
    "Lung Opacity",
    "Mass",
    "Nodule",
    "Pleural Thickening",
    "Pneumonia",
    "Pneumothorax",
];

/// Versioned instruction text used for every rendered prompt. Changing the
/// wording is a format change; bump the suffix.
pub const PROMPT_INSTRUCTION_V1: &str = "You are a radiology reporting assistant. The input \
lists classifier confidence scores between 0 and 1 for 18 thoracic conditions, from the \
frontal and lateral chest X-ray views of one study. Write the findings section of the \
radiology report for this study.";

/// Rendered placeholder for a missing view.
pub const VIEW_ABSENT: &str = "view absent";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("corpus validation failed ({} issue(s)):\n{}", .0.len(), format_issues(.0))]
    Invalid(Vec<LineIssue>),
    #[error("prompt parse error: {0}")]
    PromptParse(String),
}

/// One validation failure, pinned to its 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LineIssue {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

fn format_issues(issues: &[LineIssue]) -> String {
    issues
        .iter()
        .map(LineIssue::to_string)
        .collect::<Vec<_>>()
        .join("\n")
}

/// One patient study: scores per available view plus the reference report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub id: String,
    #[serde(default)]
    pub frontal: Option<Vec<f64>>,
    #[serde(default)]
    pub lateral: Option<Vec<f64>>,
    pub report: String,
}

impl StudyRecord {
    /// Violation messages for this record; empty means valid.
    pub fn validation_issues(&self) -> Vec<String> {
        let mut issues = Vec::new();
        if self.frontal.is_none() && self.lateral.is_none() {
            issues.push("record has no views; at least one of frontal/lateral required".into());
        }
        for (view, scores) in [("frontal", &self.frontal), ("lateral", &self.lateral)] {
            if let Some(scores) = scores {
                if scores.len() != SCORE_COUNT {
                    issues.push(format!(
                        "{view} has {} scores, expected {SCORE_COUNT}",
                        scores.len()
                    ));
                }
                for (i, &s) in scores.iter().enumerate() {
                    if !s.is_finite() {
                        issues.push(format!("{view} score {i} is not finite"));
                    } else if !(0.0..=1.0).contains(&s) {
                        issues.push(format!("{view} score {i} out of range: {s}"));
                    }
                }
            }
        }
        issues
    }
}

/// Reads and validates a line-delimited corpus.
///
/// Every violation is collected with its line number before the call fails;
/// blank lines are skipped. Duplicate identifiers are rejected because the
/// split assignment keys partitions by id. An empty file is an empty corpus.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<StudyRecord>, CorpusError> {
    let mut records = Vec::new();
    let mut issues = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<StudyRecord>(&line) {
            Ok(record) => {
                for message in record.validation_issues() {
                    issues.push(LineIssue {
                        line: line_no,
                        message,
                    });
                }
                if !seen_ids.insert(record.id.clone()) {
                    issues.push(LineIssue {
                        line: line_no,
                        message: format!("duplicate id {:?}", record.id),
                    });
                }
                records.push(record);
            }
            Err(e) => issues.push(LineIssue {
                line: line_no,
                message: format!("malformed record: {e}"),
            }),
        }
    }
    if issues.is_empty() {
        Ok(records)
    } else {
        Err(CorpusError::Invalid(issues))
    }
}

pub fn load_corpus(path: &Path) -> Result<Vec<StudyRecord>, CorpusError> {
    let file = std::fs::File::open(path)?;
    read_corpus(BufReader::new(file))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Val,
    Test,
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Val => "val",
            Partition::Test => "test",
        })
    }
}

/// Deterministic 70/10/20 partition of record ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitAssignment {
    pub fn partition_of(&self, id: &str) -> Option<Partition> {
        self.index().get(id).copied()
    }

    pub fn ids(&self, partition: Partition) -> &[String] {
        match partition {
            Partition::Train => &self.train,
            Partition::Val => &self.val,
            Partition::Test => &self.test,
        }
    }

    fn index(&self) -> HashMap<&str, Partition> {
        let mut map = HashMap::new();
        for (ids, partition) in [
            (&self.train, Partition::Train),
            (&self.val, Partition::Val),
            (&self.test, Partition::Test),
        ] {
            for id in ids {
                map.insert(id.as_str(), partition);
            }
        }
        map
    }
}

/// Splits the corpus 70/10/20 with a seeded shuffle.
///
/// Counts are `floor(0.7 n)` train and `floor(0.1 n)` validation, with the
/// remainder assigned to test. The shuffle is keyed only by the seed, so a
/// fixed (corpus, seed) pair always produces the same assignment.
pub fn split(corpus: &[StudyRecord], seed: u64) -> SplitAssignment {
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let n = corpus.len();
    let train_n = (n as f64 * 0.7).floor() as usize;
    let val_n = (n as f64 * 0.1).floor() as usize;
    let id_at = |i: &usize| corpus[*i].id.clone();
    SplitAssignment {
        seed,
        train: order[..train_n].iter().map(id_at).collect(),
        val: order[train_n..train_n + val_n].iter().map(id_at).collect(),
        test: order[train_n + val_n..].iter().map(id_at).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptMode {
    /// Response carries the reference report.
    Train,
    /// Response left empty for the model to fill in.
    Infer,
}

/// Instruction-tuning record: instruction, rendered score block, response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub instruction: String,
    pub input: String,
    pub response: String,
}

/// Renders one study into a prompt record.
///
/// `labels` must have one entry per score; the canonical caller passes
/// [`CONDITION_LABELS`]. Scores render at four decimal places. A missing
/// view renders as the line `view absent` under its header, keeping "no
/// image" distinct from a vector of confident negatives.
pub fn render_prompt(record: &StudyRecord, labels: &[&str], mode: PromptMode) -> PromptRecord {
    assert_eq!(labels.len(), SCORE_COUNT, "expected {SCORE_COUNT} labels");
    let mut input = String::new();
    for (header, scores) in [("frontal", &record.frontal), ("lateral", &record.lateral)] {
        input.push_str(header);
        input.push_str(":\n");
        match scores {
            Some(scores) => {
                for (label, score) in labels.iter().zip(scores) {
                    input.push_str(&format!("{label}: {score:.4}\n"));
                }
            }
            None => {
                input.push_str(VIEW_ABSENT);
                input.push('\n');
            }
        }
    }
    input.pop(); // drop the trailing newline
    PromptRecord {
        instruction: PROMPT_INSTRUCTION_V1.to_string(),
        input,
        response: match mode {
            PromptMode::Train => record.report.clone(),
            PromptMode::Infer => String::new(),
        },
    }
}

/// Recovers per-view score vectors from a rendered prompt input block.
pub fn parse_prompt_input(
    input: &str,
) -> Result<(Option<Vec<f64>>, Option<Vec<f64>>), CorpusError> {
    let mut sections: Vec<(bool, Vec<&str>)> = Vec::new(); // (is_frontal, lines)
    for line in input.lines() {
        match line {
            "frontal:" => sections.push((true, Vec::new())),
            "lateral:" => sections.push((false, Vec::new())),
            _ => sections
                .last_mut()
                .ok_or_else(|| {
                    CorpusError::PromptParse("score line before any view header".into())
                })?
                .1
                .push(line),
        }
    }
    let mut frontal = None;
    let mut lateral = None;
    for (is_frontal, lines) in sections {
        let view = if is_frontal { "frontal" } else { "lateral" };
        let parsed = if lines.as_slice() == [VIEW_ABSENT] {
            None
        } else {
            let mut scores = Vec::with_capacity(lines.len());
            for line in &lines {
                let (_, value) = line.rsplit_once(": ").ok_or_else(|| {
                    CorpusError::PromptParse(format!("unparseable line {line:?}"))
                })?;
                scores.push(value.parse::<f64>().map_err(|e| {
                    CorpusError::PromptParse(format!("bad score in {line:?}: {e}"))
                })?);
            }
            if scores.len() != SCORE_COUNT {
                return Err(CorpusError::PromptParse(format!(
                    "view {view} has {} scores, expected {SCORE_COUNT}",
                    scores.len()
                )));
            }
            Some(scores)
        };
        if is_frontal {
            frontal = parsed;
        } else {
            lateral = parsed;
        }
    }
    Ok((frontal, lateral))
}

/// Writes prompt records for one partition as line-delimited JSON, in
/// corpus order. Returns the number of records written.
pub fn write_prompts<W: Write>(
    corpus: &[StudyRecord],
    assignment: &SplitAssignment,
    partition: Partition,
    mode: PromptMode,
    labels: &[&str],
    mut out: W,
) -> Result<usize, CorpusError> {
    let mut written = 0;
    for record in corpus {
        if assignment.partition_of(&record.id) != Some(partition) {
            continue;
        }
        let prompt = render_prompt(record, labels, mode);
        let line = serde_json::to_string(&prompt)
            .expect("prompt records always serialize");
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        written += 1;
    }
    Ok(written)
}

pub fn export_prompts(
    corpus: &[StudyRecord],
    assignment: &SplitAssignment,
    partition: Partition,
    mode: PromptMode,
    path: &Path,
) -> Result<usize, CorpusError> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    let count = write_prompts(
        corpus,
        assignment,
        partition,
        mode,
        &CONDITION_LABELS,
        &mut writer,
    )?;
    writer.flush()?;
    Ok(count)
}
