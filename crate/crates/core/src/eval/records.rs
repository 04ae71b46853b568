//! Question and caption datasets.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plan::Plan;
use crate::providers::files::write_atomic;
use crate::timeline::EvidenceInterval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    #[default]
    Test,
}

/// One line of a questions file: a five-option multiple-choice question
/// anchored to a ground-truth interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub video_id: String,
    pub duration_s: f64,
    pub question: String,
    pub options: BTreeMap<String, String>,
    pub answer: String,
    pub gt_start_s: f64,
    pub gt_end_s: f64,
    #[serde(default)]
    pub split: Split,
}

/// One line of a captions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub caption_id: String,
    pub video_id: String,
    pub duration_s: f64,
    pub caption: String,
    pub gt_start_s: f64,
    pub gt_end_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetRecord {
    Question(QuestionRecord),
    Caption(CaptionRecord),
}

/// A query in the form the engine runs on, for questions and captions alike.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryItem {
    pub id: String,
    pub video_id: String,
    pub duration_s: f64,
    pub text: String,
    /// Five options for questions, empty for captions.
    pub options: Vec<String>,
    pub answer: Option<char>,
    pub interval: EvidenceInterval,
}

impl QueryItem {
    /// Question followed by its lettered options: the single-query baseline's
    /// query and the planner fallback.
    pub fn concatenated_query(&self) -> String {
        if self.options.is_empty() {
            return self.text.clone();
        }
        let opts: Vec<String> = self
            .options
            .iter()
            .zip('A'..='E')
            .map(|(o, l)| format!("{l}) {o}"))
            .collect();
        format!("{} {}", self.text, opts.join(" "))
    }

    pub fn fallback_plan(&self) -> Plan {
        Plan::single_scene(self.concatenated_query())
    }
}

fn check_common(
    id: &str,
    video_id: &str,
    duration_s: f64,
    text: &str,
    iv: &EvidenceInterval,
) -> Result<()> {
    if id.is_empty() || video_id.is_empty() {
        return Err(Error::Validation("record ids must be non-empty".into()));
    }
    if !(duration_s.is_finite() && duration_s > 0.0) {
        return Err(Error::Validation(format!(
            "{id}: duration must be positive"
        )));
    }
    if text.trim().is_empty() {
        return Err(Error::Validation(format!("{id}: empty query text")));
    }
    iv.validate_within(duration_s)
        .map_err(|e| Error::Validation(format!("{id}: {e}")))
}

impl QuestionRecord {
    pub fn interval(&self) -> EvidenceInterval {
        EvidenceInterval {
            start_s: self.gt_start_s,
            end_s: self.gt_end_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_common(
            &self.question_id,
            &self.video_id,
            self.duration_s,
            &self.question,
            &self.interval(),
        )?;
        let letters: Vec<&str> = self.options.keys().map(String::as_str).collect();
        if letters != ["A", "B", "C", "D", "E"] {
            return Err(Error::Validation(format!(
                "{}: options must be exactly A-E, got {letters:?}",
                self.question_id
            )));
        }
        if !self.options.contains_key(self.answer.as_str()) {
            return Err(Error::Validation(format!(
                "{}: answer {:?} is not an option letter",
                self.question_id, self.answer
            )));
        }
        Ok(())
    }

    pub fn to_item(&self) -> Result<QueryItem> {
        self.validate()?;
        Ok(QueryItem {
            id: self.question_id.clone(),
            video_id: self.video_id.clone(),
            duration_s: self.duration_s,
            text: self.question.clone(),
            options: self.options.values().cloned().collect(),
            answer: self.answer.chars().next(),
            interval: self.interval(),
        })
    }
}

impl CaptionRecord {
    pub fn interval(&self) -> EvidenceInterval {
        EvidenceInterval {
            start_s: self.gt_start_s,
            end_s: self.gt_end_s,
        }
    }

    pub fn to_item(&self) -> Result<QueryItem> {
        check_common(
            &self.caption_id,
            &self.video_id,
            self.duration_s,
            &self.caption,
            &self.interval(),
        )?;
        Ok(QueryItem {
            id: self.caption_id.clone(),
            video_id: self.video_id.clone(),
            duration_s: self.duration_s,
            text: self.caption.clone(),
            options: Vec::new(),
            answer: None,
            interval: self.interval(),
        })
    }
}

impl DatasetRecord {
    pub fn to_item(&self) -> Result<QueryItem> {
        match self {
            DatasetRecord::Question(q) => q.to_item(),
            DatasetRecord::Caption(c) => c.to_item(),
        }
    }
}

/// Reads a JSON Lines file of serde records, skipping blank lines.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingData {
            path: path.to_path_buf(),
            message: "file not found".into(),
        },
        _ => Error::io(path, e),
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Validation(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut body = String::new();
    for it in items {
        body.push_str(&serde_json::to_string(it)?);
        body.push('\n');
    }
    write_atomic(path, body.as_bytes())
}

/// Loads a questions or captions file; ids must be unique.
pub fn read_dataset(path: &Path) -> Result<Vec<QueryItem>> {
    let records: Vec<DatasetRecord> = read_jsonl(path)?;
    let items = records
        .iter()
        .map(DatasetRecord::to_item)
        .collect::<Result<Vec<_>>>()?;
    let mut seen = std::collections::HashSet::new();
    for it in &items {
        if !seen.insert(it.id.as_str()) {
            return Err(Error::Validation(format!("duplicate record id {}", it.id)));
        }
    }
    Ok(items)
}
