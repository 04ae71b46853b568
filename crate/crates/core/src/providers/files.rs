//! On-disk contracts shared with the offline adapter.
//!
//! Layout under a data root:
//!
//! ```text
//! scores/<video_id>/<tool>-<sha256(query)[..16]>.json   score file v1
//! ocr/<video_id>.jsonl                                    OCR extractions
//! ```

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{OcrSource, Scorer};
use crate::error::{Error, Result};
use crate::ocr::OcrExtraction;
use crate::plan::ToolKind;
use crate::timeline::{frame_count, FrameTimeline, TIME_EPS};

pub const SCORE_FORMAT: &str = "scorefile/1";

/// Score file v1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub format: String,
    pub video_id: String,
    pub tool: ToolKind,
    pub query: String,
    pub fps: f64,
    pub duration_s: f64,
    pub scores: Vec<f64>,
}

impl ScoreFile {
    pub fn new(
        video_id: &str,
        tool: ToolKind,
        query: &str,
        timeline: &FrameTimeline,
        scores: Vec<f64>,
    ) -> Self {
        Self {
            format: SCORE_FORMAT.into(),
            video_id: video_id.into(),
            tool,
            query: query.into(),
            fps: timeline.fps,
            duration_s: timeline.duration_s,
            scores,
        }
    }

    /// Checks the schema and that the scores line up with `timeline`.
    pub fn validate(&self, timeline: &FrameTimeline) -> Result<()> {
        if self.format != SCORE_FORMAT {
            return Err(Error::Validation(format!(
                "unsupported score format {:?}",
                self.format
            )));
        }
        let expected = frame_count(self.duration_s, self.fps);
        if self.scores.len() != expected {
            return Err(Error::Validation(format!(
                "score file for {} has {} scores, grid for {} s at {} fps has {expected}",
                self.video_id,
                self.scores.len(),
                self.duration_s,
                self.fps
            )));
        }
        if (self.fps - timeline.fps).abs() > TIME_EPS
            || (self.duration_s - timeline.duration_s).abs() > TIME_EPS
        {
            return Err(Error::Validation(format!(
                "score file for {} was sampled at {} fps over {} s, run expects {} fps over {} s",
                self.video_id, self.fps, self.duration_s, timeline.fps, timeline.duration_s
            )));
        }
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite score for {}",
                self.video_id
            )));
        }
        Ok(())
    }
}

/// One line of an OCR extraction file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcrRecord {
    pub video_id: String,
    pub t: f64,
    pub text: String,
    pub conf: f64,
}

pub fn query_hash(query: &str) -> String {
    let digest = Sha256::digest(query.as_bytes());
    hex::encode(&digest[..8])
}

fn safe_component(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn score_path(root: &Path, video_id: &str, tool: ToolKind, query: &str) -> PathBuf {
    root.join("scores")
        .join(safe_component(video_id))
        .join(format!("{}-{}.json", tool.wire_name(), query_hash(query)))
}

pub fn ocr_path(root: &Path, video_id: &str) -> PathBuf {
    root.join("ocr")
        .join(format!("{}.jsonl", safe_component(video_id)))
}

/// Writes `contents` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn write_score_file(root: &Path, file: &ScoreFile) -> Result<PathBuf> {
    let path = score_path(root, &file.video_id, file.tool, &file.query);
    write_atomic(&path, serde_json::to_string(file)?.as_bytes())?;
    Ok(path)
}

pub fn read_score_file(path: &Path) -> Result<ScoreFile> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingData {
            path: path.to_path_buf(),
            message: "score file not found".into(),
        },
        _ => Error::io(path, e),
    })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_ocr_file(root: &Path, video_id: &str, records: &[OcrRecord]) -> Result<PathBuf> {
    let path = ocr_path(root, video_id);
    let mut sorted = records.to_vec();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut body = String::new();
    for r in &sorted {
        body.push_str(&serde_json::to_string(r)?);
        body.push('\n');
    }
    write_atomic(&path, body.as_bytes())?;
    Ok(path)
}

/// Reads an OCR extraction file, mapping each timestamp to its nearest frame.
pub fn read_ocr_file(path: &Path, timeline: &FrameTimeline) -> Result<Vec<OcrExtraction>> {
    let f = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingData {
            path: path.to_path_buf(),
            message: "OCR extraction file not found".into(),
        },
        _ => Error::io(path, e),
    })?;
    let mut out = Vec::new();
    for (lineno, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: OcrRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Validation(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        if rec.video_id != timeline.video_id {
            return Err(Error::Validation(format!(
                "{}:{}: record for video {} in file for {}",
                path.display(),
                lineno + 1,
                rec.video_id,
                timeline.video_id
            )));
        }
        if !(rec.t.is_finite() && rec.t >= 0.0 && rec.t <= timeline.duration_s + TIME_EPS) {
            return Err(Error::Validation(format!(
                "{}:{}: timestamp {} outside video",
                path.display(),
                lineno + 1,
                rec.t
            )));
        }
        if rec.text.trim().is_empty() {
            continue;
        }
        out.push(OcrExtraction {
            frame_index: timeline.nearest_frame(rec.t),
            text: rec.text,
            confidence: rec.conf,
        });
    }
    out.sort_by_key(|e| e.frame_index);
    Ok(out)
}

/// Scores read from precomputed score files.
#[derive(Debug, Clone)]
pub struct FileScorer {
    root: PathBuf,
}

impl FileScorer {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl Scorer for FileScorer {
    fn score(
        &self,
        video_id: &str,
        tool: ToolKind,
        query: &str,
        timeline: &FrameTimeline,
    ) -> Result<Vec<f64>> {
        let path = score_path(&self.root, video_id, tool, query);
        let file = read_score_file(&path)?;
        if file.video_id != video_id || file.tool != tool || file.query != query {
            return Err(Error::Validation(format!(
                "{} holds scores for ({}, {}, {:?})",
                path.display(),
                file.video_id,
                file.tool,
                file.query
            )));
        }
        file.validate(timeline)?;
        Ok(file.scores)
    }
}

#[derive(Debug, Clone)]
pub struct FileOcrSource {
    root: PathBuf,
}

impl FileOcrSource {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
}

impl OcrSource for FileOcrSource {
    fn extractions(&self, video_id: &str, timeline: &FrameTimeline) -> Result<Vec<OcrExtraction>> {
        read_ocr_file(&ocr_path(&self.root, video_id), timeline)
    }
}
