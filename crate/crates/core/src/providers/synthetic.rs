//! Seeded planted-evidence backend.
//!
//! Every score is `signal + noise`, where the signal is a per-call constant
//! inside the evidence interval (or nowhere) and the noise is a standard
//! normal drawn from a generator keyed by `(seed, call key, frame index)`.
//! Values therefore do not depend on evaluation order or parallelism.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::planner::PlanSource;
use super::{OcrSource, Scorer};
use crate::error::{Error, Result};
use crate::eval::{QueryItem, QuestionRecord, Split};
use crate::merge::ScoreVector;
use crate::ocr::OcrExtraction;
use crate::plan::{format_plan, Plan, ToolCall, ToolKind};
use crate::timeline::{EvidenceInterval, FrameTimeline};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CallSignal {
    /// Signal strength added inside the interval.
    pub mu: f64,
    pub present_in_interval: bool,
}

/// One planted-evidence video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub duration_s: f64,
    pub fps: f64,
    pub evidence_interval: EvidenceInterval,
    pub signal_by_call: BTreeMap<String, CallSignal>,
    pub noise_sigma: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        self.evidence_interval.validate_within(self.duration_s)?;
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid(
                "noise_sigma must be finite and non-negative",
            ));
        }
        if self.signal_by_call.values().any(|s| !s.mu.is_finite()) {
            return Err(Error::invalid("signal strength must be finite"));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn keyed_rng(seed: u64, key: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(fnv1a(key))))
}

/// Standard-normal draws for frames `0..n` under `(seed, key)`. Draw `i`
/// depends only on `(seed, key, i)`.
pub fn keyed_normals(seed: u64, key: &str, n: usize) -> Vec<f64> {
    let base = keyed_rng(seed, key);
    (0..n)
        .map(|i| {
            let mut rng = base.clone();
            rng.set_stream(i as u64);
            rng.set_word_pos(0);
            rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

/// Planted scores for one call over a timeline.
pub fn planted_scores(
    seed: u64,
    key: &str,
    signal: CallSignal,
    interval: &EvidenceInterval,
    timeline: &FrameTimeline,
    noise_sigma: f64,
) -> Vec<f64> {
    let noise = if noise_sigma > 0.0 {
        keyed_normals(seed, key, timeline.len())
    } else {
        vec![0.0; timeline.len()]
    };
    timeline
        .timestamps()
        .iter()
        .zip(noise)
        .map(|(&t, z)| {
            let base = if signal.present_in_interval && interval.contains(t) {
                signal.mu
            } else {
                0.0
            };
            base + noise_sigma * z
        })
        .collect()
}

/// Generates the timeline and one score vector per call.
pub fn synth_generate(
    spec: &SyntheticSpec,
) -> Result<(
    FrameTimeline,
    BTreeMap<String, ScoreVector>,
    EvidenceInterval,
)> {
    spec.validate()?;
    let video_id = format!("synth-{}", spec.seed);
    let timeline = FrameTimeline::build(&video_id, spec.duration_s, spec.fps)?;
    let vectors = spec
        .signal_by_call
        .iter()
        .map(|(id, &signal)| {
            let scores = planted_scores(
                spec.seed,
                id,
                signal,
                &spec.evidence_interval,
                &timeline,
                spec.noise_sigma,
            );
            (id.clone(), ScoreVector::new(id, &video_id, scores))
        })
        .collect();
    Ok((timeline, vectors, spec.evidence_interval))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthCall {
    pub id: String,
    pub tool: ToolKind,
    pub query: String,
    pub mu: f64,
    pub present_in_interval: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthOcr {
    pub text: String,
    pub times_s: Vec<f64>,
    /// When true, `times_s` are offsets from each video's interval start.
    #[serde(default = "default_true")]
    pub relative_to_interval: bool,
    #[serde(default = "default_conf")]
    pub conf: f64,
}

fn default_true() -> bool {
    true
}

fn default_conf() -> f64 {
    0.95
}

/// A planted-evidence dataset: many videos sharing one plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthDatasetSpec {
    pub seed: u64,
    pub videos: usize,
    pub duration_s: f64,
    pub fps: f64,
    pub interval_s: f64,
    pub noise_sigma: f64,
    pub calls: Vec<SynthCall>,
    pub combine: String,
    /// Signal for any query that is not one of `calls`, such as the
    /// concatenated question used by the single-query baseline.
    #[serde(default)]
    pub question_signal: CallSignal,
    #[serde(default)]
    pub question: Option<String>,
    #[serde(default)]
    pub ocr: Option<SynthOcr>,
}

/// Per-video quantities derived from a dataset spec.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthVideo {
    pub index: usize,
    pub video_id: String,
    pub question_id: String,
    pub seed: u64,
    pub interval: EvidenceInterval,
    pub answer: char,
}

const OPTION_TEXTS: [&str; 5] = ["red", "blue", "green", "yellow", "white"];

impl SynthDatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.videos == 0 {
            return Err(Error::invalid("dataset needs at least one video"));
        }
        if !(self.interval_s > 0.0 && self.interval_s < self.duration_s) {
            return Err(Error::invalid("interval_s must lie in (0, duration_s)"));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::invalid(
                "noise_sigma must be finite and non-negative",
            ));
        }
        FrameTimeline::build("check", self.duration_s, self.fps)?;
        self.plan()?;
        Ok(())
    }

    pub fn plan(&self) -> Result<Plan> {
        let calls = self
            .calls
            .iter()
            .map(|c| ToolCall {
                id: c.id.clone(),
                tool: c.tool,
                query: c.query.clone(),
            })
            .collect();
        Plan::new(calls, &self.combine, String::new())
    }

    /// Planner output for every synthetic question: a short preamble and the
    /// plan in a fenced block.
    pub fn raw_plan(&self) -> Result<String> {
        Ok(format!(
            "Planted-evidence plan.\n```json\n{}\n```\n",
            format_plan(&self.plan()?)
        ))
    }

    pub fn video(&self, index: usize) -> SynthVideo {
        let mut rng = keyed_rng(self.seed, &format!("video/{index}"));
        let start = rng.random::<f64>() * (self.duration_s - self.interval_s);
        let answer = (b'A' + rng.random_range(0..5u8)) as char;
        SynthVideo {
            index,
            video_id: format!("synth-{index:04}"),
            question_id: format!("synth-q{index:04}"),
            seed: splitmix64(self.seed.wrapping_add(index as u64)),
            interval: EvidenceInterval {
                start_s: start,
                end_s: start + self.interval_s,
            },
            answer,
        }
    }

    pub fn videos(&self) -> impl Iterator<Item = SynthVideo> + '_ {
        (0..self.videos).map(|i| self.video(i))
    }

    pub fn question_text(&self) -> String {
        self.question.clone().unwrap_or_else(|| {
            let qs: Vec<&str> = self.calls.iter().map(|c| c.query.as_str()).collect();
            format!(
                "What color is visible in the scene with {}?",
                qs.join(" and ")
            )
        })
    }

    pub fn record(&self, v: &SynthVideo) -> QuestionRecord {
        QuestionRecord {
            question_id: v.question_id.clone(),
            video_id: v.video_id.clone(),
            duration_s: self.duration_s,
            question: self.question_text(),
            options: ('A'..='E')
                .zip(OPTION_TEXTS)
                .map(|(l, t)| (l.to_string(), t.to_string()))
                .collect(),
            answer: v.answer.to_string(),
            gt_start_s: v.interval.start_s,
            gt_end_s: v.interval.end_s,
            split: Split::Test,
        }
    }

    pub fn records(&self) -> Vec<QuestionRecord> {
        self.videos().map(|v| self.record(&v)).collect()
    }

    fn ocr_for(&self, v: &SynthVideo, timeline: &FrameTimeline) -> Vec<(f64, String, f64)> {
        let Some(ocr) = &self.ocr else {
            return Vec::new();
        };
        let mut out: Vec<(f64, String, f64)> = ocr
            .times_s
            .iter()
            .map(|&t| {
                if ocr.relative_to_interval {
                    v.interval.start_s + t
                } else {
                    t
                }
            })
            .filter(|&t| t >= 0.0 && t <= self.duration_s)
            .map(|t| {
                (
                    timeline.time_of(timeline.nearest_frame(t)),
                    ocr.text.clone(),
                    ocr.conf,
                )
            })
            .collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

/// Scorer, OCR source and planner for a synthetic dataset.
#[derive(Debug, Clone)]
pub struct SyntheticProvider {
    spec: SynthDatasetSpec,
    by_video: HashMap<String, SynthVideo>,
    raw_plan: String,
}

impl SyntheticProvider {
    pub fn new(spec: SynthDatasetSpec) -> Result<Self> {
        spec.validate()?;
        let by_video = spec.videos().map(|v| (v.video_id.clone(), v)).collect();
        let raw_plan = spec.raw_plan()?;
        Ok(Self {
            spec,
            by_video,
            raw_plan,
        })
    }

    pub fn spec(&self) -> &SynthDatasetSpec {
        &self.spec
    }

    pub fn video(&self, video_id: &str) -> Result<&SynthVideo> {
        self.by_video
            .get(video_id)
            .ok_or_else(|| Error::Provider(format!("unknown synthetic video {video_id}")))
    }

    /// OCR records planted in a video, as `(t, text, conf)`.
    pub fn ocr_records(
        &self,
        video_id: &str,
        timeline: &FrameTimeline,
    ) -> Result<Vec<(f64, String, f64)>> {
        let v = self.video(video_id)?;
        Ok(self.spec.ocr_for(v, timeline))
    }
}

impl Scorer for SyntheticProvider {
    fn score(
        &self,
        video_id: &str,
        tool: ToolKind,
        query: &str,
        timeline: &FrameTimeline,
    ) -> Result<Vec<f64>> {
        let v = self.video(video_id)?;
        let (key, signal) = match self
            .spec
            .calls
            .iter()
            .find(|c| c.tool == tool && c.query == query)
        {
            Some(c) => (
                c.id.clone(),
                CallSignal {
                    mu: c.mu,
                    present_in_interval: c.present_in_interval,
                },
            ),
            None => (
                format!("query/{}/{query}", tool.wire_name()),
                self.spec.question_signal,
            ),
        };
        Ok(planted_scores(
            v.seed,
            &key,
            signal,
            &v.interval,
            timeline,
            self.spec.noise_sigma,
        ))
    }
}

impl OcrSource for SyntheticProvider {
    fn extractions(&self, video_id: &str, timeline: &FrameTimeline) -> Result<Vec<OcrExtraction>> {
        Ok(self
            .ocr_records(video_id, timeline)?
            .into_iter()
            .map(|(t, text, confidence)| OcrExtraction {
                frame_index: timeline.nearest_frame(t),
                text,
                confidence,
            })
            .collect())
    }
}

impl PlanSource for SyntheticProvider {
    fn raw_plan(&self, _item: &QueryItem, _fps: f64) -> Result<String> {
        Ok(self.raw_plan.clone())
    }
}
