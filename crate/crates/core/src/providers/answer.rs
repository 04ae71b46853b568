//! Multiple-choice answering over selected frames.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::chat::{ChatClient, ChatMessage};
use crate::error::Result;
use crate::eval::QueryItem;

pub const ANSWER_PROMPT: &str = include_str!("../../data/answer_prompt.txt");

/// Produces a free-text response to a question given frame timestamps. Zero
/// timestamps is the blind setting. Turning timestamps into images is the
/// implementation's concern.
pub trait Answerer: Send + Sync {
    fn name(&self) -> &str;
    fn respond(&self, item: &QueryItem, timestamps: &[f64]) -> Result<String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "detail")]
pub enum Answer {
    Letter(char),
    /// The response named no option.
    Abstain,
    /// The answerer call itself failed.
    Failed(String),
}

impl Answer {
    pub fn is_correct(&self, gold: char) -> bool {
        matches!(self, Answer::Letter(l) if *l == gold)
    }
}

/// First standalone option letter (A-E) in a response, e.g. `B`, `(C)`,
/// `Answer: D.`; otherwise a leading option letter.
pub fn extract_letter(response: &str) -> Option<char> {
    let is_option = |c: char| ('A'..='E').contains(&c);
    let standalone = response
        .split(|c: char| !c.is_ascii_alphanumeric())
        .find(|tok| tok.len() == 1 && tok.chars().all(is_option))
        .and_then(|tok| tok.chars().next());
    standalone.or_else(|| {
        response
            .trim_start()
            .chars()
            .next()
            .filter(|&c| is_option(c))
    })
}

/// Asks the answerer and maps its response to an option letter.
pub fn answer(item: &QueryItem, timestamps: &[f64], answerer: &dyn Answerer) -> Answer {
    match answerer.respond(item, timestamps) {
        Ok(text) => extract_letter(&text).map_or(Answer::Abstain, Answer::Letter),
        Err(e) => Answer::Failed(e.to_string()),
    }
}

/// Answers correctly iff at least one frame lies in the ground-truth interval,
/// otherwise picks the option after the correct one.
pub struct OracleAnswerer;

impl Answerer for OracleAnswerer {
    fn name(&self) -> &str {
        "oracle-stub"
    }

    fn respond(&self, item: &QueryItem, timestamps: &[f64]) -> Result<String> {
        let gold = item.answer.unwrap_or('A');
        if timestamps.iter().any(|&t| item.interval.contains(t)) {
            Ok(gold.to_string())
        } else {
            let wrong = (b'A' + (gold as u8 - b'A' + 1) % 5) as char;
            Ok(wrong.to_string())
        }
    }
}

/// Uniformly random letter, seeded per question.
pub struct RandomAnswerer {
    pub seed: u64,
}

impl Answerer for RandomAnswerer {
    fn name(&self) -> &str {
        "random-stub"
    }

    fn respond(&self, item: &QueryItem, _timestamps: &[f64]) -> Result<String> {
        let mut h = self.seed;
        for b in item.id.bytes() {
            h = h.rotate_left(5) ^ u64::from(b);
            h = h.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        Ok(((b'A' + rng.random_range(0..5u8)) as char).to_string())
    }
}

/// Chat-model answerer using the bundled MCQ prompt.
pub struct ChatAnswerer {
    client: Arc<dyn ChatClient>,
    name: String,
}

impl ChatAnswerer {
    pub fn new(client: Arc<dyn ChatClient>, name: impl Into<String>) -> Self {
        Self {
            client,
            name: name.into(),
        }
    }

    pub fn prompt(item: &QueryItem, timestamps: &[f64]) -> String {
        let ts = if timestamps.is_empty() {
            "none".to_string()
        } else {
            timestamps
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        };
        let options = item
            .options
            .iter()
            .zip('A'..='E')
            .map(|(o, l)| format!("{l}) {o}"))
            .collect::<Vec<_>>()
            .join("\n");
        ANSWER_PROMPT
            .replace("{timestamps}", &ts)
            .replace("{question}", &item.text)
            .replace("{options}", &options)
    }
}

impl Answerer for ChatAnswerer {
    fn name(&self) -> &str {
        &self.name
    }

    fn respond(&self, item: &QueryItem, timestamps: &[f64]) -> Result<String> {
        self.client
            .complete(&[ChatMessage::user(Self::prompt(item, timestamps))])
    }
}
