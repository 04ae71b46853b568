//! Planner output: tool calls plus the boolean expression that fuses them.

mod expr;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use expr::{is_call_id, parse_combine, BoolOp, CombineExpr};

use crate::error::{Error, Result};

/// Hard limit on tool calls in one plan.
pub const MAX_CALLS: usize = 8;
/// Plans with more calls than this are accepted with a warning.
pub const SOFT_MAX_CALLS: usize = 5;

/// Frame scorers a plan may call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ToolKind {
    /// Whole-frame image/text matching. Wire name `siglip`.
    #[serde(rename = "siglip")]
    SceneMatcher,
    /// Region-level entity matching. Wire name `tren`.
    #[serde(rename = "tren")]
    RegionMatcher,
}

impl ToolKind {
    pub fn wire_name(self) -> &'static str {
        match self {
            ToolKind::SceneMatcher => "siglip",
            ToolKind::RegionMatcher => "tren",
        }
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

impl FromStr for ToolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "siglip" => Ok(ToolKind::SceneMatcher),
            "tren" => Ok(ToolKind::RegionMatcher),
            other => Err(Error::Validation(format!("unknown tool {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToolCall {
    pub id: String,
    pub tool: ToolKind,
    pub query: String,
}

/// A validated plan. `combine` is `None` exactly when there are no calls, in
/// which case the ranking comes from OCR injection alone.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub calls: Vec<ToolCall>,
    pub combine: Option<CombineExpr>,
    pub reasoning: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WireCall {
    tool: String,
    query: String,
    id: String,
}

/// The JSON object a planner emits and the plan cache stores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WirePlan {
    #[serde(default)]
    queries: Vec<WireCall>,
    #[serde(default)]
    combine: String,
}

impl Plan {
    /// One scene-matcher call over `query`.
    pub fn single_scene(query: impl Into<String>) -> Self {
        Self {
            calls: vec![ToolCall {
                id: "Q1".into(),
                tool: ToolKind::SceneMatcher,
                query: query.into(),
            }],
            combine: Some(CombineExpr::leaf("Q1")),
            reasoning: String::new(),
            warnings: Vec::new(),
        }
    }

    pub fn is_ocr_only(&self) -> bool {
        self.calls.is_empty()
    }

    pub fn call(&self, id: &str) -> Option<&ToolCall> {
        self.calls.iter().find(|c| c.id == id)
    }

    /// Validates and assembles a plan from its parts.
    pub fn new(calls: Vec<ToolCall>, combine_text: &str, reasoning: String) -> Result<Self> {
        let mut warnings = Vec::new();
        if calls.len() > MAX_CALLS {
            return Err(Error::Validation(format!(
                "plan has {} tool calls, limit is {MAX_CALLS}",
                calls.len()
            )));
        }
        if calls.len() > SOFT_MAX_CALLS {
            warnings.push(format!("plan has {} tool calls", calls.len()));
        }
        let mut declared = BTreeSet::new();
        for c in &calls {
            if !is_call_id(&c.id) {
                return Err(Error::Validation(format!(
                    "malformed tool-call id {:?}",
                    c.id
                )));
            }
            if c.query.trim().is_empty() {
                return Err(Error::Validation(format!(
                    "tool call {} has an empty query",
                    c.id
                )));
            }
            if !declared.insert(c.id.clone()) {
                return Err(Error::Validation(format!(
                    "duplicate tool-call id {}",
                    c.id
                )));
            }
        }
        let combine = if calls.is_empty() {
            if !combine_text.trim().is_empty() {
                return Err(Error::Validation(
                    "combine expression given for a plan without tool calls".into(),
                ));
            }
            warnings.push("plan has no tool calls; OCR only".into());
            None
        } else {
            let expr = parse_combine(combine_text, &declared)?;
            let used = expr.leaf_ids();
            for c in &calls {
                if !used.contains(c.id.as_str()) {
                    warnings.push(format!("tool call {} is not referenced by combine", c.id));
                }
            }
            Some(expr)
        };
        Ok(Self {
            calls,
            combine,
            reasoning,
            warnings,
        })
    }

    fn from_wire(wire: WirePlan, reasoning: String) -> Result<Self> {
        let calls = wire
            .queries
            .into_iter()
            .map(|w| {
                Ok(ToolCall {
                    tool: w.tool.parse()?,
                    id: w.id.trim().to_string(),
                    query: w.query.trim().to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(calls, &wire.combine, reasoning)
    }

    pub fn to_wire(&self) -> WirePlan {
        WirePlan {
            queries: self
                .calls
                .iter()
                .map(|c| WireCall {
                    tool: c.tool.wire_name().to_string(),
                    query: c.query.clone(),
                    id: c.id.clone(),
                })
                .collect(),
            combine: self
                .combine
                .as_ref()
                .map(ToString::to_string)
                .unwrap_or_default(),
        }
    }

    /// Removes every call to `tool` and simplifies the expression. Returns
    /// `None` when no call survives.
    pub fn without_tool(&self, tool: ToolKind) -> Option<Plan> {
        let calls: Vec<ToolCall> = self
            .calls
            .iter()
            .filter(|c| c.tool != tool)
            .cloned()
            .collect();
        if calls.len() == self.calls.len() {
            return Some(self.clone());
        }
        let kept: BTreeSet<&str> = calls.iter().map(|c| c.id.as_str()).collect();
        let combine = self
            .combine
            .as_ref()
            .and_then(|e| e.retain_leaves(&|id| kept.contains(id)))?;
        let used = combine.leaf_ids();
        let calls = calls
            .into_iter()
            .filter(|c| used.contains(c.id.as_str()))
            .collect();
        Some(Plan {
            calls,
            combine: Some(combine),
            reasoning: self.reasoning.clone(),
            warnings: self.warnings.clone(),
        })
    }

    /// Structural equality ignoring reasoning text and warnings.
    pub fn same_structure(&self, other: &Plan) -> bool {
        self.calls == other.calls && self.combine == other.combine
    }
}

/// Locates the last fenced code block in `raw`, returning `(preamble, body)`.
fn last_fenced_block(raw: &str) -> Option<(&str, &str)> {
    let mut fences = Vec::new();
    let mut search = 0;
    while let Some(pos) = raw[search..].find("```") {
        fences.push(search + pos);
        search += pos + 3;
    }
    // Fences pair up in order: open, close, open, close, ...
    let pairs = fences.len() / 2;
    if pairs == 0 {
        return None;
    }
    let open = fences[2 * (pairs - 1)];
    let close = fences[2 * (pairs - 1) + 1];
    let after_open = &raw[open + 3..close];
    // Skip the info string (e.g. `json`) on the opening line.
    let body = match after_open.find('\n') {
        Some(nl) => &after_open[nl + 1..],
        None => after_open.trim_start_matches(|c: char| c.is_ascii_alphabetic()),
    };
    Some((&raw[..open], body))
}

/// Parses raw planner output: free-text reasoning followed by a JSON plan,
/// usually inside a Markdown fence. The last fenced block wins.
pub fn parse_plan(raw_text: &str) -> Result<Plan> {
    if raw_text.trim().is_empty() {
        return Err(Error::parse(0, "empty planner output"));
    }
    let (reasoning, body) = match last_fenced_block(raw_text) {
        Some(found) => found,
        None => {
            let start = raw_text
                .find('{')
                .ok_or_else(|| Error::parse(0, "no JSON block found in planner output"))?;
            let end = raw_text
                .rfind('}')
                .filter(|&e| e > start)
                .ok_or_else(|| Error::parse(start + 1, "unterminated JSON object"))?;
            (&raw_text[..start], &raw_text[start..=end])
        }
    };
    let wire: WirePlan = serde_json::from_str(body.trim())
        .map_err(|e| Error::parse(e.column(), format!("malformed plan JSON: {e}")))?;
    Plan::from_wire(wire, reasoning.trim().to_string())
}

/// Serializes a plan as the single-line JSON object planners emit.
pub fn format_plan(plan: &Plan) -> String {
    serde_json::to_string(&plan.to_wire()).expect("plan serializes")
}

/// Parses a canonical plan object (as stored in a plan cache).
pub fn plan_from_value(value: &serde_json::Value) -> Result<Plan> {
    let wire: WirePlan = serde_json::from_value(value.clone())?;
    Plan::from_wire(wire, String::new())
}

pub fn plan_to_value(plan: &Plan) -> serde_json::Value {
    serde_json::to_value(plan.to_wire()).expect("plan serializes")
}
