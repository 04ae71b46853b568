//! Combine-expression grammar.
//!
//! ```text
//! expr := atom (("AND" | "OR") atom)*
//! atom := id | "(" expr ")"
//! ```
//!
//! `AND` and `OR` share one precedence level and associate to the left, so
//! `Q1 AND Q2 OR Q3` groups as `(Q1 AND Q2) OR Q3`. Keywords are matched
//! case-insensitively. Error offsets are 1-based character columns; an error
//! at end of input points one past the last character.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum BoolOp {
    And,
    Or,
}

impl fmt::Display for BoolOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoolOp::And => f.write_str("AND"),
            BoolOp::Or => f.write_str("OR"),
        }
    }
}

/// Boolean formula over tool-call ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CombineExpr {
    Leaf(String),
    Node {
        op: BoolOp,
        left: Box<CombineExpr>,
        right: Box<CombineExpr>,
    },
}

impl CombineExpr {
    pub fn leaf(id: impl Into<String>) -> Self {
        CombineExpr::Leaf(id.into())
    }

    pub fn node(op: BoolOp, left: CombineExpr, right: CombineExpr) -> Self {
        CombineExpr::Node {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn and(left: CombineExpr, right: CombineExpr) -> Self {
        Self::node(BoolOp::And, left, right)
    }

    pub fn or(left: CombineExpr, right: CombineExpr) -> Self {
        Self::node(BoolOp::Or, left, right)
    }

    /// Ids referenced by leaves, deduplicated.
    pub fn leaf_ids(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        self.collect_ids(&mut out);
        out
    }

    fn collect_ids<'a>(&'a self, out: &mut BTreeSet<&'a str>) {
        match self {
            CombineExpr::Leaf(id) => {
                out.insert(id.as_str());
            }
            CombineExpr::Node { left, right, .. } => {
                left.collect_ids(out);
                right.collect_ids(out);
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            CombineExpr::Leaf(_) => 1,
            CombineExpr::Node { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Drops every leaf for which `keep` is false. A node left with one child
    /// collapses to that child; `None` when nothing survives.
    pub fn retain_leaves(&self, keep: &impl Fn(&str) -> bool) -> Option<CombineExpr> {
        match self {
            CombineExpr::Leaf(id) => keep(id).then(|| self.clone()),
            CombineExpr::Node { op, left, right } => {
                match (left.retain_leaves(keep), right.retain_leaves(keep)) {
                    (Some(l), Some(r)) => Some(CombineExpr::node(*op, l, r)),
                    (Some(one), None) | (None, Some(one)) => Some(one),
                    (None, None) => None,
                }
            }
        }
    }
}

impl fmt::Display for CombineExpr {
    /// Canonical text. Left operands chain without parentheses when they use
    /// the same operator; every other nested node is parenthesized.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CombineExpr::Leaf(id) => f.write_str(id),
            CombineExpr::Node { op, left, right } => {
                match left.as_ref() {
                    CombineExpr::Node { op: lop, .. } if lop != op => write!(f, "({left})")?,
                    _ => write!(f, "{left}")?,
                }
                write!(f, " {op} ")?;
                match right.as_ref() {
                    CombineExpr::Leaf(_) => write!(f, "{right}"),
                    CombineExpr::Node { .. } => write!(f, "({right})"),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    LParen,
    RParen,
    Op(BoolOp),
    Ident(String),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    col: usize,
}

fn tokenize(text: &str) -> Result<Vec<Spanned>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c.is_whitespace() {
            i += 1;
        } else if c == '(' {
            out.push(Spanned {
                tok: Tok::LParen,
                col,
            });
            i += 1;
        } else if c == ')' {
            out.push(Spanned {
                tok: Tok::RParen,
                col,
            });
            i += 1;
        } else if c.is_ascii_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            let tok = if word.eq_ignore_ascii_case("and") {
                Tok::Op(BoolOp::And)
            } else if word.eq_ignore_ascii_case("or") {
                Tok::Op(BoolOp::Or)
            } else {
                Tok::Ident(word)
            };
            out.push(Spanned { tok, col });
        } else {
            return Err(Error::parse(col, format!("unexpected character {c:?}")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    end_col: usize,
    declared: &'a BTreeSet<String>,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn col(&self) -> usize {
        self.peek().map_or(self.end_col, |t| t.col)
    }

    fn expr(&mut self) -> Result<CombineExpr> {
        let mut acc = self.atom()?;
        while let Some(Spanned {
            tok: Tok::Op(op), ..
        }) = self.peek()
        {
            let op = *op;
            self.pos += 1;
            let rhs = self.atom()?;
            acc = CombineExpr::node(op, acc, rhs);
        }
        Ok(acc)
    }

    fn atom(&mut self) -> Result<CombineExpr> {
        let col = self.col();
        let Some(Spanned { tok, .. }) = self.peek().cloned() else {
            return Err(Error::parse(
                col,
                "expected tool-call id or '(' but input ended",
            ));
        };
        self.pos += 1;
        match tok {
            Tok::Ident(id) => {
                if !is_call_id(&id) {
                    return Err(Error::parse(col, format!("unknown token {id:?}")));
                }
                if !self.declared.contains(&id) {
                    return Err(Error::Validation(format!(
                        "combine references undeclared tool call {id} (column {col})"
                    )));
                }
                Ok(CombineExpr::Leaf(id))
            }
            Tok::LParen => {
                if matches!(
                    self.peek(),
                    Some(Spanned {
                        tok: Tok::RParen,
                        ..
                    })
                ) {
                    return Err(Error::parse(col, "empty parentheses"));
                }
                let inner = self.expr()?;
                match self.peek() {
                    Some(Spanned {
                        tok: Tok::RParen, ..
                    }) => {
                        self.pos += 1;
                        Ok(inner)
                    }
                    _ => Err(Error::parse(self.col(), "expected ')'")),
                }
            }
            Tok::RParen => Err(Error::parse(col, "unbalanced ')'")),
            Tok::Op(op) => Err(Error::parse(
                col,
                format!("operator {op} without left operand"),
            )),
        }
    }
}

/// True for ids of the form `Q` followed by a positive integer.
pub fn is_call_id(s: &str) -> bool {
    let Some(digits) = s.strip_prefix('Q') else {
        return false;
    };
    !digits.is_empty()
        && digits.bytes().all(|b| b.is_ascii_digit())
        && digits.bytes().any(|b| b != b'0')
}

/// Parses a combine expression, checking every leaf against `declared_ids`.
pub fn parse_combine(expr_text: &str, declared_ids: &BTreeSet<String>) -> Result<CombineExpr> {
    let toks = tokenize(expr_text)?;
    let end_col = expr_text.chars().count() + 1;
    if toks.is_empty() {
        return Err(Error::parse(end_col, "empty combine expression"));
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end_col,
        declared: declared_ids,
    };
    let expr = p.expr()?;
    if let Some(t) = p.peek() {
        let msg = match t.tok {
            Tok::RParen => "unbalanced ')'".to_string(),
            _ => format!("unexpected token {:?} after complete expression", t.tok),
        };
        return Err(Error::parse(t.col, msg));
    }
    Ok(expr)
}
