//! Message types, the tokenizer/parser, and the canonical text form.
//!
//! ```text
//! message   := [kindtag] clause (" ; " clause)*
//! kindtag   := "question" | "answer"
//! clause    := "forward" INT | "turn left" | "turn right"
//!            | "endpoint" FLOAT FLOAT FLOAT | "landmark" IDENT
//!            | "yes" | "no"
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `cos^2 + sin^2 = 1` for endpoint clauses. Endpoint values are
/// stored with five decimals, which alone perturbs the norm by up to ~2e-5.
pub const UNIT_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    Instruction,
    Question,
    Answer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Clause {
    Forward(u32),
    Turn(Side),
    /// Displacement of a trajectory endpoint: distance in meters and the
    /// cosine/sine of its bearing relative to the start heading.
    Endpoint {
        d_f: f64,
        cos_tf: f64,
        sin_tf: f64,
    },
    Landmark(String),
    Yes,
    No,
}

fn quantize(v: f64) -> f64 {
    let q = (v * 1e5).round() / 1e5;
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

impl Clause {
    /// Endpoint clause with values rounded to the five decimals of the text form,
    /// so that printing and re-parsing returns an equal clause.
    pub fn endpoint(d_f: f64, cos_tf: f64, sin_tf: f64) -> Clause {
        Clause::Endpoint {
            d_f: quantize(d_f),
            cos_tf: quantize(cos_tf),
            sin_tf: quantize(sin_tf),
        }
    }

    pub fn is_motion(&self) -> bool {
        matches!(self, Clause::Forward(_) | Clause::Turn(_))
    }
}

impl fmt::Display for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Clause::Forward(n) => write!(f, "forward {n}"),
            Clause::Turn(Side::Left) => f.write_str("turn left"),
            Clause::Turn(Side::Right) => f.write_str("turn right"),
            Clause::Endpoint {
                d_f,
                cos_tf,
                sin_tf,
            } => write!(f, "endpoint {d_f:.5} {cos_tf:.5} {sin_tf:.5}"),
            Clause::Landmark(id) => write!(f, "landmark {id}"),
            Clause::Yes => f.write_str("yes"),
            Clause::No => f.write_str("no"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub kind: Kind,
    pub clauses: Vec<Clause>,
}

impl Message {
    pub fn instruction(clauses: Vec<Clause>) -> Message {
        Message {
            kind: Kind::Instruction,
            clauses,
        }
    }

    pub fn answer_yes() -> Message {
        Message {
            kind: Kind::Answer,
            clauses: vec![Clause::Yes],
        }
    }

    /// "no", optionally followed by a corrective instruction.
    pub fn answer_no(instruction: Option<&Message>) -> Message {
        let mut clauses = vec![Clause::No];
        if let Some(i) = instruction {
            clauses.extend(i.clauses.iter().cloned());
        }
        Message {
            kind: Kind::Answer,
            clauses,
        }
    }

    pub fn endpoint(&self) -> Option<(f64, f64, f64)> {
        self.clauses.iter().find_map(|c| match c {
            Clause::Endpoint {
                d_f,
                cos_tf,
                sin_tf,
            } => Some((*d_f, *cos_tf, *sin_tf)),
            _ => None,
        })
    }

    pub fn landmark(&self) -> Option<&str> {
        self.clauses.iter().find_map(|c| match c {
            Clause::Landmark(id) => Some(id.as_str()),
            _ => None,
        })
    }

    /// The verdict of an answer message.
    pub fn verdict(&self) -> Option<bool> {
        match self.clauses.first() {
            Some(Clause::Yes) if self.kind == Kind::Answer => Some(true),
            Some(Clause::No) if self.kind == Kind::Answer => Some(false),
            _ => None,
        }
    }

    /// Motion and landmark clauses as an instruction, if there are any.
    /// For an instruction this is the message itself; for an answer, the
    /// guidance following the verdict.
    pub fn guidance(&self) -> Option<Message> {
        let clauses: Vec<Clause> = self
            .clauses
            .iter()
            .filter(|c| c.is_motion() || matches!(c, Clause::Landmark(_)))
            .cloned()
            .collect();
        (!clauses.is_empty()).then(|| Message::instruction(clauses))
    }

    pub fn validate(&self) -> Result<(), ParseError> {
        validate(self, &[0; 0])
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            Kind::Question => f.write_str("question ")?,
            Kind::Answer => f.write_str("answer ")?,
            Kind::Instruction => {}
        }
        for (i, c) in self.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" ; ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Message {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse(s)
    }
}

/// Positions are byte offsets into the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("unknown token at {0}")]
    UnknownToken(usize),
    #[error("malformed clause at {0}")]
    MalformedClause(usize),
    #[error("empty message")]
    EmptyMessage,
}

impl ParseError {
    pub fn position(&self) -> Option<usize> {
        match self {
            ParseError::UnknownToken(p) | ParseError::MalformedClause(p) => Some(*p),
            ParseError::EmptyMessage => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    pos: usize,
}

fn tokenize(text: &str) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() || ch == ';' {
            if let Some(s) = start.take() {
                out.push(Token {
                    text: &text[s..i],
                    pos: s,
                });
            }
            if ch == ';' {
                out.push(Token { text: ";", pos: i });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &text[s..],
            pos: s,
        });
    }
    out
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| c.is_ascii_lowercase())
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

fn parse_clause(toks: &[Token<'_>]) -> Result<Clause, ParseError> {
    let head = toks[0];
    let malformed = || ParseError::MalformedClause(head.pos);
    let args = &toks[1..];
    let float = |t: &Token<'_>| {
        t.text
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(malformed)
    };
    match head.text {
        "forward" => match args {
            [n] => match n.text.parse::<u32>() {
                Ok(v) if v >= 1 && !n.text.starts_with('+') => Ok(Clause::Forward(v)),
                _ => Err(malformed()),
            },
            _ => Err(malformed()),
        },
        "turn" => match args {
            [s] if s.text == "left" => Ok(Clause::Turn(Side::Left)),
            [s] if s.text == "right" => Ok(Clause::Turn(Side::Right)),
            _ => Err(malformed()),
        },
        "endpoint" => match args {
            [d, c, s] => {
                let (d, c, s) = (float(d)?, float(c)?, float(s)?);
                if d < 0.0 || ((c * c + s * s) - 1.0).abs() > UNIT_TOLERANCE {
                    return Err(malformed());
                }
                Ok(Clause::endpoint(d, c, s))
            }
            _ => Err(malformed()),
        },
        "landmark" => match args {
            [id] if is_ident(id.text) => Ok(Clause::Landmark(id.text.to_string())),
            _ => Err(malformed()),
        },
        "yes" if args.is_empty() => Ok(Clause::Yes),
        "no" if args.is_empty() => Ok(Clause::No),
        "yes" | "no" => Err(malformed()),
        _ => Err(ParseError::UnknownToken(head.pos)),
    }
}

/// Kind-level rules: answers open with exactly one verdict and "yes" stands
/// alone; questions carry exactly one endpoint; verdicts appear nowhere else.
fn validate(msg: &Message, positions: &[usize]) -> Result<(), ParseError> {
    let at = |i: usize| ParseError::MalformedClause(positions.get(i).copied().unwrap_or(0));
    if msg.clauses.is_empty() {
        return Err(ParseError::EmptyMessage);
    }
    let endpoints = msg
        .clauses
        .iter()
        .filter(|c| matches!(c, Clause::Endpoint { .. }))
        .count();
    for (i, c) in msg.clauses.iter().enumerate() {
        match c {
            Clause::Yes | Clause::No if msg.kind != Kind::Answer || i > 0 => return Err(at(i)),
            Clause::Endpoint { .. } if msg.kind != Kind::Question => return Err(at(i)),
            Clause::Forward(0) => return Err(at(i)),
            _ => {}
        }
    }
    match msg.kind {
        Kind::Answer => match msg.clauses[0] {
            Clause::Yes if msg.clauses.len() > 1 => Err(at(1)),
            Clause::Yes | Clause::No => Ok(()),
            _ => Err(at(0)),
        },
        Kind::Question if endpoints != 1 => Err(at(msg.clauses.len().saturating_sub(1))),
        _ => Ok(()),
    }
}

pub fn parse(text: &str) -> Result<Message, ParseError> {
    let toks = tokenize(text);
    if toks.is_empty() {
        return Err(ParseError::EmptyMessage);
    }
    let (kind, rest) = match toks[0].text {
        "question" => (Kind::Question, &toks[1..]),
        "answer" => (Kind::Answer, &toks[1..]),
        _ => (Kind::Instruction, &toks[..]),
    };
    if rest.is_empty() {
        return Err(ParseError::EmptyMessage);
    }
    let mut clauses = Vec::new();
    let mut positions = Vec::new();
    for group in rest.split(|t| t.text == ";") {
        let Some(first) = group.first() else {
            // empty clause between separators, or a trailing separator
            let pos = rest
                .iter()
                .find(|t| t.text == ";")
                .map_or(text.len(), |t| t.pos);
            return Err(ParseError::MalformedClause(pos));
        };
        positions.push(first.pos);
        clauses.push(parse_clause(group)?);
    }
    let msg = Message { kind, clauses };
    validate(&msg, &positions)?;
    Ok(msg)
}
