//! Tag sequences to spans and back.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sentence::{Entity, Span};

/// Character-level segmentation tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bmes {
    B,
    M,
    E,
    S,
}

impl Bmes {
    pub const ALL: [Bmes; 4] = [Bmes::B, Bmes::M, Bmes::E, Bmes::S];
}

impl fmt::Display for Bmes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Bmes::B => "B",
            Bmes::M => "M",
            Bmes::E => "E",
            Bmes::S => "S",
        };
        f.write_str(s)
    }
}

impl FromStr for Bmes {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "B" => Ok(Bmes::B),
            "M" => Ok(Bmes::M),
            "E" => Ok(Bmes::E),
            "S" => Ok(Bmes::S),
            other => Err(Error::Data(format!("not a BMES tag: {other:?}"))),
        }
    }
}

/// Words from segmentation tags. Never fails: an `M` or `E` without an
/// open word starts one, a `B` or `S` closes any open word first, and an
/// open word is closed at the end of the sequence. The result always
/// partitions `[0, labels.len())`.
pub fn bmes_to_spans(labels: &[Bmes]) -> Vec<Span> {
    let mut spans = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &l) in labels.iter().enumerate() {
        match l {
            Bmes::B => {
                if let Some(s) = open {
                    spans.push(Span::new(s, i));
                }
                open = Some(i);
            }
            Bmes::M => {
                open.get_or_insert(i);
            }
            Bmes::E => {
                spans.push(Span::new(open.take().unwrap_or(i), i + 1));
            }
            Bmes::S => {
                if let Some(s) = open.take() {
                    spans.push(Span::new(s, i));
                }
                spans.push(Span::new(i, i + 1));
            }
        }
    }
    if let Some(s) = open {
        spans.push(Span::new(s, labels.len()));
    }
    spans
}

pub fn spans_to_bmes(spans: &[Span]) -> Vec<Bmes> {
    let mut out = Vec::new();
    for s in spans {
        match s.len() {
            0 => {}
            1 => out.push(Bmes::S),
            n => {
                out.push(Bmes::B);
                out.extend(std::iter::repeat_n(Bmes::M, n - 2));
                out.push(Bmes::E);
            }
        }
    }
    out
}

enum Bio<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_bio(tag: &str) -> Bio<'_> {
    match tag.split_once('-') {
        Some(("B", t)) if !t.is_empty() => Bio::Begin(t),
        Some(("I", t)) if !t.is_empty() => Bio::Inside(t),
        _ => Bio::Outside,
    }
}

/// Typed spans from BIO tags. A maximal `B-T I-T*` run is one span; an
/// `I-T` that does not continue a span of type `T` starts a new one.
/// Tags that are not `B-*` or `I-*` count as outside.
pub fn bio_to_entities<S: AsRef<str>>(labels: &[S]) -> Vec<Entity> {
    let mut out = Vec::new();
    let mut open: Option<(usize, &str)> = None;
    for (i, tag) in labels.iter().enumerate() {
        let parsed = parse_bio(tag.as_ref());
        let continues = matches!((&parsed, open), (Bio::Inside(t), Some((_, o))) if *t == o);
        if continues {
            continue;
        }
        if let Some((s, t)) = open.take() {
            out.push(Entity {
                start: s,
                end: i,
                kind: t.to_string(),
            });
        }
        match parsed {
            Bio::Begin(t) | Bio::Inside(t) => open = Some((i, t)),
            Bio::Outside => {}
        }
    }
    if let Some((s, t)) = open {
        out.push(Entity {
            start: s,
            end: labels.len(),
            kind: t.to_string(),
        });
    }
    out
}

/// BIO tags for non-overlapping typed spans over `n` positions.
pub fn entities_to_bio(n: usize, entities: &[Entity]) -> Vec<String> {
    let mut out = vec!["O".to_string(); n];
    for e in entities {
        for (i, tag) in out.iter_mut().enumerate().take(e.end.min(n)).skip(e.start) {
            let prefix = if i == e.start { "B" } else { "I" };
            *tag = format!("{prefix}-{}", e.kind);
        }
    }
    out
}

/// True when every `I-T` tag continues a `B-T` or `I-T` of the same type.
pub fn is_well_formed_bio<S: AsRef<str>>(labels: &[S]) -> bool {
    let mut open: Option<&str> = None;
    for tag in labels {
        let tag = tag.as_ref();
        if tag == "O" {
            open = None;
            continue;
        }
        match parse_bio(tag) {
            Bio::Begin(t) => open = Some(t),
            Bio::Inside(t) if open == Some(t) => {}
            _ => return false,
        }
    }
    true
}
