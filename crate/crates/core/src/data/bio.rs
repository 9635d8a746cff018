//! Character-per-line entity format.

use std::fmt::Write;
use std::path::Path;

use crate::data::{blocks, parse_error};
use crate::decode::spans::{bio_to_entities, entities_to_bio};
use crate::error::{Error, Result};
use crate::sentence::AnnotatedSentence;

fn valid_tag(tag: &str) -> bool {
    tag == "O"
        || matches!(tag.split_once('-'), Some(("B" | "I", t)) if !t.is_empty() && !t.contains(char::is_whitespace))
}

pub fn parse(text: &str, path: &Path) -> Result<Vec<AnnotatedSentence>> {
    let mut out = Vec::new();
    for (first, lines) in blocks(text) {
        let mut chars = String::new();
        let mut tags: Vec<&str> = Vec::with_capacity(lines.len());
        for (k, line) in lines.iter().enumerate() {
            let no = first + k;
            let (c, tag) = line
                .split_once('\t')
                .ok_or_else(|| parse_error(path, no, "expected character<TAB>tag"))?;
            let mut it = c.chars();
            match (it.next(), it.next()) {
                (Some(ch), None) if !ch.is_whitespace() => chars.push(ch),
                _ => return Err(parse_error(path, no, format!("{c:?} is not a single character"))),
            }
            if !valid_tag(tag) {
                return Err(parse_error(path, no, format!("invalid BIO tag {tag:?}")));
            }
            let continues = |prev: &&str| prev.get(1..) == tag.get(1..) && *prev != "O";
            if tag.starts_with("I-") && !tags.last().is_some_and(continues) {
                return Err(parse_error(
                    path,
                    no,
                    format!("{tag} does not continue an entity of its type"),
                ));
            }
            tags.push(tag);
        }
        let mut s = AnnotatedSentence::new(chars);
        s.entities = Some(bio_to_entities(&tags));
        out.push(s);
    }
    Ok(out)
}

pub fn render(sentences: &[AnnotatedSentence]) -> Result<String> {
    let mut out = String::new();
    for s in sentences {
        let chars = s.chars();
        if chars.iter().any(|c| c.is_whitespace()) {
            return Err(Error::Data(format!("sentence {:?} contains whitespace", s.text)));
        }
        let tags = entities_to_bio(chars.len(), s.entities.as_deref().unwrap_or(&[]));
        for (c, t) in chars.iter().zip(&tags) {
            writeln!(out, "{c}\t{t}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}
