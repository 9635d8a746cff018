//! Character vocabulary.
//!
//! File format: one token per line, the line number (from 0) is the id.
//! Ids 0-3 are reserved for `[PAD]`, `[UNK]`, `[CLS]` and `[SEP]`.
//! Whitespace characters are never vocabulary entries: they are dropped
//! from text before encoding.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const CLS_ID: usize = 2;
pub const SEP_ID: usize = 3;

pub const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<char, usize>,
}

impl Vocab {
    /// Builds a vocabulary from sentences. Characters seen at least
    /// `min_count` times get ids after the specials, ordered by descending
    /// frequency and then by code point.
    pub fn build<'a>(sentences: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: BTreeMap<char, usize> = BTreeMap::new();
        for s in sentences {
            for c in s.chars().filter(|c| !c.is_whitespace()) {
                *counts.entry(c).or_default() += 1;
            }
        }
        let mut chars: Vec<(char, usize)> = counts.into_iter().filter(|&(_, n)| n >= min_count.max(1)).collect();
        chars.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(chars.into_iter().map(|(c, _)| c.to_string()))
            .collect();
        Self::from_tokens(tokens).expect("built vocabulary is well formed")
    }

    fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        for (i, special) in SPECIALS.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*special) {
                return Err(Error::Model(format!("vocabulary line {i} must be {special}")));
            }
        }
        let mut index = HashMap::new();
        for (id, t) in tokens.iter().enumerate().skip(SPECIALS.len()) {
            let mut cs = t.chars();
            let (Some(c), None) = (cs.next(), cs.next()) else {
                return Err(Error::Model(format!(
                    "vocabulary entry {id} is not one character: {t:?}"
                )));
            };
            if index.insert(c, id).is_some() {
                return Err(Error::Model(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, c: char) -> usize {
        self.index.get(&c).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    /// Ids of the non-whitespace characters of `text`.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        text.chars()
            .filter(|c| !c.is_whitespace())
            .map(|c| self.id(c))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_then_frequency_then_codepoint() {
        let v = Vocab::build(["aa b", "cb"], 1);
        assert_eq!(v.len(), 7);
        assert_eq!(v.token(4), Some("a"));
        assert_eq!(v.token(5), Some("b"));
        assert_eq!(v.token(6), Some("c"));
        assert_eq!(v.id(' '), UNK_ID);
    }

    #[test]
    fn unseen_character_maps_to_unk() {
        let v = Vocab::build(["汤姆"], 1);
        assert_eq!(v.encode("汤猫"), vec![v.id('汤'), UNK_ID]);
    }

    #[test]
    fn min_count_filters() {
        let v = Vocab::build(["aab"], 2);
        assert_eq!(v.len(), 5);
        assert_eq!(v.id('b'), UNK_ID);
    }

    #[test]
    fn deterministic_file_bytes_and_roundtrip() {
        let a = Vocab::build(["他叫汤姆去拿外衣。"], 1).to_text();
        let b = Vocab::build(["他叫汤姆去拿外衣。"], 1).to_text();
        assert_eq!(a, b);
        assert_eq!(Vocab::from_text(&a).unwrap().to_text(), a);
    }

    #[test]
    fn rejects_missing_specials() {
        assert!(Vocab::from_text("a\nb\n").is_err());
    }
}
