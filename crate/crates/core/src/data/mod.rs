//! Corpus formats.
//!
//! * `conllu`: ten tab-separated columns per word (`ID FORM LEMMA UPOS XPOS
//!   FEATS HEAD DEPREL DEPS MISC`). Forms give the segmentation, `UPOS` the
//!   part-of-speech tags, `HEAD`/`DEPREL` the dependency tree and `DEPS`
//!   (`head:rel|head:rel`) the semantic graph. A column that is `_` on every
//!   word is absent. `LEMMA`, `XPOS`, `FEATS` and `MISC` are read but not
//!   kept, and written as `_`. Lines starting with `#` are kept as comments.
//! * `bio`: one `character<TAB>tag` line per character, entity tags in BIO.
//! * `srl`: one `form<TAB>pred<TAB>roles..` line per word, where `pred` is
//!   `Y` for predicates and `_` otherwise, followed by one BIO column per
//!   predicate in sentence order; each column tags its predicate `B-V`.
//!
//! Sentences are separated by blank lines. Files are UTF-8.

pub mod bio;
pub mod conllu;
pub mod srl;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sentence::AnnotatedSentence;
use crate::task::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Conllu,
    Bio,
    Srl,
}

impl Format {
    /// Format that carries a task's annotation by default.
    pub fn for_task(task: Task) -> Format {
        match task {
            Task::Ner => Format::Bio,
            Task::Srl => Format::Srl,
            _ => Format::Conllu,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Format::Conllu => "conllu",
            Format::Bio => "bio",
            Format::Srl => "srl",
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conllu" => Ok(Format::Conllu),
            "bio" => Ok(Format::Bio),
            "srl" => Ok(Format::Srl),
            other => Err(Error::Data(format!(
                "unknown format {other:?} (expected conllu, bio or srl)"
            ))),
        }
    }
}

/// Sentence blocks of a file: `(first line number, lines)` with comments
/// included. Line numbers start at 1.
pub(crate) fn blocks(text: &str) -> Vec<(usize, Vec<&str>)> {
    let mut out = Vec::new();
    let mut current: Option<(usize, Vec<&str>)> = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            if let Some(b) = current.take() {
                out.push(b);
            }
        } else {
            current.get_or_insert_with(|| (i + 1, Vec::new())).1.push(line);
        }
    }
    out.extend(current);
    out
}

pub(crate) fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Parses file contents; `path` only labels errors.
pub fn parse(text: &str, format: Format, path: &Path) -> Result<Vec<AnnotatedSentence>> {
    match format {
        Format::Conllu => conllu::parse(text, path),
        Format::Bio => bio::parse(text, path),
        Format::Srl => srl::parse(text, path),
    }
}

/// Renders sentences; the inverse of [`parse`] on the layers the format
/// carries.
pub fn render(sentences: &[AnnotatedSentence], format: Format) -> Result<String> {
    match format {
        Format::Conllu => conllu::render(sentences),
        Format::Bio => bio::render(sentences),
        Format::Srl => srl::render(sentences),
    }
}

pub fn read_corpus(path: &Path, format: Format) -> Result<Vec<AnnotatedSentence>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, format, path)
}

pub fn write_corpus(sentences: &[AnnotatedSentence], path: &Path, format: Format) -> Result<()> {
    let text = render(sentences, format)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Surface forms of a sentence's words; a sentence without segmentation is
/// an error for word-based formats.
pub(crate) fn forms(s: &AnnotatedSentence) -> Result<Vec<String>> {
    s.word_forms()
        .ok_or_else(|| Error::Data(format!("sentence {:?} has no word segmentation", s.text)))
}

/// Checks that a form can sit in a tab-separated column.
pub(crate) fn plain_form(form: &str) -> bool {
    !form.is_empty() && !form.chars().any(char::is_whitespace)
}
