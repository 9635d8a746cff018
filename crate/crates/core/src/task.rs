use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The six analysis tasks, in pipeline order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Cws,
    Pos,
    Ner,
    Dep,
    Sdp,
    Srl,
}

impl Task {
    pub const ALL: [Task; 6] = [Task::Cws, Task::Pos, Task::Ner, Task::Dep, Task::Sdp, Task::Srl];

    pub fn name(self) -> &'static str {
        match self {
            Task::Cws => "cws",
            Task::Pos => "pos",
            Task::Ner => "ner",
            Task::Dep => "dep",
            Task::Sdp => "sdp",
            Task::Srl => "srl",
        }
    }

    /// Tasks whose positions are words rather than characters.
    pub fn is_word_level(self) -> bool {
        matches!(self, Task::Pos | Task::Dep | Task::Sdp | Task::Srl)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| {
            Error::Data(format!(
                "unknown task {s:?} (expected one of cws, pos, ner, dep, sdp, srl)"
            ))
        })
    }
}

/// Ordered label inventory of one task. File format: one label per line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelSet {
    pub fn new(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Data("empty label inventory".into()));
        }
        let mut index = HashMap::new();
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || l.contains(char::is_whitespace) {
                return Err(Error::Data(format!("invalid label {l:?}")));
            }
            if index.insert(l.clone(), i).is_some() {
                return Err(Error::Data(format!("duplicate label {l:?}")));
            }
        }
        Ok(LabelSet { labels, index })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn require(&self, label: &str) -> Result<usize> {
        self.index(label)
            .ok_or_else(|| Error::Data(format!("label {label:?} not in inventory")))
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn to_text(&self) -> String {
        self.labels.iter().map(|l| format!("{l}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::new(text.lines().map(str::to_string).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn task_names_roundtrip() {
        for t in Task::ALL {
            assert_eq!(t.name().parse::<Task>().unwrap(), t);
        }
        assert!("parse".parse::<Task>().is_err());
    }

    #[test]
    fn labels_roundtrip_and_reject_duplicates() {
        let l = LabelSet::new(vec!["B".into(), "M".into()]).unwrap();
        assert_eq!(LabelSet::from_text(&l.to_text()).unwrap(), l);
        assert!(LabelSet::new(vec!["B".into(), "B".into()]).is_err());
    }
}
