//! Sentence-level annotation types shared by the readers, the decoders and
//! the pipeline.
//!
//! Character offsets count Unicode scalar values. Word indices in
//! dependency structures are 1-based, with 0 standing for the virtual root;
//! predicate and argument indices in semantic roles are 0-based word
//! indices with half-open argument ranges.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-open range `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// True when `spans` are contiguous, non-empty, and cover `[0, n)` exactly.
pub fn is_partition(spans: &[Span], n: usize) -> bool {
    let mut pos = 0;
    for s in spans {
        if s.start != pos || s.end <= s.start {
            return false;
        }
        pos = s.end;
    }
    pos == n
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entity {
    pub start: usize,
    pub end: usize,
    #[serde(rename = "type")]
    pub kind: String,
}

/// Projective or non-projective dependency tree over `n` words.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DependencyTree {
    /// `heads[d - 1]` is the head of word `d`; 0 is the root.
    pub heads: Vec<usize>,
    pub labels: Vec<String>,
}

impl DependencyTree {
    pub fn len(&self) -> usize {
        self.heads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heads.is_empty()
    }

    /// Checks that every word reaches the root without cycles.
    pub fn validate(&self) -> Result<()> {
        check_tree(&self.heads)?;
        if self.labels.len() != self.heads.len() {
            return Err(Error::Data(format!(
                "tree has {} heads but {} labels",
                self.heads.len(),
                self.labels.len()
            )));
        }
        Ok(())
    }

    pub fn is_projective(&self) -> bool {
        is_projective(&self.heads)
    }
}

/// Checks that `heads` (1-based words, 0 = root) forms a single tree.
pub fn check_tree(heads: &[usize]) -> Result<()> {
    let n = heads.len();
    for (i, &h) in heads.iter().enumerate() {
        if h > n || h == i + 1 {
            return Err(Error::Data(format!("word {} has invalid head {h}", i + 1)));
        }
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches root
    let mut state = vec![0u8; n + 1];
    state[0] = 2;
    for start in 1..=n {
        let mut path = Vec::new();
        let mut cur = start;
        while state[cur] == 0 {
            state[cur] = 1;
            path.push(cur);
            cur = heads[cur - 1];
        }
        if state[cur] == 1 {
            return Err(Error::Data(format!("cycle through word {cur}")));
        }
        for p in path {
            state[p] = 2;
        }
    }
    Ok(())
}

/// True if no two arcs (including root arcs from position 0) cross.
pub fn is_projective(heads: &[usize]) -> bool {
    let arcs: Vec<(usize, usize)> = heads
        .iter()
        .enumerate()
        .map(|(i, &h)| (h.min(i + 1), h.max(i + 1)))
        .collect();
    for (a, &(l1, r1)) in arcs.iter().enumerate() {
        for &(l2, r2) in &arcs[a + 1..] {
            if (l1 < l2 && l2 < r1 && r1 < r2) || (l2 < l1 && l1 < r2 && r2 < r1) {
                return false;
            }
        }
    }
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdpEdge {
    pub head: usize,
    pub dependent: usize,
    pub relation: String,
    pub prob: f64,
}

/// Semantic dependency graph; words may have several heads.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DependencyGraph {
    /// Sorted by `(dependent, head)`.
    pub edges: Vec<SdpEdge>,
}

impl DependencyGraph {
    pub fn sort(&mut self) {
        self.edges.sort_by_key(|e| (e.dependent, e.head));
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for e in &self.edges {
            if e.dependent == 0 || e.dependent > n || e.head > n {
                return Err(Error::Data(format!(
                    "edge {}->{} outside sentence of {n} words",
                    e.head, e.dependent
                )));
            }
            if e.head == e.dependent {
                return Err(Error::Data(format!("self-loop on word {}", e.head)));
            }
            if !(e.prob > 0.0 && e.prob <= 1.0) {
                return Err(Error::Data(format!(
                    "edge {}->{} has probability {} outside (0, 1]",
                    e.head, e.dependent, e.prob
                )));
            }
        }
        for w in self.edges.windows(2) {
            if (w[0].dependent, w[0].head) >= (w[1].dependent, w[1].head) {
                return Err(Error::Data("duplicate or unsorted semantic edges".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Argument {
    pub start: usize,
    pub end: usize,
    pub role: String,
}

/// One predicate with its role-labeled arguments.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub predicate: usize,
    pub arguments: Vec<Argument>,
}

/// A sentence with any subset of the six annotation layers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedSentence {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub words: Option<Vec<Span>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<Entity>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dep: Option<DependencyTree>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sdp: Option<DependencyGraph>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub srl: Option<Vec<Frame>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comments: Vec<String>,
}

impl AnnotatedSentence {
    pub fn new(text: impl Into<String>) -> Self {
        AnnotatedSentence {
            text: text.into(),
            ..Default::default()
        }
    }

    pub fn chars(&self) -> Vec<char> {
        self.text.chars().collect()
    }

    pub fn num_chars(&self) -> usize {
        self.text.chars().count()
    }

    pub fn num_words(&self) -> Option<usize> {
        self.words.as_ref().map(Vec::len)
    }

    /// Surface strings of the words.
    pub fn word_forms(&self) -> Option<Vec<String>> {
        let chars = self.chars();
        self.words
            .as_ref()
            .map(|ws| ws.iter().map(|s| chars[s.start..s.end].iter().collect()).collect())
    }

    /// Checks every structural invariant of the layers that are present.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_chars();
        let fail = |msg: String| Err(Error::Data(msg));
        if let Some(words) = &self.words {
            if !is_partition(words, n) {
                return fail(format!("word spans do not partition {n} characters"));
            }
        }
        let needs_words = |layer: &str| {
            self.num_words()
                .ok_or_else(|| Error::Data(format!("{layer} annotation without word segmentation")))
        };
        if let Some(pos) = &self.pos {
            let m = needs_words("pos")?;
            if pos.len() != m {
                return fail(format!("{} tags for {m} words", pos.len()));
            }
        }
        if let Some(entities) = &self.entities {
            let mut last = 0;
            for e in entities {
                if e.start < last || e.end <= e.start || e.end > n {
                    return fail(format!("entity {}..{} overlaps or is out of bounds", e.start, e.end));
                }
                last = e.end;
            }
        }
        if let Some(dep) = &self.dep {
            let m = needs_words("dependency")?;
            if dep.len() != m {
                return fail(format!("{} heads for {m} words", dep.len()));
            }
            dep.validate()?;
        }
        if let Some(sdp) = &self.sdp {
            let m = needs_words("semantic dependency")?;
            sdp.validate(m)?;
        }
        if let Some(frames) = &self.srl {
            let m = needs_words("semantic role")?;
            for f in frames {
                if f.predicate >= m {
                    return fail(format!("predicate {} outside {m} words", f.predicate));
                }
                let mut last = 0;
                for a in &f.arguments {
                    if a.start < last || a.end <= a.start || a.end > m {
                        return fail(format!("argument {}..{} overlaps or is out of bounds", a.start, a.end));
                    }
                    last = a.end;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_check() {
        assert!(is_partition(&[Span::new(0, 2), Span::new(2, 3)], 3));
        assert!(!is_partition(&[Span::new(0, 2), Span::new(3, 4)], 4));
        assert!(!is_partition(&[Span::new(0, 2)], 3));
        assert!(is_partition(&[], 0));
    }

    #[test]
    fn tree_checks() {
        assert!(check_tree(&[2, 0]).is_ok());
        assert!(check_tree(&[2, 1]).is_err());
        assert!(check_tree(&[1]).is_err());
        assert!(check_tree(&[0, 0, 2]).is_ok());
    }

    #[test]
    fn projectivity() {
        assert!(is_projective(&[2, 0, 2]));
        // 1 -> 3 crosses 2 -> 4
        assert!(!is_projective(&[3, 4, 0, 3]));
        // root arc 0 -> 3 crosses 2 -> 4
        assert!(!is_projective(&[0, 4, 0, 1]));
    }
}
