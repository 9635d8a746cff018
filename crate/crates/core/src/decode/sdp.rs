//! Relation assignment for trees and thresholded graph decoding.

use crate::error::{Error, Result};
use crate::sentence::{DependencyGraph, DependencyTree, SdpEdge};
use crate::task::LabelSet;
use crate::tensor::Tensor;

/// `(n + 1) x (n + 1) x L` relation scores, indexed `[head][dependent][label]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledArcScores(Tensor);

impl LabeledArcScores {
    pub fn new(scores: Tensor) -> Result<Self> {
        match scores.shape() {
            &[a, b, l] if a == b && a > 0 && l > 0 => Ok(LabeledArcScores(scores)),
            other => Err(Error::Shape {
                op: "labeled arc scores",
                left: other.to_vec(),
                right: vec![],
            }),
        }
    }

    pub fn words(&self) -> usize {
        self.0.shape()[0] - 1
    }

    pub fn labels(&self) -> usize {
        self.0.shape()[2]
    }

    pub fn score(&self, head: usize, dependent: usize, label: usize) -> f64 {
        self.0.at3(head, dependent, label)
    }

    /// Lowest label index with the highest score at one cell.
    pub fn best_label(&self, head: usize, dependent: usize) -> usize {
        let mut best = 0;
        for l in 1..self.labels() {
            if self.score(head, dependent, l) > self.score(head, dependent, best) {
                best = l;
            }
        }
        best
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Labels each arc of a tree by its best relation.
pub fn assign_labels(heads: &[usize], labeled: &LabeledArcScores, inventory: &LabelSet) -> Result<DependencyTree> {
    if heads.len() != labeled.words() || inventory.len() != labeled.labels() {
        return Err(Error::contract(
            "tree, relation scores and label inventory disagree in size",
        ));
    }
    let labels = heads
        .iter()
        .enumerate()
        .map(|(i, &h)| inventory.label(labeled.best_label(h, i + 1)).to_string())
        .collect();
    Ok(DependencyTree {
        heads: heads.to_vec(),
        labels,
    })
}

/// Keeps every edge with probability strictly above 0.5. A word left with
/// no head attaches to its most probable head (lowest index on ties), so
/// every word has at least one incoming edge. The root has no heads.
/// Reported probabilities are floored at the smallest positive `f64`, so a
/// fallback edge whose probability underflowed still lies in `(0, 1]`.
pub fn sdp_decode(probs: &Tensor, labeled: &LabeledArcScores, inventory: &LabelSet) -> Result<DependencyGraph> {
    let (rows, cols) = probs.dims2("sdp_decode")?;
    let n = labeled.words();
    if rows != n + 1 || cols != n + 1 || inventory.len() != labeled.labels() {
        return Err(Error::contract(
            "edge probabilities, relation scores and inventory disagree in size",
        ));
    }
    let mut edges = Vec::new();
    for d in 1..=n {
        let before = edges.len();
        for h in 0..=n {
            if h != d && probs.at(h, d) > 0.5 {
                edges.push((h, d));
            }
        }
        if edges.len() == before {
            let mut best = 0;
            for h in 0..=n {
                if h != d && probs.at(h, d) > probs.at(best, d) {
                    best = h;
                }
            }
            edges.push((best, d));
        }
    }
    let mut graph = DependencyGraph {
        edges: edges
            .into_iter()
            .map(|(h, d)| SdpEdge {
                head: h,
                dependent: d,
                relation: inventory.label(labeled.best_label(h, d)).to_string(),
                prob: probs.at(h, d).max(f64::MIN_POSITIVE),
            })
            .collect(),
    };
    graph.sort();
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inventory(n: usize) -> LabelSet {
        LabelSet::new((0..n).map(|i| format!("R{i}")).collect()).unwrap()
    }

    #[test]
    fn half_probabilities_fall_back_to_lowest_head() {
        let probs = Tensor::full(&[4, 4], 0.5);
        let labeled = LabeledArcScores::new(Tensor::zeros(&[4, 4, 2])).unwrap();
        let g = sdp_decode(&probs, &labeled, &inventory(2)).unwrap();
        let pairs: Vec<_> = g.edges.iter().map(|e| (e.head, e.dependent)).collect();
        assert_eq!(pairs, vec![(0, 1), (0, 2), (0, 3)]);
        assert!(g.edges.iter().all(|e| e.relation == "R0"));
    }

    #[test]
    fn confident_edges_kept_exactly() {
        let mut probs = Tensor::zeros(&[3, 3]);
        probs.set(0, 1, 1.0);
        probs.set(1, 2, 1.0);
        let labeled = LabeledArcScores::new(Tensor::zeros(&[3, 3, 1])).unwrap();
        let g = sdp_decode(&probs, &labeled, &inventory(1)).unwrap();
        let pairs: Vec<_> = g.edges.iter().map(|e| (e.head, e.dependent)).collect();
        assert_eq!(pairs, vec![(0, 1), (1, 2)]);
        g.validate(2).unwrap();
    }

    #[test]
    fn single_label_inventory_labels_everything_zero() {
        let labeled = LabeledArcScores::new(Tensor::from_fn(&[3, 3, 1], |k| k as f64)).unwrap();
        let t = assign_labels(&[2, 0], &labeled, &inventory(1)).unwrap();
        assert_eq!(t.labels, vec!["R0", "R0"]);
    }

    #[test]
    fn dominant_label_chosen() {
        let mut scores = Tensor::zeros(&[3, 3, 3]);
        // head 2 -> dep 1 prefers label 2; head 0 -> dep 2 prefers label 1
        scores.data_mut()[(2 * 3 + 1) * 3 + 2] = 4.0;
        scores.data_mut()[2 * 3 + 1] = 4.0;
        let labeled = LabeledArcScores::new(scores).unwrap();
        let t = assign_labels(&[2, 0], &labeled, &inventory(3)).unwrap();
        assert_eq!(t.labels, vec!["R2", "R1"]);
    }
}
