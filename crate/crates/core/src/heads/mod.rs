//! Task-specific scoring heads over the shared encoder output.
//!
//! Character-level heads (segmentation, entities) read rows `1..=n` of the
//! encoder output. Word-level heads represent each word by the hidden vector
//! of its first character; parsers additionally use the `[CLS]` row as the
//! virtual root at index 0.

pub mod biaffine;
pub mod crf;
pub mod srl;

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{softmax, Graph, Var};
use crate::encoder::{AdaptedAttention, EncodedSequence, EncoderConfig};
use crate::error::{Error, Result};
use crate::nn::Linear;
use crate::params::ParamStore;
use crate::sentence::Span;
use crate::tensor::Tensor;

pub use biaffine::{sdp_edge_probs, Biaffine, ParserHead};
pub use crf::{crf_log_likelihood, CrfLayer};
pub use srl::SrlHead;

/// Per-position label distributions, `n x L`.
#[derive(Clone, Debug, PartialEq)]
pub struct TagDistribution {
    pub probs: Tensor,
}

impl TagDistribution {
    pub fn from_logits(logits: &Tensor) -> Self {
        TagDistribution { probs: softmax(logits) }
    }

    pub fn len(&self) -> usize {
        self.probs.num_rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Most probable label per position, lowest index on ties.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.len())
            .map(|i| {
                let row = self.probs.row(i);
                let mut best = 0;
                for (j, &p) in row.iter().enumerate() {
                    if p > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Rows of the characters, without `[CLS]` and `[SEP]`.
pub fn char_rows(g: &mut Graph, enc: &EncodedSequence) -> Result<Var> {
    g.slice_rows(enc.hidden, 1, enc.len())
}

/// First-character rows of each word, optionally preceded by the `[CLS]`
/// row standing for the root.
pub fn word_rows(g: &mut Graph, enc: &EncodedSequence, words: &[Span], root: bool) -> Result<Var> {
    let mut rows = Vec::with_capacity(words.len() + 1);
    if root {
        rows.push(0);
    }
    for w in words {
        if w.start >= enc.len() {
            return Err(Error::contract(format!(
                "word starting at {} outside sentence of {} characters",
                w.start,
                enc.len()
            )));
        }
        rows.push(w.start + 1);
    }
    g.select_rows(enc.hidden, &rows)
}

/// Linear classifier per position: segmentation and part-of-speech tags.
#[derive(Clone, Debug)]
pub struct TagHead {
    pub linear: Linear,
    pub labels: usize,
}

impl TagHead {
    pub fn new(store: &mut ParamStore, name: &str, width: usize, labels: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(TagHead {
            linear: Linear::new(store, name, width, labels, rng)?,
            labels,
        })
    }

    /// Unnormalized scores for `rows` (`n x d`), `n x L`.
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, rows: Var) -> Result<Var> {
        self.linear.forward(g, store, rows)
    }

    pub fn distribution(&self, g: &mut Graph, store: &ParamStore, rows: Var) -> Result<TagDistribution> {
        let logits = self.logits(g, store, rows)?;
        Ok(TagDistribution::from_logits(g.value(logits)))
    }
}

/// Entity tagger: relative-position attention layers, then a linear
/// classifier over BIO labels. With zero layers it is a plain [`TagHead`].
#[derive(Clone, Debug)]
pub struct NerHead {
    pub layers: Vec<AdaptedAttention>,
    pub tag: TagHead,
}

impl NerHead {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        config: &EncoderConfig,
        layers: usize,
        labels: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let layers = (0..layers)
            .map(|l| AdaptedAttention::new(store, &format!("{name}.adapted{l}"), config, rng))
            .collect::<Result<_>>()?;
        Ok(NerHead {
            layers,
            tag: TagHead::new(store, &format!("{name}.classifier"), config.width, labels, rng)?,
        })
    }

    pub fn logits(&self, g: &mut Graph, store: &ParamStore, enc: &EncodedSequence) -> Result<Var> {
        let mut h = enc.hidden;
        for layer in &self.layers {
            h = layer.forward(g, store, h)?;
        }
        let rows = g.slice_rows(h, 1, enc.len())?;
        self.tag.logits(g, store, rows)
    }
}

/// Mean negative log-likelihood of `gold` classes under row-wise softmax.
pub fn class_nll(g: &mut Graph, logits: Var, gold: &[usize]) -> Result<Var> {
    let (rows, cols) = g.value(logits).dims2("class_nll")?;
    if gold.len() != rows {
        return Err(Error::Shape {
            op: "class_nll",
            left: vec![rows, cols],
            right: vec![gold.len()],
        });
    }
    if let Some(&bad) = gold.iter().find(|&&y| y >= cols) {
        return Err(Error::contract(format!("gold class {bad} outside {cols} labels")));
    }
    let logp = g.log_softmax(logits)?;
    let idx = gold.iter().enumerate().map(|(i, &y)| i * cols + y).collect();
    let picked = g.gather(logp, idx, &[rows])?;
    let total = g.mean(picked);
    Ok(g.scale(total, -1.0))
}

/// Mean cross-entropy against soft targets (`rows x L`, each row a
/// distribution) under row-wise softmax.
pub fn soft_nll(g: &mut Graph, logits: Var, targets: &Tensor) -> Result<Var> {
    if g.shape(logits) != targets.shape() {
        return Err(Error::contract(format!(
            "soft targets {:?} do not match scores {:?}",
            targets.shape(),
            g.shape(logits)
        )));
    }
    let rows = targets.num_rows().max(1) as f64;
    let logp = g.log_softmax(logits)?;
    let t = g.constant(targets.clone());
    let weighted = g.mul(logp, t)?;
    let total = g.sum(weighted);
    Ok(g.scale(total, -1.0 / rows))
}

/// Mean binary cross-entropy of independent logits against targets in
/// `[0, 1]`: `log(1 + e^x) - t x` per cell.
pub fn binary_nll(g: &mut Graph, logits: Var, targets: &Tensor) -> Result<Var> {
    let n = g.value(logits).numel();
    if targets.numel() != n {
        return Err(Error::contract(format!(
            "{} binary targets for {n} scores",
            targets.numel()
        )));
    }
    let x = g.reshape(logits, &[n, 1])?;
    let zeros = g.constant(Tensor::zeros(&[n, 1]));
    let pair = g.concat(&[zeros, x], 1)?;
    let softplus = g.logsumexp(pair)?;
    let t = g.constant(targets.clone().reshape(&[n])?);
    let flat = g.reshape(logits, &[n])?;
    let tx = g.mul(t, flat)?;
    let cell = g.sub(softplus, tx)?;
    Ok(g.mean(cell))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    #[test]
    fn zero_weights_give_uniform_rows() {
        let mut store = ParamStore::new();
        let head = TagHead::new(&mut store, "tag", 3, 4, &mut rng()).unwrap();
        *store.value_mut(head.linear.weight) = Tensor::zeros(&[3, 4]);
        let mut g = Graph::new();
        let rows = g.constant(Tensor::from_fn(&[3, 3], |k| k as f64 - 4.0));
        let dist = head.distribution(&mut g, &store, rows).unwrap();
        assert_eq!(dist.probs.shape(), &[3, 4]);
        assert!(dist.probs.data().iter().all(|&p| (p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn hand_computed_softmax() {
        let mut store = ParamStore::new();
        let head = TagHead::new(&mut store, "tag", 2, 2, &mut rng()).unwrap();
        *store.value_mut(head.linear.weight) = Tensor::from_rows(&[vec![1.0, -1.0], vec![0.5, 2.0]]).unwrap();
        *store.value_mut(head.linear.bias) = Tensor::new(&[2], vec![0.25, 0.0]).unwrap();
        let mut g = Graph::new();
        let h = g.constant(Tensor::from_rows(&[vec![2.0, 1.0]]).unwrap());
        let dist = head.distribution(&mut g, &store, h).unwrap();
        // z = [2 + 0.5 + 0.25, -2 + 2] = [2.75, 0]
        let p0 = 1.0 / (1.0 + (-2.75f64).exp());
        assert!((dist.probs.at(0, 0) - p0).abs() < 1e-15);
        assert!((dist.probs.at(0, 1) - (1.0 - p0)).abs() < 1e-15);
    }

    #[test]
    fn one_hot_soft_targets_equal_class_nll() {
        let mut g = Graph::new();
        let logits = g.constant(Tensor::from_fn(&[3, 4], |k| ((k * 7) % 5) as f64 * 0.3));
        let gold = [1, 3, 0];
        let one_hot = Tensor::from_fn(&[3, 4], |k| if gold[k / 4] == k % 4 { 1.0 } else { 0.0 });
        let a = class_nll(&mut g, logits, &gold).unwrap();
        let b = soft_nll(&mut g, logits, &one_hot).unwrap();
        assert!((g.value(a).item() - g.value(b).item()).abs() < 1e-14);
    }

    #[test]
    fn binary_nll_matches_formula() {
        let mut g = Graph::new();
        let logits = g.constant(Tensor::new(&[2], vec![0.0, 3.0]).unwrap());
        let t = Tensor::new(&[2], vec![1.0, 0.0]).unwrap();
        let l = binary_nll(&mut g, logits, &t).unwrap();
        let expected = (2f64.ln() + (1.0 + 3f64.exp()).ln()) / 2.0;
        assert!((g.value(l).item() - expected).abs() < 1e-14);
    }
}
