//! Reference implementations shared by the integration tests. Each one is
//! written from the definition, independently of the library code paths.
#![allow(dead_code)]

use std::collections::BTreeMap;

use miniltp::autodiff::Graph;
use miniltp::decode::crf::CrfParams;
use miniltp::encoder::EncoderConfig;
use miniltp::model::{infer_labels, HeadsConfig, MultiTaskModel};
use miniltp::params::ParamId;
use miniltp::sentence::AnnotatedSentence;
use miniltp::tensor::Tensor;
use miniltp::toy::toy_corpus;
use miniltp::vocab::Vocab;
use miniltp::Task;
use rand::Rng;

/// Every projective tree over `n` words rooted at 0, as head arrays.
/// Heads are assigned left to right; an arc is rejected as soon as it
/// crosses an earlier one, and cycles are rejected at the end.
pub fn projective_trees(n: usize) -> Vec<Vec<usize>> {
    fn crosses(a: (usize, usize), b: (usize, usize)) -> bool {
        let (l1, r1) = (a.0.min(a.1), a.0.max(a.1));
        let (l2, r2) = (b.0.min(b.1), b.0.max(b.1));
        (l1 < l2 && l2 < r1 && r1 < r2) || (l2 < l1 && l1 < r2 && r2 < r1)
    }
    fn acyclic(heads: &[usize]) -> bool {
        (1..=heads.len()).all(|start| {
            let mut node = start;
            for _ in 0..=heads.len() {
                if node == 0 {
                    return true;
                }
                node = heads[node - 1];
            }
            false
        })
    }
    fn go(n: usize, heads: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        let d = heads.len() + 1;
        if d > n {
            if acyclic(heads) {
                out.push(heads.clone());
            }
            return;
        }
        for h in 0..=n {
            if h == d {
                continue;
            }
            let ok = heads.iter().enumerate().all(|(i, &hh)| !crosses((hh, i + 1), (h, d)));
            if ok {
                heads.push(h);
                go(n, heads, out);
                heads.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(n, &mut Vec::new(), &mut out);
    out
}

pub fn tree_total(scores: &Tensor, heads: &[usize]) -> f64 {
    heads.iter().enumerate().map(|(i, &h)| scores.at(h, i + 1)).sum()
}

/// Every label sequence of length `n` over `l` labels, in lexicographic order.
pub fn sequences(n: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..l).map(move |y| {
                    let mut t = s.clone();
                    t.push(y);
                    t
                })
            })
            .collect();
    }
    out
}

pub fn chain_score(emissions: &Tensor, crf: &CrfParams, seq: &[usize]) -> f64 {
    let mut s = crf.start[seq[0]] + crf.end[seq[seq.len() - 1]];
    for (i, &y) in seq.iter().enumerate() {
        s += emissions.at(i, y);
        if i > 0 {
            s += crf.transitions[seq[i - 1]][y];
        }
    }
    s
}

pub fn random_crf(l: usize, rng: &mut impl Rng) -> CrfParams {
    let mut v = || rng.gen_range(-2.0..2.0);
    CrfParams {
        transitions: (0..l).map(|_| (0..l).map(|_| v()).collect()).collect(),
        start: (0..l).map(|_| v()).collect(),
        end: (0..l).map(|_| v()).collect(),
    }
}

pub fn random_tensor(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-scale..scale))
}

/// Small randomly initialized model with every head, plus its corpus.
pub fn toy_model(seed: u64) -> (MultiTaskModel, Vec<AnnotatedSentence>) {
    let corpus = toy_corpus(12, seed);
    let vocab = Vocab::build(corpus.iter().map(|s| s.text.as_str()), 1);
    let labels: BTreeMap<Task, _> = Task::ALL
        .iter()
        .map(|&t| (t, infer_labels(t, &corpus).unwrap()))
        .collect();
    let encoder = EncoderConfig {
        vocab_size: vocab.len(),
        width: 8,
        layers: 1,
        heads: 2,
        ffn_width: 12,
        max_len: 40,
        dropout: 0.1,
        seed,
    };
    let heads = HeadsConfig {
        mlp_width: 6,
        ner_adapted_layers: 1,
        single_root: false,
    };
    (MultiTaskModel::new(encoder, heads, vocab, labels).unwrap(), corpus)
}

/// Gold loss of one task on one sentence, without dropout.
pub fn task_loss(model: &MultiTaskModel, task: Task, s: &AnnotatedSentence) -> f64 {
    let mut g = Graph::new();
    let parts = model.loss_parts(&mut g, task, s).unwrap();
    parts.iter().map(|p| g.value(p.gold_loss).item()).sum()
}

pub struct GradCheck {
    pub name: String,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheck {
    /// Relative error with the denominator floored at 1e-2, so gradients
    /// near zero are compared absolutely at 1e-6.
    pub fn relative_error(&self) -> f64 {
        (self.analytic - self.numeric).abs() / self.analytic.abs().max(self.numeric.abs()).max(1e-2)
    }
}

/// Central finite differences (step 1e-4) against backward for randomly
/// chosen elements of `params` with a non-negligible analytic gradient.
pub fn check_gradients(
    model: &mut MultiTaskModel,
    task: Task,
    s: &AnnotatedSentence,
    params: &[ParamId],
    count: usize,
    rng: &mut impl Rng,
) -> Vec<GradCheck> {
    let mut g = Graph::new();
    let parts = model.loss_parts(&mut g, task, s).unwrap();
    let losses: Vec<_> = parts.iter().map(|p| p.gold_loss).collect();
    let loss = g.add_all(&losses).unwrap();
    let grads = g.backward(loss).unwrap();
    let analytic: BTreeMap<ParamId, Tensor> = grads.params().map(|(id, t)| (id, t.clone())).collect();
    let mut candidates = Vec::new();
    for &id in params {
        if let Some(t) = analytic.get(&id) {
            for (k, &v) in t.data().iter().enumerate() {
                if v.abs() > 1e-6 {
                    candidates.push((id, k, v));
                }
            }
        }
    }
    assert!(!candidates.is_empty(), "no parameter of the group receives a gradient");
    let eps = 1e-4;
    (0..count)
        .map(|_| {
            let (id, k, a) = candidates[rng.gen_range(0..candidates.len())];
            let original = model.store.value(id).data()[k];
            model.store.value_mut(id).data_mut()[k] = original + eps;
            let plus = task_loss(model, task, s);
            model.store.value_mut(id).data_mut()[k] = original - eps;
            let minus = task_loss(model, task, s);
            model.store.value_mut(id).data_mut()[k] = original;
            GradCheck {
                name: format!("{}[{k}]", model.store.param(id).name),
                analytic: a,
                numeric: (plus - minus) / (2.0 * eps),
            }
        })
        .collect()
}
