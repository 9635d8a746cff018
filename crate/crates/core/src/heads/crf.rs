//! Differentiable linear-chain CRF likelihood.

use crate::autodiff::{Graph, Var};
use crate::decode::CrfParams;
use crate::error::{Error, Result};
use crate::params::{ParamGroup, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Transition and boundary scores, trained with their own learning rate.
#[derive(Clone, Debug)]
pub struct CrfLayer {
    pub transitions: ParamId,
    pub start: ParamId,
    pub end: ParamId,
    pub labels: usize,
}

impl CrfLayer {
    pub fn new(store: &mut ParamStore, name: &str, labels: usize) -> Result<Self> {
        let mut add = |suffix: &str, shape: &[usize]| {
            store.add(&format!("{name}.{suffix}"), Tensor::zeros(shape), ParamGroup::Crf)
        };
        Ok(CrfLayer {
            transitions: add("transitions", &[labels, labels])?,
            start: add("start", &[labels])?,
            end: add("end", &[labels])?,
            labels,
        })
    }

    /// Plain copy of the scores for decoding.
    pub fn params(&self, store: &ParamStore) -> CrfParams {
        let t = store.value(self.transitions);
        CrfParams {
            transitions: (0..self.labels).map(|i| t.row(i).to_vec()).collect(),
            start: store.value(self.start).data().to_vec(),
            end: store.value(self.end).data().to_vec(),
        }
    }

    pub fn log_likelihood(&self, g: &mut Graph, store: &ParamStore, emissions: Var, gold: &[usize]) -> Result<Var> {
        let t = g.param(store, self.transitions);
        let s = g.param(store, self.start);
        let e = g.param(store, self.end);
        crf_log_likelihood(g, emissions, t, s, e, gold)
    }
}

/// `log P(gold)`: the gold path score minus `log Z` from the forward
/// algorithm. `emissions` is `n x L`, `transitions` is `L x L` (from, to),
/// `start` and `end` have `L` entries.
pub fn crf_log_likelihood(
    g: &mut Graph,
    emissions: Var,
    transitions: Var,
    start: Var,
    end: Var,
    gold: &[usize],
) -> Result<Var> {
    let (n, l) = g.value(emissions).dims2("crf_log_likelihood")?;
    if n == 0 {
        return Err(Error::contract("CRF over an empty sequence"));
    }
    if gold.len() != n {
        return Err(Error::contract(format!("{} gold labels for {n} positions", gold.len())));
    }
    if let Some(&bad) = gold.iter().find(|&&y| y >= l) {
        return Err(Error::contract(format!("gold label {bad} outside {l} labels")));
    }
    if g.shape(transitions) != [l, l] || g.value(start).numel() != l || g.value(end).numel() != l {
        return Err(Error::Shape {
            op: "crf_log_likelihood",
            left: vec![n, l],
            right: g.shape(transitions).to_vec(),
        });
    }

    let emitted = g.gather(
        emissions,
        gold.iter().enumerate().map(|(i, &y)| i * l + y).collect(),
        &[n],
    )?;
    let mut parts = vec![g.sum(emitted)];
    if n > 1 {
        let idx = gold.windows(2).map(|w| w[0] * l + w[1]).collect();
        let moved = g.gather(transitions, idx, &[n - 1])?;
        parts.push(g.sum(moved));
    }
    let first = g.gather(start, vec![gold[0]], &[])?;
    let last = g.gather(end, vec![gold[n - 1]], &[])?;
    parts.push(first);
    parts.push(last);
    let gold_score = g.add_all(&parts)?;

    let row = |g: &mut Graph, t: usize| -> Result<Var> {
        let r = g.slice_rows(emissions, t, 1)?;
        g.reshape(r, &[l])
    };
    let start_flat = g.reshape(start, &[l])?;
    let end_flat = g.reshape(end, &[l])?;
    let e0 = row(g, 0)?;
    let mut alpha = g.add(start_flat, e0)?;
    if n > 1 {
        let incoming = g.transpose(transitions)?;
        for t in 1..n {
            // cell (to, from) = transitions[from][to] + alpha[from]
            let cells = g.add_row(incoming, alpha)?;
            let reached = g.logsumexp(cells)?;
            let et = row(g, t)?;
            alpha = g.add(reached, et)?;
        }
    }
    let closing = g.add(alpha, end_flat)?;
    let log_z = g.logsumexp(closing)?;
    g.sub(gold_score, log_z)
}
