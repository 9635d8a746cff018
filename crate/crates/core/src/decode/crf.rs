//! Linear-chain CRF inference on plain score tables.

use serde::{Deserialize, Serialize};

use crate::autodiff::log_sum_exp;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Transition scores (`from x to`) plus start and end boundary scores.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    pub transitions: Vec<Vec<f64>>,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
}

impl CrfParams {
    pub fn zeros(labels: usize) -> Self {
        CrfParams {
            transitions: vec![vec![0.0; labels]; labels],
            start: vec![0.0; labels],
            end: vec![0.0; labels],
        }
    }

    pub fn labels(&self) -> usize {
        self.start.len()
    }

    fn check(&self, emissions: &Tensor) -> Result<(usize, usize)> {
        let (n, l) = emissions.dims2("crf")?;
        if n == 0 {
            return Err(Error::contract("CRF over an empty sequence"));
        }
        if l != self.labels() || self.end.len() != l || self.transitions.len() != l {
            return Err(Error::Shape {
                op: "crf",
                left: emissions.shape().to_vec(),
                right: vec![self.labels()],
            });
        }
        Ok((n, l))
    }
}

/// Unnormalized score of one label sequence.
pub fn sequence_score(emissions: &Tensor, crf: &CrfParams, labels: &[usize]) -> f64 {
    let mut score = crf.start[labels[0]];
    for (t, &y) in labels.iter().enumerate() {
        if t > 0 {
            score += crf.transitions[labels[t - 1]][y];
        }
        score += emissions.at(t, y);
    }
    score + crf.end[labels[labels.len() - 1]]
}

/// `log Z` by the forward algorithm.
pub fn log_partition(emissions: &Tensor, crf: &CrfParams) -> Result<f64> {
    let (n, l) = crf.check(emissions)?;
    let mut alpha: Vec<f64> = (0..l).map(|j| crf.start[j] + emissions.at(0, j)).collect();
    let mut scratch = vec![0.0; l];
    for t in 1..n {
        let next: Vec<f64> = (0..l)
            .map(|j| {
                for i in 0..l {
                    scratch[i] = alpha[i] + crf.transitions[i][j];
                }
                log_sum_exp(&scratch) + emissions.at(t, j)
            })
            .collect();
        alpha = next;
    }
    let last: Vec<f64> = (0..l).map(|j| alpha[j] + crf.end[j]).collect();
    Ok(log_sum_exp(&last))
}

/// `log P(labels)` under the CRF.
pub fn log_likelihood(emissions: &Tensor, crf: &CrfParams, labels: &[usize]) -> Result<f64> {
    let z = log_partition(emissions, crf)?;
    if labels.len() != emissions.shape()[0] {
        return Err(Error::contract("label sequence length differs from emissions"));
    }
    Ok(sequence_score(emissions, crf, labels) - z)
}

/// Highest-scoring label sequence. Among equal-scoring sequences the
/// lexicographically smallest is returned: best suffix scores are computed
/// right to left, then labels are chosen left to right taking the lowest
/// index that attains the maximum.
pub fn viterbi(emissions: &Tensor, crf: &CrfParams) -> Result<Vec<usize>> {
    let (n, l) = crf.check(emissions)?;
    // best[t][i]: best score of positions t.. given label i at t
    let mut best = vec![vec![0.0; l]; n];
    for (i, b) in best[n - 1].iter_mut().enumerate() {
        *b = emissions.at(n - 1, i) + crf.end[i];
    }
    for t in (0..n - 1).rev() {
        for i in 0..l {
            let tail = (0..l)
                .map(|j| crf.transitions[i][j] + best[t + 1][j])
                .fold(f64::NEG_INFINITY, f64::max);
            best[t][i] = emissions.at(t, i) + tail;
        }
    }
    let argmax = |f: &dyn Fn(usize) -> f64| {
        let mut arg = 0;
        let mut top = f(0);
        for j in 1..l {
            let v = f(j);
            if v > top {
                top = v;
                arg = j;
            }
        }
        arg
    };
    let mut out = Vec::with_capacity(n);
    out.push(argmax(&|i| crf.start[i] + best[0][i]));
    for t in 1..n {
        let prev = out[t - 1];
        out.push(argmax(&|j| crf.transitions[prev][j] + best[t][j]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_transitions_give_emission_argmax() {
        let e = Tensor::from_rows(&[vec![0.1, 2.0, -1.0], vec![3.0, 0.0, 0.5]]).unwrap();
        assert_eq!(viterbi(&e, &CrfParams::zeros(3)).unwrap(), vec![1, 0]);
    }

    #[test]
    fn single_token_uses_boundaries() {
        let e = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let mut crf = CrfParams::zeros(2);
        crf.start = vec![0.0, 0.6];
        crf.end = vec![0.0, 0.6];
        assert_eq!(viterbi(&e, &crf).unwrap(), vec![1]);
        let lp = log_likelihood(&e, &crf, &[0]).unwrap();
        let expected = 1.0 - log_sum_exp(&[1.0, 1.2]);
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn uniform_model_likelihood() {
        let (n, l) = (5, 4);
        let e = Tensor::zeros(&[n, l]);
        let lp = log_likelihood(&e, &CrfParams::zeros(l), &[0, 1, 2, 3, 0]).unwrap();
        assert!((lp + n as f64 * (l as f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn ties_prefer_lexicographically_smallest() {
        let e = Tensor::zeros(&[3, 2]);
        assert_eq!(viterbi(&e, &CrfParams::zeros(2)).unwrap(), vec![0, 0, 0]);
    }

    #[test]
    fn empty_sequence_is_an_error() {
        let e = Tensor::zeros(&[0, 2]);
        assert!(log_partition(&e, &CrfParams::zeros(2)).is_err());
        assert!(viterbi(&e, &CrfParams::zeros(2)).is_err());
    }
}
