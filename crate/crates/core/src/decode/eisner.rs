//! First-order projective tree decoding with Eisner's O(n^3) dynamic
//! program over complete and incomplete spans.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `(n + 1) x (n + 1)` arc scores, `scores[h][d]` for head `h` and dependent
/// `d`. Row and column 0 are the virtual root. Diagonal entries are ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcScoreMatrix(Tensor);

impl ArcScoreMatrix {
    pub fn new(scores: Tensor) -> Result<Self> {
        let (m, n) = scores.dims2("arc scores")?;
        if m != n || m == 0 {
            return Err(Error::Shape {
                op: "arc scores",
                left: scores.shape().to_vec(),
                right: vec![],
            });
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && !scores.at(i, j).is_finite() {
                    return Err(Error::contract(format!("arc score ({i},{j}) is not finite")));
                }
            }
        }
        Ok(ArcScoreMatrix(scores))
    }

    /// Number of words (excluding the root).
    pub fn words(&self) -> usize {
        self.0.shape()[0] - 1
    }

    pub fn score(&self, head: usize, dependent: usize) -> f64 {
        self.0.at(head, dependent)
    }

    pub fn tensor(&self) -> &Tensor {
        &self.0
    }
}

/// Total score of a head assignment, summed in dependent order.
pub fn tree_score(scores: &ArcScoreMatrix, heads: &[usize]) -> f64 {
    heads.iter().enumerate().map(|(i, &h)| scores.score(h, i + 1)).sum()
}

const LEFT: usize = 0;
const RIGHT: usize = 1;

/// Highest-scoring projective tree rooted at 0.
///
/// Returns `heads` with `heads[d - 1]` the head of word `d`. With
/// `single_root` the root takes exactly one dependent. Among equal-scoring
/// split points the leftmost one is kept, so the result is deterministic.
pub fn eisner(scores: &ArcScoreMatrix, single_root: bool) -> Result<Vec<usize>> {
    let n = scores.words();
    if n == 0 {
        return Err(Error::contract("eisner needs at least one word"));
    }
    let size = n + 1;
    let idx = |s: usize, t: usize, dir: usize| (s * size + t) * 2 + dir;
    let neg = f64::NEG_INFINITY;
    let mut complete = vec![neg; size * size * 2];
    let mut incomplete = vec![neg; size * size * 2];
    let mut complete_split = vec![0usize; size * size * 2];
    let mut incomplete_split = vec![0usize; size * size * 2];
    for s in 0..size {
        complete[idx(s, s, LEFT)] = 0.0;
        complete[idx(s, s, RIGHT)] = 0.0;
    }

    for k in 1..size {
        for s in 0..size - k {
            let t = s + k;

            // incomplete spans: arc between s and t over a split r
            let mut best = neg;
            let mut best_r = s;
            let r_range = if s == 0 && single_root { s..s + 1 } else { s..t };
            for r in r_range {
                let v = complete[idx(s, r, RIGHT)] + complete[idx(r + 1, t, LEFT)];
                if v > best {
                    best = v;
                    best_r = r;
                }
            }
            // the root never takes a head
            if s > 0 {
                incomplete[idx(s, t, LEFT)] = best + scores.score(t, s);
                incomplete_split[idx(s, t, LEFT)] = best_r;
            }
            incomplete[idx(s, t, RIGHT)] = best + scores.score(s, t);
            incomplete_split[idx(s, t, RIGHT)] = best_r;

            if s > 0 {
                let mut best = neg;
                let mut best_r = s;
                for r in s..t {
                    let v = complete[idx(s, r, LEFT)] + incomplete[idx(r, t, LEFT)];
                    if v > best {
                        best = v;
                        best_r = r;
                    }
                }
                complete[idx(s, t, LEFT)] = best;
                complete_split[idx(s, t, LEFT)] = best_r;
            }

            let mut best = neg;
            let mut best_r = s + 1;
            for r in s + 1..=t {
                let v = incomplete[idx(s, r, RIGHT)] + complete[idx(r, t, RIGHT)];
                if v > best {
                    best = v;
                    best_r = r;
                }
            }
            complete[idx(s, t, RIGHT)] = best;
            complete_split[idx(s, t, RIGHT)] = best_r;
        }
    }

    let mut heads = vec![usize::MAX; n];
    // (is_complete, s, t, dir)
    let mut stack = vec![(true, 0usize, n, RIGHT)];
    while let Some((is_complete, s, t, dir)) = stack.pop() {
        if s == t {
            continue;
        }
        if is_complete {
            let r = complete_split[idx(s, t, dir)];
            if dir == LEFT {
                stack.push((true, s, r, LEFT));
                stack.push((false, r, t, LEFT));
            } else {
                stack.push((false, s, r, RIGHT));
                stack.push((true, r, t, RIGHT));
            }
        } else {
            let r = incomplete_split[idx(s, t, dir)];
            if dir == LEFT {
                heads[s - 1] = t;
            } else {
                heads[t - 1] = s;
            }
            stack.push((true, s, r, RIGHT));
            stack.push((true, r + 1, t, LEFT));
        }
    }
    debug_assert!(heads.iter().all(|&h| h <= n));
    Ok(heads)
}
