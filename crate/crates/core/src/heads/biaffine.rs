//! Deep biaffine scoring for dependency trees and semantic graphs.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{sigmoid, Graph, Var};
use crate::error::{Error, Result};
use crate::nn::Mlp;
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// `score_l(h, d) = r_dep(d) . U_l . r_head(h) + w_l . r_head(h)` with
/// `r_head = MLP_head(x)`, `r_dep = MLP_dep(x)`.
///
/// All labels share one weight `[k, L * (k + 1)]`: label `l` owns columns
/// `l * (k + 1) ..`; the first `k` of them hold `U_l` transposed and the
/// last one holds `w_l`. Appending a constant 1 to `r_dep` turns the head
/// bias into part of the same bilinear product.
#[derive(Clone, Debug)]
pub struct Biaffine {
    pub head_mlp: Mlp,
    pub dep_mlp: Mlp,
    pub weight: ParamId,
    pub labels: usize,
    pub width: usize,
}

impl Biaffine {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        width: usize,
        labels: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let head_mlp = Mlp::new(store, &format!("{name}.head_mlp"), input, width, dropout, rng)?;
        let dep_mlp = Mlp::new(store, &format!("{name}.dep_mlp"), input, width, dropout, rng)?;
        let bound = (6.0 / (2 * width + 1) as f64).sqrt();
        let weight = store.add_uniform(&format!("{name}.weight"), &[width, labels * (width + 1)], bound, rng)?;
        Ok(Biaffine {
            head_mlp,
            dep_mlp,
            weight,
            labels,
            width,
        })
    }

    /// Scores for every ordered pair of the `m` rows: `[m * m, L]` with row
    /// `h * m + d`.
    pub fn scores(&self, g: &mut Graph, store: &ParamStore, rows: Var) -> Result<Var> {
        let m = g.shape(rows)[0];
        let (k, l) = (self.width, self.labels);
        let r_head = self.head_mlp.forward(g, store, rows)?;
        let r_dep = self.dep_mlp.forward(g, store, rows)?;
        let ones = g.constant(Tensor::full(&[m, 1], 1.0));
        let r_dep = g.concat(&[r_dep, ones], 1)?;
        let w = g.param(store, self.weight);
        let projected = g.matmul(r_head, w)?;
        let projected = g.reshape(projected, &[m * l, k + 1])?;
        let dep_t = g.transpose(r_dep)?;
        // row h * L + l, column d
        let cells = g.matmul(projected, dep_t)?;
        let index = (0..m * m * l)
            .map(|i| {
                let (pair, label) = (i / l, i % l);
                let (h, d) = (pair / m, pair % m);
                (h * l + label) * m + d
            })
            .collect();
        g.gather(cells, index, &[m * m, l])
    }

    /// Single-label scores as an `m x m` matrix indexed `[head][dependent]`.
    pub fn matrix(&self, g: &mut Graph, store: &ParamStore, rows: Var) -> Result<Var> {
        let m = g.shape(rows)[0];
        let s = self.scores(g, store, rows)?;
        if self.labels == 1 {
            g.reshape(s, &[m, m])
        } else {
            Err(Error::contract("matrix view needs a single-label biaffine"))
        }
    }
}

/// Arc scorer plus relation scorer with separate projections, used for both
/// syntactic trees and semantic graphs.
#[derive(Clone, Debug)]
pub struct ParserHead {
    pub arc: Biaffine,
    pub rel: Biaffine,
}

impl ParserHead {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        width: usize,
        relations: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(ParserHead {
            arc: Biaffine::new(store, &format!("{name}.arc"), input, width, 1, dropout, rng)?,
            rel: Biaffine::new(store, &format!("{name}.rel"), input, width, relations, dropout, rng)?,
        })
    }

    /// `(n + 1) x (n + 1)` arc scores over root-prefixed word rows.
    pub fn arc_scores(&self, g: &mut Graph, store: &ParamStore, rows: Var) -> Result<Var> {
        self.arc.matrix(g, store, rows)
    }

    /// `[(n + 1)^2, L]` relation scores, row `h * (n + 1) + d`.
    pub fn label_scores(&self, g: &mut Graph, store: &ParamStore, rows: Var) -> Result<Var> {
        self.rel.scores(g, store, rows)
    }
}

/// Elementwise edge probabilities.
pub fn sdp_edge_probs(arcs: &Tensor) -> Tensor {
    arcs.map(sigmoid)
}
