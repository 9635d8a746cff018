//! Semantic roles: biaffine predicate-argument emissions decoded by a
//! shared linear-chain CRF, one chain per candidate predicate.

use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Graph, Var};
use crate::decode::viterbi;
use crate::error::{Error, Result};
use crate::heads::{Biaffine, CrfLayer};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct SrlHead {
    pub biaffine: Biaffine,
    pub crf: CrfLayer,
}

impl SrlHead {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        width: usize,
        roles: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        Ok(SrlHead {
            biaffine: Biaffine::new(store, &format!("{name}.biaffine"), input, width, roles, dropout, rng)?,
            crf: CrfLayer::new(store, &format!("{name}.crf"), roles)?,
        })
    }

    /// `[n * n, L]` emissions over word rows, row `p * n + a` for predicate
    /// `p` and argument position `a`.
    pub fn emissions(&self, g: &mut Graph, store: &ParamStore, rows: Var) -> Result<Var> {
        self.biaffine.scores(g, store, rows)
    }

    /// The `n x L` emission chain of predicate `p`.
    pub fn predicate_row(&self, g: &mut Graph, emissions: Var, p: usize) -> Result<Var> {
        let n = (g.shape(emissions)[0] as f64).sqrt() as usize;
        if p >= n {
            return Err(Error::contract(format!("predicate {p} outside {n} words")));
        }
        g.slice_rows(emissions, p * n, n)
    }

    /// Mean log-likelihood of one gold role sequence per predicate row.
    pub fn log_likelihood(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        emissions: Var,
        gold: &[Vec<usize>],
    ) -> Result<Var> {
        let mut parts = Vec::with_capacity(gold.len());
        for (p, seq) in gold.iter().enumerate() {
            let row = self.predicate_row(g, emissions, p)?;
            parts.push(self.crf.log_likelihood(g, store, row, seq)?);
        }
        let total = g.add_all(&parts)?;
        Ok(g.scale(total, 1.0 / gold.len() as f64))
    }

    /// Best role sequence for every predicate row.
    pub fn decode(&self, store: &ParamStore, emissions: &Tensor) -> Result<Vec<Vec<usize>>> {
        let (rows, l) = emissions.dims2("srl decode")?;
        let n = (rows as f64).sqrt() as usize;
        let crf = self.crf.params(store);
        (0..n)
            .map(|p| {
                let chain = Tensor::new(&[n, l], emissions.data()[p * n * l..(p + 1) * n * l].to_vec())?;
                viterbi(&chain, &crf)
            })
            .collect()
    }
}
