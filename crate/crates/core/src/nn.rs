//! Parameterized layers built on the autodiff graph.

use rand::Rng;

use crate::autodiff::{Graph, Var};
use crate::error::Result;
use crate::params::{ParamId, ParamStore};

const LN_EPS: f64 = 1e-12;

/// Affine map `x W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, output: usize, rng: &mut impl Rng) -> Result<Self> {
        Ok(Linear {
            weight: store.add_glorot(&format!("{name}.weight"), input, output, rng)?,
            bias: store.add_zeros(&format!("{name}.bias"), &[output])?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let xw = g.matmul(x, w)?;
        g.add_row(xw, b)
    }
}

#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, width: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: store.add_ones(&format!("{name}.gain"), &[width])?,
            bias: store.add_zeros(&format!("{name}.bias"), &[width])?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layer_norm(x, gain, bias, LN_EPS)
    }
}

/// Single hidden layer projection: `gelu(x W + b)`, applied per position.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub linear: Linear,
    pub dropout: f64,
}

impl Mlp {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(Mlp {
            linear: Linear::new(store, name, input, output, rng)?,
            dropout,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.linear.forward(g, store, x)?;
        let h = g.gelu(h);
        Ok(g.dropout(h, self.dropout))
    }
}

/// Position-wise feed-forward block with residual connection and
/// post-layer-norm.
#[derive(Clone, Debug)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
    pub norm: LayerNorm,
    pub dropout: f64,
}

impl FeedForward {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        width: usize,
        hidden: usize,
        dropout: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        Ok(FeedForward {
            inner: Linear::new(store, &format!("{name}.inner"), width, hidden, rng)?,
            outer: Linear::new(store, &format!("{name}.outer"), hidden, width, rng)?,
            norm: LayerNorm::new(store, &format!("{name}.norm"), width)?,
            dropout,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.inner.forward(g, store, x)?;
        let h = g.gelu(h);
        let h = self.outer.forward(g, store, h)?;
        let h = g.dropout(h, self.dropout);
        let h = g.add(x, h)?;
        self.norm.forward(g, store, h)
    }
}
