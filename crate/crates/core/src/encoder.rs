//! Shared character encoder and the relative-position attention layer.
//!
//! The encoder is a small post-layer-norm transformer over characters with
//! learned absolute position embeddings. Every sentence is wrapped as
//! `[CLS] c1 .. cn [SEP]`, so the output has `n + 2` rows. Sequences can be
//! padded to a common length; padded key positions receive a large negative
//! attention logit and contribute exactly zero weight, so padding never
//! changes the rows of real positions.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{FeedForward, LayerNorm, Linear};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::vocab::{CLS_ID, PAD_ID, SEP_ID};

/// Logit added to padded key positions. `exp` of it underflows to zero.
const MASKED: f64 = -1e9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub width: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn_width: usize,
    pub max_len: usize,
    pub dropout: f64,
    pub seed: u64,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.heads == 0 || !self.width.is_multiple_of(self.heads) {
            return Err(Error::contract(format!(
                "width {} is not divisible by head count {}",
                self.width, self.heads
            )));
        }
        if self.max_len < 3 {
            return Err(Error::contract("max_len must allow at least one character"));
        }
        if self.vocab_size <= SEP_ID {
            return Err(Error::contract("vocabulary must include the special symbols"));
        }
        Ok(())
    }

    pub fn head_width(&self) -> usize {
        self.width / self.heads
    }
}

/// Hidden vectors for `[CLS] c1 .. cn [SEP]`.
#[derive(Clone, Debug)]
pub struct EncodedSequence {
    /// `(n + 2) x width`
    pub hidden: Var,
    pub char_ids: Vec<usize>,
    pub width: usize,
}

impl EncodedSequence {
    pub fn len(&self) -> usize {
        self.char_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.char_ids.is_empty()
    }
}

#[derive(Clone, Debug)]
struct SelfAttention {
    query: Linear,
    key: Linear,
    value: Linear,
    output: Linear,
    norm: LayerNorm,
}

#[derive(Clone, Debug)]
struct Layer {
    attention: SelfAttention,
    ffn: FeedForward,
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub config: EncoderConfig,
    token_embedding: ParamId,
    position_embedding: ParamId,
    embedding_norm: LayerNorm,
    layers: Vec<Layer>,
}

/// Additive attention mask: zero for real keys, [`MASKED`] for padding.
fn key_mask(total: usize, valid: usize) -> Tensor {
    Tensor::from_fn(&[total, total], |k| if k % total < valid { 0.0 } else { MASKED })
}

impl Encoder {
    pub fn new(store: &mut ParamStore, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.width;
        let token_embedding = store.add_uniform("encoder.token_embedding", &[config.vocab_size, d], 0.1, &mut rng)?;
        let position_embedding =
            store.add_uniform("encoder.position_embedding", &[config.max_len, d], 0.1, &mut rng)?;
        let embedding_norm = LayerNorm::new(store, "encoder.embedding_norm", d)?;
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            let p = format!("encoder.layer{l}");
            let attention = SelfAttention {
                query: Linear::new(store, &format!("{p}.query"), d, d, &mut rng)?,
                key: Linear::new(store, &format!("{p}.key"), d, d, &mut rng)?,
                value: Linear::new(store, &format!("{p}.value"), d, d, &mut rng)?,
                output: Linear::new(store, &format!("{p}.output"), d, d, &mut rng)?,
                norm: LayerNorm::new(store, &format!("{p}.attention_norm"), d)?,
            };
            let ffn = FeedForward::new(
                store,
                &format!("{p}.ffn"),
                d,
                config.ffn_width,
                config.dropout,
                &mut rng,
            )?;
            layers.push(Layer { attention, ffn });
        }
        Ok(Encoder {
            config,
            token_embedding,
            position_embedding,
            embedding_norm,
            layers,
        })
    }

    fn check_input(&self, char_ids: &[usize]) -> Result<()> {
        if char_ids.len() + 2 > self.config.max_len {
            return Err(Error::Length {
                len: char_ids.len(),
                max: self.config.max_len,
            });
        }
        if let Some(&bad) = char_ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(Error::contract(format!(
                "character id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Encodes one sentence.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, char_ids: &[usize]) -> Result<EncodedSequence> {
        self.encode_padded(g, store, char_ids, char_ids.len() + 2)
    }

    /// Encodes a batch; each sentence is padded to the longest one.
    pub fn encode_batch(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        batch: &[Vec<usize>],
    ) -> Result<Vec<EncodedSequence>> {
        let total = batch.iter().map(|s| s.len() + 2).max().unwrap_or(2);
        batch
            .iter()
            .map(|ids| self.encode_padded(g, store, ids, total))
            .collect()
    }

    /// Encodes `char_ids` padded to `total` positions and returns only the
    /// `n + 2` real rows.
    pub fn encode_padded(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        char_ids: &[usize],
        total: usize,
    ) -> Result<EncodedSequence> {
        self.check_input(char_ids)?;
        let valid = char_ids.len() + 2;
        if total < valid || total > self.config.max_len {
            return Err(Error::Length {
                len: total.saturating_sub(2),
                max: self.config.max_len,
            });
        }
        let mut ids = Vec::with_capacity(total);
        ids.push(CLS_ID);
        ids.extend_from_slice(char_ids);
        ids.push(SEP_ID);
        ids.resize(total, PAD_ID);

        let table = g.param(store, self.token_embedding);
        let tokens = g.select_rows(table, &ids)?;
        let positions_table = g.param(store, self.position_embedding);
        let positions = g.slice_rows(positions_table, 0, total)?;
        let x = g.add(tokens, positions)?;
        let x = self.embedding_norm.forward(g, store, x)?;
        let mut x = g.dropout(x, self.config.dropout);

        let mask = (total > valid).then(|| g.constant(key_mask(total, valid)));
        for layer in &self.layers {
            x = self.attend(g, store, &layer.attention, x, mask)?;
            x = layer.ffn.forward(g, store, x)?;
        }
        let hidden = if total > valid { g.slice_rows(x, 0, valid)? } else { x };
        Ok(EncodedSequence {
            hidden,
            char_ids: char_ids.to_vec(),
            width: self.config.width,
        })
    }

    fn attend(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        attn: &SelfAttention,
        x: Var,
        mask: Option<Var>,
    ) -> Result<Var> {
        let dk = self.config.head_width();
        let q = attn.query.forward(g, store, x)?;
        let k = attn.key.forward(g, store, x)?;
        let v = attn.value.forward(g, store, x)?;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let qh = g.slice_cols(q, h * dk, dk)?;
            let kh = g.slice_cols(k, h * dk, dk)?;
            let vh = g.slice_cols(v, h * dk, dk)?;
            let kt = g.transpose(kh)?;
            let logits = g.matmul(qh, kt)?;
            let mut logits = g.scale(logits, scale);
            if let Some(m) = mask {
                logits = g.add(logits, m)?;
            }
            let weights = g.softmax(logits)?;
            let weights = g.dropout(weights, self.config.dropout);
            heads.push(g.matmul(weights, vh)?);
        }
        let joined = g.concat(&heads, 1)?;
        let out = attn.output.forward(g, store, joined)?;
        let out = g.dropout(out, self.config.dropout);
        let out = g.add(x, out)?;
        attn.norm.forward(g, store, out)
    }

    /// Parameters owned by the encoder.
    pub fn param_ids(&self, store: &ParamStore) -> Vec<ParamId> {
        store
            .iter()
            .filter(|(_, p)| p.name.starts_with("encoder."))
            .map(|(id, _)| id)
            .collect()
    }
}

/// Sinusoidal encoding of a signed relative offset. `sin` is odd, so the
/// encoding of `-k` differs from that of `k`: the layer can tell left from
/// right as well as near from far.
fn relative_encoding(offset: i64, width: usize) -> Vec<f64> {
    (0..width)
        .map(|c| {
            let freq = 1.0 / 10000f64.powf((2 * (c / 2)) as f64 / width as f64);
            let angle = offset as f64 * freq;
            if c % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Direction- and distance-aware self-attention block for NER.
///
/// Per head, the logit between query `i` and key `j` is
/// `q_i.k_j + q_i.r_{j-i} + u.k_j + v.r_{j-i}` with no `1/sqrt(d)` scaling,
/// where `r_{j-i}` is the sinusoidal encoding of the signed offset and `u`,
/// `v` are learned per-head vectors. Keys are the unprojected inputs.
#[derive(Clone, Debug)]
pub struct AdaptedAttention {
    heads: usize,
    head_width: usize,
    query: Linear,
    value: Linear,
    content_bias: ParamId,
    position_bias: ParamId,
    output: Linear,
    norm: LayerNorm,
    ffn: FeedForward,
    dropout: f64,
}

impl AdaptedAttention {
    pub fn new(store: &mut ParamStore, name: &str, config: &EncoderConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        let d = config.width;
        let dk = config.head_width();
        Ok(AdaptedAttention {
            heads: config.heads,
            head_width: dk,
            query: Linear::new(store, &format!("{name}.query"), d, d, rng)?,
            value: Linear::new(store, &format!("{name}.value"), d, d, rng)?,
            content_bias: store.add_uniform(&format!("{name}.content_bias"), &[config.heads, dk], 0.1, rng)?,
            position_bias: store.add_uniform(&format!("{name}.position_bias"), &[config.heads, dk], 0.1, rng)?,
            output: Linear::new(store, &format!("{name}.output"), d, d, rng)?,
            norm: LayerNorm::new(store, &format!("{name}.norm"), d)?,
            ffn: FeedForward::new(store, &format!("{name}.ffn"), d, config.ffn_width, config.dropout, rng)?,
            dropout: config.dropout,
        })
    }

    /// Attention logits of every head for hidden states `h` (`T x d`).
    pub fn logits(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Result<Vec<Var>> {
        let t = g.shape(h)[0];
        let dk = self.head_width;
        let span = 2 * t - 1;
        let rel = Tensor::from_fn(&[span, dk], |k| {
            let (row, col) = (k / dk, k % dk);
            relative_encoding(row as i64 - (t as i64 - 1), dk)[col]
        });
        let rel = g.constant(rel);
        let rel_t = g.transpose(rel)?;
        // cell (i, j) reads column (j - i) + (t - 1) of the offset table
        let pair_index: Vec<usize> = (0..t * t)
            .map(|k| {
                let (i, j) = (k / t, k % t);
                i * span + (j + t - 1 - i)
            })
            .collect();
        let offset_index: Vec<usize> = (0..t * t)
            .map(|k| {
                let (i, j) = (k / t, k % t);
                j + t - 1 - i
            })
            .collect();

        let q = self.query.forward(g, store, h)?;
        let u_all = g.param(store, self.content_bias);
        let v_all = g.param(store, self.position_bias);
        let mut out = Vec::with_capacity(self.heads);
        for head in 0..self.heads {
            let qh = g.slice_cols(q, head * dk, dk)?;
            let kh = g.slice_cols(h, head * dk, dk)?;
            let kt = g.transpose(kh)?;
            let content = g.matmul(qh, kt)?;
            let q_rel = g.matmul(qh, rel_t)?;
            let position = g.gather(q_rel, pair_index.clone(), &[t, t])?;
            let u = g.slice_rows(u_all, head, 1)?;
            let u_k = g.matmul(u, kt)?;
            let v = g.slice_rows(v_all, head, 1)?;
            let v_rel = g.matmul(v, rel_t)?;
            let v_pos = g.gather(v_rel, offset_index.clone(), &[t, t])?;
            let logits = g.add(content, position)?;
            let logits = g.add_row(logits, u_k)?;
            out.push(g.add(logits, v_pos)?);
        }
        Ok(out)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, h: Var) -> Result<Var> {
        let dk = self.head_width;
        let logits = self.logits(g, store, h)?;
        let v = self.value.forward(g, store, h)?;
        let mut heads = Vec::with_capacity(self.heads);
        for (head, l) in logits.into_iter().enumerate() {
            let w = g.softmax(l)?;
            let w = g.dropout(w, self.dropout);
            let vh = g.slice_cols(v, head * dk, dk)?;
            heads.push(g.matmul(w, vh)?);
        }
        let joined = g.concat(&heads, 1)?;
        let out = self.output.forward(g, store, joined)?;
        let out = g.dropout(out, self.dropout);
        let out = g.add(h, out)?;
        let out = self.norm.forward(g, store, out)?;
        self.ffn.forward(g, store, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config() -> EncoderConfig {
        EncoderConfig {
            vocab_size: 20,
            width: 16,
            layers: 2,
            heads: 4,
            ffn_width: 32,
            max_len: 24,
            dropout: 0.1,
            seed: 3,
        }
    }

    fn encode(enc: &Encoder, store: &ParamStore, ids: &[usize]) -> Tensor {
        let mut g = Graph::new();
        let out = enc.encode(&mut g, store, ids).unwrap();
        g.value(out.hidden).clone()
    }

    #[test]
    fn output_has_two_extra_rows() {
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, config()).unwrap();
        let h = encode(&enc, &store, &[4, 5, 6, 7, 8]);
        assert_eq!(h.shape(), &[7, 16]);
        assert_eq!(h, encode(&enc, &store, &[4, 5, 6, 7, 8]));
    }

    #[test]
    fn overlong_input_is_an_error() {
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, config()).unwrap();
        let mut g = Graph::new();
        let err = enc.encode(&mut g, &store, &[4; 23]).unwrap_err();
        assert!(matches!(err, Error::Length { len: 23, max: 24 }));
        assert!(enc.encode(&mut g, &store, &[4; 22]).is_ok());
    }

    #[test]
    fn out_of_vocabulary_id_is_an_error() {
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, config()).unwrap();
        let mut g = Graph::new();
        assert!(enc.encode(&mut g, &store, &[4, 20]).is_err());
    }

    #[test]
    fn padding_does_not_change_real_rows() {
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, config()).unwrap();
        let alone = encode(&enc, &store, &[4, 9, 11]);
        let mut g = Graph::new();
        let batch = vec![vec![4, 9, 11], vec![5, 6, 7, 8, 9, 10, 12, 13]];
        let out = enc.encode_batch(&mut g, &store, &batch).unwrap();
        let padded = g.value(out[0].hidden);
        assert_eq!(padded.shape(), alone.shape());
        for (a, b) in alone.data().iter().zip(padded.data()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn permuting_input_changes_output() {
        let mut store = ParamStore::new();
        let enc = Encoder::new(&mut store, config()).unwrap();
        let a = encode(&enc, &store, &[4, 5, 6]);
        let b = encode(&enc, &store, &[6, 5, 4]);
        assert_ne!(a, b);
    }

    #[test]
    fn width_must_divide_by_heads() {
        let mut c = config();
        c.heads = 3;
        assert!(Encoder::new(&mut ParamStore::new(), c).is_err());
    }

    #[test]
    fn relative_logits_depend_only_on_offset() {
        let cfg = config();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layer = AdaptedAttention::new(&mut store, "ner.adapted0", &cfg, &mut rng).unwrap();
        let t = 7;
        let row: Vec<f64> = (0..cfg.width).map(|c| (c as f64 * 0.37).sin()).collect();
        let constant = Tensor::from_fn(&[t, cfg.width], |k| row[k % cfg.width]);
        let mut g = Graph::new();
        let h = g.constant(constant);
        for l in layer.logits(&mut g, &store, h).unwrap() {
            let m = g.value(l);
            for i in 0..t - 1 {
                for j in 0..t - 1 {
                    assert_eq!(m.at(i, j), m.at(i + 1, j + 1), "cell ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn relative_attention_is_direction_sensitive() {
        let cfg = config();
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layer = AdaptedAttention::new(&mut store, "ner.adapted0", &cfg, &mut rng).unwrap();
        let t = 6;
        let x = Tensor::from_fn(&[t, cfg.width], |k| ((k * 7919) % 13) as f64 / 13.0 - 0.5);
        let reversed = Tensor::from_fn(&[t, cfg.width], |k| {
            let (i, c) = (k / cfg.width, k % cfg.width);
            x.at(t - 1 - i, c)
        });
        let mut g = Graph::new();
        let a = g.constant(x);
        let b = g.constant(reversed);
        let ya = layer.forward(&mut g, &store, a).unwrap();
        let yb = layer.forward(&mut g, &store, b).unwrap();
        assert_eq!(g.shape(ya), &[t, cfg.width]);
        let (ya, yb) = (g.value(ya), g.value(yb));
        let mut max_diff = 0.0f64;
        for i in 0..t {
            for c in 0..cfg.width {
                max_diff = max_diff.max((ya.at(i, c) - yb.at(t - 1 - i, c)).abs());
            }
        }
        assert!(max_diff > 0.0);
    }
}
