//! Named parameter storage and its on-disk container.
//!
//! Container layout (all integers little-endian):
//!
//! ```text
//! magic      8 bytes   "MLTPPRM1"
//! count      u32       number of parameters
//! repeated `count` times:
//!   name_len u32, name (UTF-8, name_len bytes)
//!   group    u8        0 = default, 1 = crf
//!   ndim     u32, dims (u64 each)
//!   values   f64 each, row-major, IEEE-754 bit patterns
//! ```
//!
//! Values are written as raw bit patterns, so a save/load cycle is exact.

use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Gradients;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"MLTPPRM1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

/// Learning-rate group of a parameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Default,
    Crf,
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Option<Tensor>,
    pub requires_grad: bool,
    pub group: ParamGroup,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor, group: ParamGroup) -> Result<ParamId> {
        if self.by_name.contains_key(name) {
            return Err(Error::contract(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.params.len());
        self.params.push(Parameter {
            name: name.to_string(),
            value,
            grad: None,
            requires_grad: true,
            group,
        });
        self.by_name.insert(name.to_string(), id);
        Ok(id)
    }

    /// Adds a parameter initialized uniformly in `[-bound, bound]`.
    pub fn add_uniform(&mut self, name: &str, shape: &[usize], bound: f64, rng: &mut impl Rng) -> Result<ParamId> {
        let value = Tensor::from_fn(shape, |_| rng.gen_range(-bound..=bound));
        self.add(name, value, ParamGroup::Default)
    }

    /// Glorot-uniform initialization for a `[fan_in, fan_out]` matrix.
    pub fn add_glorot(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Result<ParamId> {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        self.add_uniform(name, &[fan_in, fan_out], bound, rng)
    }

    pub fn add_zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::zeros(shape), ParamGroup::Default)
    }

    pub fn add_ones(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.add(name, Tensor::full(shape, 1.0), ParamGroup::Default)
    }

    pub fn param(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Stops gradient flow into every parameter.
    pub fn freeze(&mut self) {
        for p in &mut self.params {
            p.requires_grad = false;
            p.grad = None;
        }
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad = None;
        }
    }

    /// Adds the parameter gradients of a backward pass into the stored
    /// gradient buffers.
    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in grads.params() {
            let p = &mut self.params[id.0];
            if !p.requires_grad {
                continue;
            }
            match &mut p.grad {
                Some(existing) => existing.add_assign(g),
                slot @ None => *slot = Some(g.clone()),
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.num_values() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for p in &self.params {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.push(match p.group {
                ParamGroup::Default => 0,
                ParamGroup::Crf => 1,
            });
            out.extend_from_slice(&(p.value.ndim() as u32).to_le_bytes());
            for &d in p.value.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in p.value.data() {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }

    /// Decodes a container into a fresh store (all parameters trainable).
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Model("not a parameter container (bad magic)".into()));
        }
        let count = r.u32()? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Model("parameter name is not UTF-8".into()))?
                .to_string();
            let group = match r.take(1)?[0] {
                0 => ParamGroup::Default,
                1 => ParamGroup::Crf,
                g => return Err(Error::Model(format!("unknown parameter group {g}"))),
            };
            let ndim = r.u32()? as usize;
            let shape = (0..ndim)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let data = (0..numel)
                .map(|_| r.u64().map(f64::from_bits))
                .collect::<Result<Vec<_>>>()?;
            store.add(&name, Tensor::new(&shape, data)?, group)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Model("trailing bytes after parameter container".into()));
        }
        Ok(store)
    }

    /// Overwrites the values of this store with those of `other`, matching
    /// by name. Every parameter must be present with an identical shape.
    pub fn load_values(&mut self, other: &ParamStore) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Model(format!(
                "parameter count mismatch: model has {}, container has {}",
                self.len(),
                other.len()
            )));
        }
        for p in &mut self.params {
            let src = other
                .id(&p.name)
                .map(|id| other.value(id))
                .ok_or_else(|| Error::Model(format!("parameter {} missing", p.name)))?;
            if src.shape() != p.value.shape() {
                return Err(Error::Model(format!(
                    "parameter {} has shape {:?}, container has {:?}",
                    p.name,
                    p.value.shape(),
                    src.shape()
                )));
            }
            p.value = src.clone();
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Model("truncated parameter container".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
