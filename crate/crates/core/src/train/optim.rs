//! Adam with decoupled weight decay and global-norm gradient clipping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};
use crate::params::{ParamGroup, ParamStore};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Peak learning rate when training single-task teachers.
    pub lr_teacher: f64,
    /// Peak learning rate when training the joint model.
    pub lr_student: f64,
    /// Peak learning rate of CRF transition and boundary scores.
    pub lr_crf: f64,
    /// Maximum global gradient norm.
    pub grad_clip: f64,
    /// Fraction of steps spent warming the learning rate up.
    pub warmup_proportion: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled decay applied to matrices (two or more dimensions).
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            lr_teacher: 1e-4,
            lr_student: 1e-4,
            lr_crf: 1e-3,
            grad_clip: 1.0,
            warmup_proportion: 0.02,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-6,
            weight_decay: 0.01,
        }
    }
}

impl OptimizerConfig {
    /// Every range violation, located under `prefix`.
    pub fn violations(&self, prefix: &str) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut check = |name: &str, value: f64, ok: bool, rule: &str| {
            if !ok {
                out.push(Violation {
                    path: format!("{prefix}.{name}"),
                    message: format!("{value} is not {rule}"),
                });
            }
        };
        let positive = |v: f64| v.is_finite() && v > 0.0;
        let unit_open = |v: f64| v.is_finite() && v > 0.0 && v < 1.0;
        check("lr_teacher", self.lr_teacher, positive(self.lr_teacher), "positive");
        check("lr_student", self.lr_student, positive(self.lr_student), "positive");
        check("lr_crf", self.lr_crf, positive(self.lr_crf), "positive");
        check("grad_clip", self.grad_clip, positive(self.grad_clip), "positive");
        check(
            "warmup_proportion",
            self.warmup_proportion,
            unit_open(self.warmup_proportion),
            "in (0, 1)",
        );
        check("beta1", self.beta1, (0.0..1.0).contains(&self.beta1), "in [0, 1)");
        check("beta2", self.beta2, (0.0..1.0).contains(&self.beta2), "in [0, 1)");
        check("epsilon", self.epsilon, positive(self.epsilon), "positive");
        check(
            "weight_decay",
            self.weight_decay,
            self.weight_decay.is_finite() && self.weight_decay >= 0.0,
            "non-negative",
        );
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations("optimizer");
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// L2 norm over every stored gradient.
pub fn global_norm(store: &ParamStore) -> f64 {
    store
        .iter()
        .filter_map(|(_, p)| p.grad.as_ref())
        .map(|g| g.sq_norm())
        .sum::<f64>()
        .sqrt()
}

/// Rescales all gradients so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_gradients(store: &mut ParamStore, max_norm: f64) -> f64 {
    let norm = global_norm(store);
    if norm > max_norm {
        let scale = max_norm / norm;
        for p in store.iter_mut() {
            if let Some(g) = &mut p.grad {
                for v in g.data_mut() {
                    *v *= scale;
                }
            }
        }
    }
    norm
}

/// Adam without bias correction, with decoupled weight decay on matrices.
/// Parameters without a gradient in a step are left untouched, moments
/// included.
#[derive(Clone, Debug)]
pub struct Adam {
    config: OptimizerConfig,
    moments: Vec<Option<(Vec<f64>, Vec<f64>)>>,
}

impl Adam {
    pub fn new(config: OptimizerConfig) -> Self {
        Adam {
            config,
            moments: Vec::new(),
        }
    }

    /// One update. `lr` applies to default parameters and `lr_crf` to the
    /// CRF group.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64, lr_crf: f64) {
        let c = &self.config;
        if self.moments.len() < store.len() {
            self.moments.resize(store.len(), None);
        }
        for (p, slot) in store.iter_mut().zip(self.moments.iter_mut()) {
            let Some(grad) = &p.grad else { continue };
            if !p.requires_grad {
                continue;
            }
            let n = grad.numel();
            let (m, v) = slot.get_or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            let rate = match p.group {
                ParamGroup::Default => lr,
                ParamGroup::Crf => lr_crf,
            };
            let decay = if p.value.ndim() >= 2 { c.weight_decay } else { 0.0 };
            for (((w, &g), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * g;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * g * g;
                let update = *mi / (vi.sqrt() + c.epsilon) + decay * *w;
                *w -= rate * update;
            }
        }
    }
}
