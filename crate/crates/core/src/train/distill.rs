//! Teacher-annealed distillation losses and frozen teachers.

use std::collections::BTreeMap;

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::heads::{binary_nll, soft_nll};
use crate::model::{LossPart, MultiTaskModel, SoftKind};
use crate::task::Task;
use crate::tensor::Tensor;
use crate::train::TaskDataset;

/// Cross-entropy of the part's scores against soft targets.
pub fn teacher_loss(g: &mut Graph, part: &LossPart, targets: &Tensor) -> Result<Var> {
    if g.shape(part.logits) != targets.shape() {
        return Err(Error::contract(format!(
            "teacher targets {:?} do not match student scores {:?}",
            targets.shape(),
            g.shape(part.logits)
        )));
    }
    match part.kind {
        SoftKind::Categorical => soft_nll(g, part.logits, targets),
        SoftKind::Bernoulli => binary_nll(g, part.logits, targets),
    }
}

/// `lambda * gold + (1 - lambda) * teacher`, or the gold loss alone when
/// there is no teacher.
pub fn distill_loss(g: &mut Graph, part: &LossPart, teacher: Option<&Tensor>, lambda: f64) -> Result<Var> {
    let Some(targets) = teacher else {
        return Ok(part.gold_loss);
    };
    let soft = teacher_loss(g, part, targets)?;
    let gold = g.scale(part.gold_loss, lambda);
    let soft = g.scale(soft, 1.0 - lambda);
    g.add(gold, soft)
}

/// Soft targets of every training sentence: `[task][sentence][part]`.
pub type TeacherTargets = BTreeMap<Task, Vec<Vec<Tensor>>>;

/// Frozen single-task models, one per task.
#[derive(Clone, Debug, Default)]
pub struct TeacherEnsemble {
    pub teachers: BTreeMap<Task, MultiTaskModel>,
}

impl TeacherEnsemble {
    pub fn new(teachers: BTreeMap<Task, MultiTaskModel>) -> Result<Self> {
        for (task, model) in &teachers {
            if !model.has_task(*task) {
                return Err(Error::Model(format!("teacher for {task} has no {task} head")));
            }
        }
        let mut teachers = teachers;
        for model in teachers.values_mut() {
            model.store.freeze();
        }
        Ok(TeacherEnsemble { teachers })
    }

    /// Tasks of `datasets` that have no teacher.
    pub fn missing(&self, datasets: &[TaskDataset]) -> Vec<Task> {
        datasets
            .iter()
            .map(|d| d.task)
            .filter(|t| !self.teachers.contains_key(t))
            .collect()
    }

    /// Runs each teacher once over its task's sentences, without dropout.
    pub fn soft_targets(&self, datasets: &[TaskDataset]) -> Result<TeacherTargets> {
        let missing = self.missing(datasets);
        if !missing.is_empty() {
            let names: Vec<&str> = missing.iter().map(|t| t.name()).collect();
            return Err(Error::Model(format!("no teacher for {}", names.join(", "))));
        }
        let mut out = BTreeMap::new();
        for d in datasets {
            let teacher = &self.teachers[&d.task];
            let per_sentence = d
                .sentences
                .iter()
                .map(|s| {
                    let mut g = Graph::new();
                    let parts = teacher.loss_parts(&mut g, d.task, s)?;
                    Ok(parts.iter().map(|p| p.soft_targets(&g)).collect())
                })
                .collect::<Result<Vec<Vec<Tensor>>>>()?;
            out.insert(d.task, per_sentence);
        }
        Ok(out)
    }
}
