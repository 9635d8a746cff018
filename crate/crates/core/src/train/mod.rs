//! Training: single-task teachers, joint multi-task students, and
//! teacher-annealed distillation.
//!
//! Every step samples one task with probability proportional to
//! `|D|^0.75`, takes the next minibatch of that task, and applies one
//! optimizer update with global-norm clipping and a warmup/decay learning
//! rate. With teachers, each loss part mixes gold and teacher targets by
//! the annealing weight `lambda = step / total`.

pub mod distill;
pub mod optim;
pub mod sampling;
pub mod schedule;

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autodiff::Graph;
use crate::error::{Error, Result};
use crate::metrics::score_model;
use crate::model::MultiTaskModel;

pub use distill::{distill_loss, teacher_loss, TeacherEnsemble, TeacherTargets};
pub use optim::{clip_gradients, global_norm, Adam, OptimizerConfig};
pub use sampling::{sample_task, sampling_probabilities, TaskDataset, TaskSampler};
pub use schedule::{lambda_at, lr_at, DistillationSchedule};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

/// Loss and development scores after one epoch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub steps: usize,
    /// Mean training loss per task over the epoch's steps.
    pub loss: BTreeMap<String, f64>,
    /// Primary development metric per task, when development data exists.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub dev: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainReport {
    pub total_steps: usize,
    pub epochs: Vec<EpochRecord>,
    /// Task drawn at each step, in order.
    #[serde(skip)]
    pub sampled: Vec<usize>,
    /// Largest global gradient norm after clipping.
    pub max_clipped_norm: f64,
}

/// Shuffled pass over one dataset, reshuffled when exhausted.
struct Cursor {
    order: Vec<usize>,
    pos: usize,
}

impl Cursor {
    fn next_batch(&mut self, size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if self.pos >= self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let end = (self.pos + size).min(self.order.len());
        let batch = self.order[self.pos..end].to_vec();
        self.pos = end;
        batch
    }
}

/// Steps in one epoch: enough minibatches to cover every sentence once.
pub fn steps_per_epoch(datasets: &[TaskDataset], batch_size: usize) -> usize {
    let total: usize = datasets.iter().map(TaskDataset::len).sum();
    total.div_ceil(batch_size.max(1))
}

/// Trains a single-task teacher at the teacher learning rate.
pub fn train_single(
    model: &mut MultiTaskModel,
    dataset: &TaskDataset,
    dev: &[TaskDataset],
    options: &TrainOptions,
) -> Result<TrainReport> {
    let lr = options.optimizer.lr_teacher;
    run(model, std::slice::from_ref(dataset), None, dev, options, lr)
}

/// Trains the joint model at the student learning rate, distilling from
/// `teachers` when given.
pub fn train_joint(
    model: &mut MultiTaskModel,
    datasets: &[TaskDataset],
    teachers: Option<&TeacherTargets>,
    dev: &[TaskDataset],
    options: &TrainOptions,
) -> Result<TrainReport> {
    let lr = options.optimizer.lr_student;
    run(model, datasets, teachers, dev, options, lr)
}

fn run(
    model: &mut MultiTaskModel,
    datasets: &[TaskDataset],
    teachers: Option<&TeacherTargets>,
    dev: &[TaskDataset],
    options: &TrainOptions,
    lr: f64,
) -> Result<TrainReport> {
    options.optimizer.validate()?;
    if options.epochs == 0 || options.batch_size == 0 {
        return Err(Error::contract("epochs and batch size must be positive"));
    }
    for d in datasets {
        if !model.has_task(d.task) {
            return Err(Error::Model(format!("model has no {} head", d.task)));
        }
        if let Some(t) = teachers {
            let targets = t
                .get(&d.task)
                .ok_or_else(|| Error::Model(format!("no teacher targets for {}", d.task)))?;
            if targets.len() != d.len() {
                return Err(Error::contract(format!(
                    "teacher targets for {} do not cover the dataset",
                    d.task
                )));
            }
        }
    }
    let per_epoch = steps_per_epoch(datasets, options.batch_size);
    let total = per_epoch * options.epochs;
    let sizes: Vec<usize> = datasets.iter().map(TaskDataset::len).collect();
    let sampler = TaskSampler::new(&sizes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let mut cursors: Vec<Cursor> = datasets
        .iter()
        .map(|d| Cursor {
            order: (0..d.len()).collect(),
            pos: usize::MAX,
        })
        .collect();
    let mut adam = Adam::new(options.optimizer.clone());
    let mut schedule = DistillationSchedule::new(total)?;
    let mut report = TrainReport {
        total_steps: total,
        ..Default::default()
    };

    for epoch in 0..options.epochs {
        let mut sums = vec![(0.0, 0usize); datasets.len()];
        for _ in 0..per_epoch {
            let step = schedule.current_step();
            let k = sampler.sample(&mut rng);
            report.sampled.push(k);
            let data = &datasets[k];
            let batch = cursors[k].next_batch(options.batch_size, &mut rng);
            schedule.advance();
            let lambda = schedule.lambda();

            let mut g = Graph::training(options.seed ^ (step as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let mut losses = Vec::with_capacity(batch.len());
            for &i in &batch {
                let parts = model.loss_parts(&mut g, data.task, &data.sentences[i])?;
                let soft = teachers.map(|t| &t[&data.task][i]);
                if let Some(s) = soft {
                    if s.len() != parts.len() {
                        return Err(Error::contract("teacher and student disagree on loss parts"));
                    }
                }
                for (j, part) in parts.iter().enumerate() {
                    losses.push(distill_loss(&mut g, part, soft.map(|s| &s[j]), lambda)?);
                }
            }
            let total_loss = g.add_all(&losses)?;
            let loss = g.scale(total_loss, 1.0 / batch.len() as f64);
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Divergence {
                    task: data.task.to_string(),
                    step,
                });
            }
            let grads = g.backward(loss)?;
            model.store.zero_grad();
            model.store.accumulate(&grads);
            clip_gradients(&mut model.store, options.optimizer.grad_clip);
            report.max_clipped_norm = report.max_clipped_norm.max(global_norm(&model.store));
            let scale = lr_at(step + 1, total, options.optimizer.warmup_proportion, 1.0);
            adam.step(&mut model.store, lr * scale, options.optimizer.lr_crf * scale);
            sums[k].0 += value;
            sums[k].1 += 1;
        }
        let loss = datasets
            .iter()
            .zip(&sums)
            .filter(|(_, s)| s.1 > 0)
            .map(|(d, s)| (d.task.to_string(), s.0 / s.1 as f64))
            .collect();
        let mut dev_scores = BTreeMap::new();
        for d in dev {
            dev_scores.insert(d.task.to_string(), score_model(model, d.task, &d.sentences)?);
        }
        let record = EpochRecord {
            epoch: epoch + 1,
            steps: schedule.current_step(),
            loss,
            dev: dev_scores,
        };
        log::info!(
            "epoch {} step {}/{} loss {:?} dev {:?}",
            record.epoch,
            record.steps,
            total,
            record.loss,
            record.dev
        );
        report.epochs.push(record);
    }
    model.store.zero_grad();
    Ok(report)
}
