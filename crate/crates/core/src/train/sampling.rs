//! Task datasets and size-weighted task sampling.

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{Error, Result};
use crate::sentence::AnnotatedSentence;
use crate::task::Task;

/// Exponent applied to dataset sizes when sampling tasks.
pub const SAMPLING_EXPONENT: f64 = 0.75;

#[derive(Clone, Debug)]
pub struct TaskDataset {
    pub task: Task,
    pub sentences: Vec<AnnotatedSentence>,
}

impl TaskDataset {
    pub fn new(task: Task, sentences: Vec<AnnotatedSentence>) -> Result<Self> {
        if sentences.is_empty() {
            return Err(Error::Data(format!("{task} dataset is empty")));
        }
        Ok(TaskDataset { task, sentences })
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    /// `|D|^0.75`.
    pub fn weight(&self) -> f64 {
        (self.len() as f64).powf(SAMPLING_EXPONENT)
    }
}

/// Sampling probability of each dataset size.
pub fn sampling_probabilities(sizes: &[usize]) -> Result<Vec<f64>> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::contract("sampling needs at least one non-empty dataset"));
    }
    let weights: Vec<f64> = sizes.iter().map(|&s| (s as f64).powf(SAMPLING_EXPONENT)).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Draws dataset indices with probability proportional to `|D|^0.75`.
#[derive(Clone, Debug)]
pub struct TaskSampler {
    dist: WeightedIndex<f64>,
}

impl TaskSampler {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        let probs = sampling_probabilities(sizes)?;
        let dist = WeightedIndex::new(probs).map_err(|e| Error::contract(e.to_string()))?;
        Ok(TaskSampler { dist })
    }

    pub fn sample(&self, rng: &mut impl Rng) -> usize {
        self.dist.sample(rng)
    }
}

/// One draw over `datasets`.
pub fn sample_task(datasets: &[TaskDataset], rng: &mut impl Rng) -> Result<Task> {
    let sizes: Vec<usize> = datasets.iter().map(TaskDataset::len).collect();
    Ok(datasets[TaskSampler::new(&sizes)?.sample(rng)].task)
}
