//! Step schedules: the teacher-annealing weight and the learning rate.

use crate::error::{Error, Result};

/// Linear curriculum from teacher targets (`lambda = 0`) to gold targets
/// (`lambda = 1`), advanced once per optimizer step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DistillationSchedule {
    total_steps: usize,
    current_step: usize,
}

impl DistillationSchedule {
    pub fn new(total_steps: usize) -> Result<Self> {
        if total_steps == 0 {
            return Err(Error::contract("schedule needs at least one step"));
        }
        Ok(DistillationSchedule {
            total_steps,
            current_step: 0,
        })
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn current_step(&self) -> usize {
        self.current_step
    }

    pub fn lambda(&self) -> f64 {
        self.current_step as f64 / self.total_steps as f64
    }

    /// Moves one step forward, saturating at the end.
    pub fn advance(&mut self) {
        self.current_step = (self.current_step + 1).min(self.total_steps);
    }
}

/// `step / total`.
pub fn lambda_at(step: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::contract("schedule needs at least one step"));
    }
    if step > total {
        return Err(Error::contract(format!("step {step} beyond {total} total steps")));
    }
    Ok(step as f64 / total as f64)
}

/// Linear warmup from 0 to `base` over the first `warmup * total` steps,
/// then linear decay to 0 at `total`.
pub fn lr_at(step: usize, total: usize, warmup: f64, base: f64) -> f64 {
    if total == 0 || step >= total {
        return 0.0;
    }
    let warm = warmup * total as f64;
    let s = step as f64;
    if s < warm {
        base * s / warm
    } else {
        base * (total as f64 - s) / (total as f64 - warm)
    }
}
