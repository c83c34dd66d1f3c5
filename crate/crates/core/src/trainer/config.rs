use serde::{Deserialize, Serialize};

use super::TrainerError;
use crate::autodiff::AdamConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleMode {
    Constant,
    /// Halve the learning rate and double the batch at each milestone.
    Step,
}

/// Contrastive training hyper-parameters. Defaults follow the small model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub epochs: u64,
    pub seed: u64,
    pub schedule: ScheduleMode,
    /// Epochs at which the step schedule fires.
    pub milestones: Vec<u64>,
    /// Upper bound on the batch size reached by the step schedule.
    pub max_batch_size: usize,
    /// Skip unreadable manifest entries with a warning instead of failing.
    pub skip_unreadable: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            temperature: 0.07,
            learning_rate: 1e-4,
            weight_decay: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            epochs: 100,
            seed: 0,
            schedule: ScheduleMode::Constant,
            milestones: Vec::new(),
            max_batch_size: 512,
            skip_unreadable: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainerError> {
        let bad = |m: String| Err(TrainerError::InvalidConfig(m));
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be non-negative, got {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.adam_epsilon <= 0.0 {
            return bad("beta1 and beta2 must lie in [0, 1) and adam_epsilon must be positive".into());
        }
        if self.max_batch_size < self.batch_size {
            return bad(format!(
                "max_batch_size {} is below batch_size {}",
                self.max_batch_size, self.batch_size
            ));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return bad(format!("milestones must be strictly increasing, got {:?}", self.milestones));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_epsilon,
            weight_decay: self.weight_decay,
        }
    }
}

/// Learning rate and batch size in effect during `epoch` (0-based).
pub fn schedule_step(epoch: u64, cfg: &TrainConfig) -> (f64, usize) {
    match cfg.schedule {
        ScheduleMode::Constant => (cfg.learning_rate, cfg.batch_size),
        ScheduleMode::Step => {
            let passed = cfg.milestones.iter().filter(|&&m| epoch >= m).count() as u32;
            let lr = cfg.learning_rate / 2f64.powi(passed as i32);
            let batch = cfg
                .batch_size
                .saturating_mul(1usize.checked_shl(passed).unwrap_or(usize::MAX))
                .min(cfg.max_batch_size);
            (lr, batch)
        }
    }
}
