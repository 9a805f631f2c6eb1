//! SGD with momentum (classic and Nesterov) and learning-rate schedules.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::ModelState;

/// Parameter update rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateRule {
    /// Heavy-ball momentum: `v <- mu v - lr g; theta <- theta + v`.
    SgdMomentum,
    /// Nesterov momentum: `v <- mu v - lr g; theta <- theta + mu v - lr g`.
    Nesterov,
}

/// Error constructing an optimizer or schedule.
#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("momentum must be in [0, 1), got {0}")]
    BadMomentum(f64),
    #[error("base learning rate must be finite and > 0, got {0}")]
    BadLearningRate(f64),
    #[error("linear_decay needs decay_steps >= 1")]
    ZeroDecaySteps,
    #[error("final_factor must be in (0, 1], got {0}")]
    BadFinalFactor(f64),
    #[error("warmup_epochs must be finite and >= 0, got {0}")]
    BadWarmup(f64),
    #[error("decay_factor must be in (0, 1], got {0}")]
    BadDecayFactor(f64),
    #[error("decay_epochs must be positive and strictly increasing")]
    BadDecayEpochs,
}

/// Learning-rate schedule, evaluated per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    /// The base rate forever.
    Constant,
    /// Linear interpolation from the base rate to `base * final_factor`
    /// over `decay_steps` steps, constant afterwards.
    LinearDecay { decay_steps: u64, final_factor: f64 },
    /// Linear ramp from 0 to the base rate over `warmup_epochs`, then a
    /// multiplication by `decay_factor` at each epoch in `decay_epochs`.
    WarmupPiecewiseExp {
        warmup_epochs: f64,
        decay_epochs: Vec<f64>,
        decay_factor: f64,
    },
}

impl ScheduleSpec {
    /// Check schedule parameters.
    pub fn validate(&self) -> Result<(), OptimError> {
        match self {
            ScheduleSpec::Constant => Ok(()),
            ScheduleSpec::LinearDecay {
                decay_steps,
                final_factor,
            } => {
                if *decay_steps == 0 {
                    return Err(OptimError::ZeroDecaySteps);
                }
                if !final_factor.is_finite() || *final_factor <= 0.0 || *final_factor > 1.0 {
                    return Err(OptimError::BadFinalFactor(*final_factor));
                }
                Ok(())
            }
            ScheduleSpec::WarmupPiecewiseExp {
                warmup_epochs,
                decay_epochs,
                decay_factor,
            } => {
                if !warmup_epochs.is_finite() || *warmup_epochs < 0.0 {
                    return Err(OptimError::BadWarmup(*warmup_epochs));
                }
                if !decay_factor.is_finite() || *decay_factor <= 0.0 || *decay_factor > 1.0 {
                    return Err(OptimError::BadDecayFactor(*decay_factor));
                }
                let increasing = decay_epochs.windows(2).all(|w| w[0] < w[1]);
                if !increasing || decay_epochs.iter().any(|e| !e.is_finite() || *e <= 0.0) {
                    return Err(OptimError::BadDecayEpochs);
                }
                Ok(())
            }
        }
    }
}

/// Learning rate at `step` (0-based count of completed steps).
///
/// `steps_per_epoch` converts steps to epochs for the epoch-based schedule;
/// it must be at least 1.
pub fn lr_at(schedule: &ScheduleSpec, base_lr: f64, step: u64, steps_per_epoch: u64) -> f64 {
    assert!(steps_per_epoch >= 1, "steps_per_epoch must be at least 1");
    match schedule {
        ScheduleSpec::Constant => base_lr,
        ScheduleSpec::LinearDecay {
            decay_steps,
            final_factor,
        } => {
            let t = step.min(*decay_steps) as f64 / *decay_steps as f64;
            base_lr * (1.0 - t * (1.0 - final_factor))
        }
        ScheduleSpec::WarmupPiecewiseExp {
            warmup_epochs,
            decay_epochs,
            decay_factor,
        } => {
            let epoch = step as f64 / steps_per_epoch as f64;
            if epoch < *warmup_epochs {
                base_lr * epoch / warmup_epochs
            } else {
                let decays = decay_epochs.iter().filter(|&&b| epoch >= b).count();
                base_lr * decay_factor.powi(decays as i32)
            }
        }
    }
}

/// Optimizer hyperparameters plus the velocity buffer.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub rule: UpdateRule,
    pub momentum: f64,
    pub base_lr: f64,
    pub schedule: ScheduleSpec,
    velocity: Vec<f64>,
}

impl OptimizerState {
    /// New optimizer with zeroed velocity for `dim` parameters.
    pub fn new(
        rule: UpdateRule,
        momentum: f64,
        base_lr: f64,
        schedule: ScheduleSpec,
        dim: usize,
    ) -> Result<OptimizerState, OptimError> {
        if !momentum.is_finite() || !(0.0..1.0).contains(&momentum) {
            return Err(OptimError::BadMomentum(momentum));
        }
        if !base_lr.is_finite() || base_lr <= 0.0 {
            return Err(OptimError::BadLearningRate(base_lr));
        }
        schedule.validate()?;
        Ok(OptimizerState {
            rule,
            momentum,
            base_lr,
            schedule,
            velocity: vec![0.0; dim],
        })
    }

    /// Current velocity buffer (for inspection in tests).
    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }
}

/// Apply one update to the model in place. `step` is the 0-based index of
/// this step, used to evaluate the schedule.
///
/// With momentum 0 both rules reduce to plain SGD.
pub fn optimizer_step(
    model: &mut ModelState,
    opt: &mut OptimizerState,
    grad: &[f64],
    step: u64,
    steps_per_epoch: u64,
) {
    assert_eq!(
        grad.len(),
        model.params.len(),
        "gradient and parameter sizes must match"
    );
    let lr = lr_at(&opt.schedule, opt.base_lr, step, steps_per_epoch);
    let mu = opt.momentum;
    match opt.rule {
        UpdateRule::SgdMomentum => {
            for ((v, p), &g) in opt.velocity.iter_mut().zip(&mut model.params).zip(grad) {
                *v = mu * *v - lr * g;
                *p += *v;
            }
        }
        UpdateRule::Nesterov => {
            for ((v, p), &g) in opt.velocity.iter_mut().zip(&mut model.params).zip(grad) {
                *v = mu * *v - lr * g;
                *p += mu * *v - lr * g;
            }
        }
    }
}
