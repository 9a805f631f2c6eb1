//! Experiment configuration: one JSON file describing the task, the
//! pipeline arms, the optimizer, the search, and the timing model.
//!
//! Unknown keys anywhere in the file are errors — a typo in a config should
//! fail loudly, not silently fall back to a default.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::quasi::{DimScale, SearchSpace};
use super::HarnessError;
use crate::echo::EchoFactor;
use crate::pipeline::{EchoInsertion, PipelineConfig};
use crate::timing::TimingModel;
use crate::trainer::{ScheduleSpec, TargetSpec, TaskSpec, UpdateRule};

/// One pipeline variant to search over (e.g. the no-echo baseline and an
/// echoing configuration). Arms share everything except the echo setup.
#[derive(Clone, Debug, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    /// Short identifier; appears in CSV rows and file names.
    pub name: String,
    pub echo_insertion: EchoInsertion,
    pub echo_factor: EchoFactor,
}

/// Pipeline settings shared by all arms.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSection {
    pub batch_size: usize,
    pub shuffle_buffer_size: usize,
    #[serde(default)]
    pub augment_noise_scale: f64,
    pub arms: Vec<ArmSpec>,
}

/// Optimizer defaults; searched dimensions override these per trial.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub rule: UpdateRule,
    pub momentum: f64,
    pub base_lr: f64,
}

fn default_eval_interval() -> u64 {
    25
}

/// The search protocol: which hyperparameters to vary and how many
/// independent searches and trials to run.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    pub dims: SearchSpace,
    /// Non-diverged trials per search; diverged draws are replaced.
    pub n_trials: usize,
    /// Independent repetitions of the whole search.
    pub n_searches: usize,
    /// Fresh-example budget per trial.
    pub budget_fresh: u64,
    pub target: TargetSpec,
    #[serde(default = "default_eval_interval")]
    pub eval_interval: u64,
}

/// A full experiment description, as read from one JSON config file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskSpec,
    pub pipeline: PipelineSection,
    pub optimizer: OptimizerSection,
    pub schedule: ScheduleSpec,
    pub search: SearchSection,
    pub timing: TimingModel,
    pub output_dir: PathBuf,
    pub master_seed: u64,
}

/// Hyperparameter names that can appear in `search.dims`, with the
/// schedule kinds they require (None = any schedule).
const SEARCHABLE: [(&str, Option<&str>); 6] = [
    ("base_lr", None),
    ("momentum", None),
    ("decay_steps", Some("linear_decay")),
    ("final_factor", Some("linear_decay")),
    ("warmup_epochs", Some("warmup_piecewise_exp")),
    ("decay_factor", Some("warmup_piecewise_exp")),
];

fn schedule_kind(schedule: &ScheduleSpec) -> &'static str {
    match schedule {
        ScheduleSpec::Constant => "constant",
        ScheduleSpec::LinearDecay { .. } => "linear_decay",
        ScheduleSpec::WarmupPiecewiseExp { .. } => "warmup_piecewise_exp",
    }
}

impl ExperimentConfig {
    /// Load and validate a config file.
    pub fn load(path: &Path) -> Result<ExperimentConfig, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    /// Check everything that can be checked before running.
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.task.validate(self.search.target.metric)?;
        self.schedule
            .validate()
            .map_err(|e| HarnessError::Invalid(format!("schedule: {e}")))?;
        self.timing
            .validate()
            .map_err(|e| HarnessError::Invalid(format!("timing: {e}")))?;

        if self.pipeline.arms.is_empty() {
            return Err(HarnessError::Invalid(
                "pipeline.arms must not be empty".into(),
            ));
        }
        let mut names: Vec<&str> = self.pipeline.arms.iter().map(|a| a.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.pipeline.arms.len() {
            return Err(HarnessError::Invalid("duplicate arm names".into()));
        }
        for arm in &self.pipeline.arms {
            if arm.name.is_empty()
                || !arm
                    .name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
            {
                return Err(HarnessError::Invalid(format!(
                    "arm name `{}` must be non-empty and use only [A-Za-z0-9_-] \
                     (it becomes part of file names)",
                    arm.name
                )));
            }
            // Assembling the pipeline config runs its own validation.
            self.pipeline_for(arm, 0)
                .validate()
                .map_err(|e| HarnessError::Invalid(format!("arm `{}`: {e}", arm.name)))?;
        }

        if self.search.n_trials == 0 || self.search.n_searches == 0 {
            return Err(HarnessError::Invalid(
                "search.n_trials and search.n_searches must be at least 1".into(),
            ));
        }
        if self.search.budget_fresh == 0 {
            return Err(HarnessError::Invalid(
                "search.budget_fresh must be at least 1".into(),
            ));
        }
        if self.search.eval_interval == 0 {
            return Err(HarnessError::Invalid(
                "search.eval_interval must be at least 1".into(),
            ));
        }
        if !self.search.target.value.is_finite() {
            return Err(HarnessError::Invalid(
                "search.target.value must be finite".into(),
            ));
        }
        if !self.optimizer.momentum.is_finite() || !(0.0..1.0).contains(&self.optimizer.momentum) {
            return Err(HarnessError::Invalid(format!(
                "optimizer.momentum must be in [0, 1), got {}",
                self.optimizer.momentum
            )));
        }
        if !self.optimizer.base_lr.is_finite() || self.optimizer.base_lr <= 0.0 {
            return Err(HarnessError::Invalid(format!(
                "optimizer.base_lr must be > 0, got {}",
                self.optimizer.base_lr
            )));
        }

        self.search.dims.validate()?;
        let kind = schedule_kind(&self.schedule);
        for dim in &self.search.dims.dims {
            let Some((_, requires)) = SEARCHABLE.iter().find(|(n, _)| *n == dim.name.as_str())
            else {
                let known: Vec<&str> = SEARCHABLE.iter().map(|(n, _)| *n).collect();
                return Err(HarnessError::Invalid(format!(
                    "unknown search dim `{}`; searchable: {}",
                    dim.name,
                    known.join(", ")
                )));
            };
            if let Some(required) = requires {
                if *required != kind {
                    return Err(HarnessError::Invalid(format!(
                        "search dim `{}` requires the {required} schedule, \
                         but the config uses {kind}",
                        dim.name
                    )));
                }
            }
            // Range sanity for the dims with hard domain limits.
            match dim.name.as_str() {
                "base_lr" if dim.low <= 0.0 => {
                    return Err(HarnessError::Invalid(
                        "search dim `base_lr` must stay > 0".into(),
                    ));
                }
                "momentum" if dim.low < 0.0 || dim.high >= 1.0 => {
                    return Err(HarnessError::Invalid(
                        "search dim `momentum` must stay within [0, 1)".into(),
                    ));
                }
                "decay_steps" if dim.scale != DimScale::IntegerRange || dim.low < 1.0 => {
                    return Err(HarnessError::Invalid(
                        "search dim `decay_steps` must be an integer_range starting at >= 1".into(),
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Assemble the pipeline config for one arm.
    pub fn pipeline_for(&self, arm: &ArmSpec, rng_seed: u64) -> PipelineConfig {
        PipelineConfig {
            dataset_size: self.task.train_size(),
            feature_dim: self.task.feature_dim(),
            batch_size: self.pipeline.batch_size,
            shuffle_buffer_size: self.pipeline.shuffle_buffer_size,
            echo_insertion: arm.echo_insertion,
            echo_factor: arm.echo_factor,
            augment_noise_scale: self.pipeline.augment_noise_scale,
            rng_seed,
        }
    }

    /// Apply one searched hyperparameter value, returning the updated
    /// (base_lr, momentum, schedule) triple.
    pub fn apply_dim(
        name: &str,
        value: f64,
        base_lr: &mut f64,
        momentum: &mut f64,
        schedule: &mut ScheduleSpec,
    ) {
        match (name, &mut *schedule) {
            ("base_lr", _) => *base_lr = value,
            ("momentum", _) => *momentum = value,
            ("decay_steps", ScheduleSpec::LinearDecay { decay_steps, .. }) => {
                *decay_steps = value as u64;
            }
            ("final_factor", ScheduleSpec::LinearDecay { final_factor, .. }) => {
                *final_factor = value;
            }
            ("warmup_epochs", ScheduleSpec::WarmupPiecewiseExp { warmup_epochs, .. }) => {
                *warmup_epochs = value;
            }
            ("decay_factor", ScheduleSpec::WarmupPiecewiseExp { decay_factor, .. }) => {
                *decay_factor = value;
            }
            // Validation rejected every other combination up front.
            (name, _) => unreachable!("unvalidated search dim `{name}`"),
        }
    }
}
