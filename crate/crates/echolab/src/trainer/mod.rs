//! Training loop with fresh-example accounting.
//!
//! [`train_until_target`] pulls batches from a pipeline, applies SGD
//! updates, and stops when the eval metric reaches its target, the fresh
//! data budget runs out, or the run diverges. What it counts — fresh reads
//! from the source vs. examples actually stepped on — is the quantity the
//! whole experiment design turns on: echoing makes the two differ.

mod model;
mod optim;
mod task;

pub use model::{MetricKind, ModelError, ModelKind, ModelState, NonFinite};
pub use optim::{lr_at, optimizer_step, OptimError, OptimizerState, ScheduleSpec, UpdateRule};
pub use task::{TaskError, TaskSpec};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pipeline::{BatchStream, ConfigError, Pipeline, PipelineConfig};
use crate::record::Dataset;
use crate::seeds;
use crate::timing::TimingModel;

/// Stopping target: a metric and the value it must reach (at most, for
/// losses; at least, for accuracy).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub metric: MetricKind,
    pub value: f64,
}

impl TargetSpec {
    /// Does `observed` satisfy the target?
    pub fn met_by(&self, observed: f64) -> bool {
        match self.metric {
            MetricKind::Loss => observed <= self.value,
            MetricKind::Accuracy => observed >= self.value,
        }
    }

    /// Is `a` better than `b` under this metric?
    pub fn better(&self, a: f64, b: f64) -> bool {
        match self.metric {
            MetricKind::Loss => a < b,
            MetricKind::Accuracy => a > b,
        }
    }
}

/// How a training run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// The eval metric reached the target.
    ReachedTarget,
    /// The fresh-example budget ran out (or the stream ended) first.
    BudgetExhausted,
    /// A loss, gradient, or eval metric stopped being finite.
    Diverged,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunStatus::ReachedTarget => "reached_target",
            RunStatus::BudgetExhausted => "budget_exhausted",
            RunStatus::Diverged => "diverged",
        })
    }
}

/// One evaluation on the metric curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricPoint {
    pub sgd_steps: u64,
    pub fresh_examples: u64,
    pub metric: f64,
}

/// Everything a run consumed and produced.
#[derive(Clone, Debug, Serialize)]
pub struct RunCounters {
    /// Fresh source reads when the run stopped. For a run that reached its
    /// target this is the read count at the deciding evaluation, i.e. the
    /// fresh data the result cost.
    pub fresh_examples: u64,
    /// Examples that went through SGD steps (steps x batch size).
    pub examples_emitted: u64,
    /// Optimizer updates applied.
    pub sgd_steps: u64,
    /// Modelled wall time for the fresh data consumed (0 without a timing
    /// model).
    pub simulated_walltime: f64,
    /// Fresh reads at the evaluation that met the target, if any.
    pub reached_target_at_fresh: Option<u64>,
    /// The evaluation curve, including the pre-training point.
    pub history: Vec<MetricPoint>,
}

/// Result of one training run.
#[derive(Clone, Debug, Serialize)]
pub struct TrainRun {
    pub status: RunStatus,
    /// Best eval metric seen at any evaluation.
    pub best_metric: f64,
    pub counters: RunCounters,
}

/// Error constructing a training run (invalid configuration; divergence is
/// a [`RunStatus`], not an error).
#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Pipeline(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optimizer(#[from] OptimError),
    #[error("target value must be finite")]
    BadTarget,
    #[error("budget_fresh must be at least 1")]
    ZeroBudget,
    #[error("eval_interval must be at least 1")]
    ZeroEvalInterval,
    #[error("train dataset and eval dataset must not be empty")]
    EmptyData,
}

/// Full description of one training run.
#[derive(Clone, Debug)]
pub struct TrainSetup<'a> {
    pub pipeline: &'a PipelineConfig,
    pub model: ModelKind,
    /// Output classes for classifiers (ignored for regression).
    pub n_classes: usize,
    pub rule: UpdateRule,
    pub momentum: f64,
    pub base_lr: f64,
    pub schedule: ScheduleSpec,
    pub target: TargetSpec,
    /// Stop once this many fresh examples have been read.
    pub budget_fresh: u64,
    /// Evaluate every this many SGD steps.
    pub eval_interval: u64,
    /// Seed for model init and the wall-time simulation; the pipeline's own
    /// seed lives in its config.
    pub run_seed: u64,
    /// `Some(depth)` runs the pipeline behind a prefetch thread with the
    /// given queue depth; `None` pulls deterministically inline.
    pub prefetch: Option<usize>,
}

/// Steps that consume one epoch of fresh data at the configured echo
/// factor, for epoch-based schedules. At least 1.
pub fn steps_per_epoch(config: &PipelineConfig) -> u64 {
    let per_epoch =
        config.dataset_size as f64 * config.echo_factor.value() / config.batch_size as f64;
    (per_epoch.round() as u64).max(1)
}

/// Train until the target metric, the fresh-data budget, or divergence.
///
/// The run evaluates before the first step (a target that is already met
/// costs zero fresh examples) and then after every `eval_interval` steps,
/// plus once more when the budget stops the run between evaluations.
/// Everything is a pure function of the setup, so a rerun reproduces the
/// result exactly (in deterministic mode, to the byte).
pub fn train_until_target(
    setup: &TrainSetup,
    train_data: Arc<Dataset>,
    eval_data: &Dataset,
    timing: Option<&TimingModel>,
) -> Result<TrainRun, TrainError> {
    if !setup.target.value.is_finite() {
        return Err(TrainError::BadTarget);
    }
    if setup.budget_fresh == 0 {
        return Err(TrainError::ZeroBudget);
    }
    if setup.eval_interval == 0 {
        return Err(TrainError::ZeroEvalInterval);
    }
    if train_data.is_empty() || eval_data.is_empty() {
        return Err(TrainError::EmptyData);
    }

    let mut model = ModelState::init(
        setup.model,
        setup.pipeline.feature_dim,
        setup.n_classes,
        seeds::derive(setup.run_seed, "model", 0),
    )?;
    let mut opt = OptimizerState::new(
        setup.rule,
        setup.momentum,
        setup.base_lr,
        setup.schedule.clone(),
        model.params.len(),
    )?;
    let spe = steps_per_epoch(setup.pipeline);

    let mut history = Vec::new();
    let first = model.eval_metric(eval_data, setup.target.metric);
    history.push(MetricPoint {
        sgd_steps: 0,
        fresh_examples: 0,
        metric: first,
    });
    let mut best = first;
    if setup.target.met_by(first) {
        return Ok(TrainRun {
            status: RunStatus::ReachedTarget,
            best_metric: best,
            counters: RunCounters {
                fresh_examples: 0,
                examples_emitted: 0,
                sgd_steps: 0,
                simulated_walltime: 0.0,
                reached_target_at_fresh: Some(0),
                history,
            },
        });
    }

    let pipeline = Pipeline::build(setup.pipeline, train_data, None)?;
    let quiescent = pipeline.counters();
    let mut stream: Box<dyn BatchStream> = match setup.prefetch {
        Some(depth) => Box::new(pipeline.into_prefetch(depth)),
        None => Box::new(pipeline),
    };

    let mut steps = 0u64;
    let mut reached_at = None;
    let status;
    'run: loop {
        let out_of_budget = stream.fresh_examples() >= setup.budget_fresh;
        let batch = if out_of_budget {
            None
        } else {
            stream.next_batch()
        };
        let Some(batch) = batch else {
            // Budget spent (or stream ended): one last look at the metric —
            // an evaluation between intervals is cheap and may show the
            // target was already met by the final steps.
            if !steps.is_multiple_of(setup.eval_interval) {
                let m = model.eval_metric(eval_data, setup.target.metric);
                if !m.is_finite() {
                    status = RunStatus::Diverged;
                    break 'run;
                }
                let fresh = stream.fresh_examples();
                history.push(MetricPoint {
                    sgd_steps: steps,
                    fresh_examples: fresh,
                    metric: m,
                });
                if setup.target.better(m, best) {
                    best = m;
                }
                if setup.target.met_by(m) {
                    reached_at = Some(fresh);
                    status = RunStatus::ReachedTarget;
                    break 'run;
                }
            }
            status = RunStatus::BudgetExhausted;
            break 'run;
        };

        let (_, grad) = match model.grad(&batch) {
            Ok(pair) => pair,
            Err(NonFinite) => {
                status = RunStatus::Diverged;
                break 'run;
            }
        };
        optimizer_step(&mut model, &mut opt, &grad, steps, spe);
        steps += 1;

        if steps.is_multiple_of(setup.eval_interval) {
            let m = model.eval_metric(eval_data, setup.target.metric);
            if !m.is_finite() {
                status = RunStatus::Diverged;
                break 'run;
            }
            let fresh = stream.fresh_examples();
            history.push(MetricPoint {
                sgd_steps: steps,
                fresh_examples: fresh,
                metric: m,
            });
            if setup.target.better(m, best) {
                best = m;
            }
            if setup.target.met_by(m) {
                reached_at = Some(fresh);
                status = RunStatus::ReachedTarget;
                break 'run;
            }
        }
    }

    let examples_emitted = stream.examples_emitted();
    drop(stream); // reap any prefetch thread so the counters go quiescent
    let fresh_examples = match reached_at {
        Some(fresh) => fresh,
        None => quiescent.fresh_examples(),
    };
    let simulated_walltime = timing.map_or(0.0, |t| {
        let fresh_batches = fresh_examples as f64 / setup.pipeline.batch_size as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(setup.run_seed, "walltime", 0));
        t.simulate_walltime(fresh_batches, setup.pipeline.echo_factor.value(), &mut rng)
    });

    Ok(TrainRun {
        status,
        best_metric: best,
        counters: RunCounters {
            fresh_examples,
            examples_emitted,
            sgd_steps: steps,
            simulated_walltime,
            reached_target_at_fresh: reached_at,
            history,
        },
    })
}
