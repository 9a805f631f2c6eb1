//! Synthetic tasks: deterministic dataset generators paired with a model.
//!
//! Data comes from counter-based draws keyed on `data_seed`, so a task spec
//! always generates byte-identical datasets regardless of what else a run
//! does with its RNGs. Train and eval sets use disjoint key streams.
//!
//! The classification train set is emitted *sorted by class*. A stream in
//! class order is maximally hostile to small shuffle buffers, which makes
//! the interaction between echoing, buffer size and final quality visible
//! at desk scale.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::model::{MetricKind, ModelKind};
use crate::record::{Dataset, Label};
use crate::seeds;

/// Error validating a task spec.
#[derive(Debug, Error, PartialEq)]
pub enum TaskError {
    #[error("train_size and eval_size must be at least 1")]
    EmptySplit,
    #[error("feature_dim must be at least 1")]
    ZeroFeatureDim,
    #[error("gaussian_classes needs n_classes >= 2, got {0}")]
    TooFewClasses(usize),
    #[error("separation must be finite and >= 0, got {0}")]
    BadSeparation(f64),
    #[error("noise_sigma must be finite and >= 0, got {0}")]
    BadNoise(f64),
    #[error("model {model:?} cannot train on task `{task}`")]
    ModelMismatch {
        model: ModelKind,
        task: &'static str,
    },
    #[error("metric `accuracy` is undefined for regression tasks")]
    AccuracyOnRegression,
}

/// A synthetic task: how to generate the data and which model to fit.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    /// Mixture of unit-variance Gaussian blobs, one per class. With two
    /// classes the means sit exactly `separation` apart; with more, each
    /// mean is an independent random direction at radius `separation / 2`.
    GaussianClasses {
        feature_dim: usize,
        n_classes: usize,
        train_size: usize,
        eval_size: usize,
        separation: f64,
        data_seed: u64,
        model: ModelKind,
    },
    /// Linear ground truth `y = w . x + noise`, standard-normal features.
    SyntheticRegression {
        feature_dim: usize,
        train_size: usize,
        eval_size: usize,
        noise_sigma: f64,
        data_seed: u64,
    },
}

impl TaskSpec {
    /// Check sizes and the task/model pairing; `metric` is the stopping
    /// metric the task will be evaluated with.
    pub fn validate(&self, metric: MetricKind) -> Result<(), TaskError> {
        match self {
            TaskSpec::GaussianClasses {
                feature_dim,
                n_classes,
                train_size,
                eval_size,
                separation,
                model,
                ..
            } => {
                if *train_size == 0 || *eval_size == 0 {
                    return Err(TaskError::EmptySplit);
                }
                if *feature_dim == 0 {
                    return Err(TaskError::ZeroFeatureDim);
                }
                if *n_classes < 2 {
                    return Err(TaskError::TooFewClasses(*n_classes));
                }
                if !separation.is_finite() || *separation < 0.0 {
                    return Err(TaskError::BadSeparation(*separation));
                }
                if *model == ModelKind::LinearRegression {
                    return Err(TaskError::ModelMismatch {
                        model: *model,
                        task: "gaussian_classes",
                    });
                }
                Ok(())
            }
            TaskSpec::SyntheticRegression {
                feature_dim,
                train_size,
                eval_size,
                noise_sigma,
                ..
            } => {
                if *train_size == 0 || *eval_size == 0 {
                    return Err(TaskError::EmptySplit);
                }
                if *feature_dim == 0 {
                    return Err(TaskError::ZeroFeatureDim);
                }
                if !noise_sigma.is_finite() || *noise_sigma < 0.0 {
                    return Err(TaskError::BadNoise(*noise_sigma));
                }
                if metric == MetricKind::Accuracy {
                    return Err(TaskError::AccuracyOnRegression);
                }
                Ok(())
            }
        }
    }

    /// The model this task trains.
    pub fn model(&self) -> ModelKind {
        match self {
            TaskSpec::GaussianClasses { model, .. } => *model,
            TaskSpec::SyntheticRegression { .. } => ModelKind::LinearRegression,
        }
    }

    pub fn feature_dim(&self) -> usize {
        match self {
            TaskSpec::GaussianClasses { feature_dim, .. }
            | TaskSpec::SyntheticRegression { feature_dim, .. } => *feature_dim,
        }
    }

    /// Output classes (1 for regression).
    pub fn n_classes(&self) -> usize {
        match self {
            TaskSpec::GaussianClasses { n_classes, .. } => *n_classes,
            TaskSpec::SyntheticRegression { .. } => 1,
        }
    }

    pub fn train_size(&self) -> usize {
        match self {
            TaskSpec::GaussianClasses { train_size, .. }
            | TaskSpec::SyntheticRegression { train_size, .. } => *train_size,
        }
    }

    /// Generate the train and eval splits.
    pub fn generate(&self) -> (Dataset, Dataset) {
        match self {
            TaskSpec::GaussianClasses {
                feature_dim,
                n_classes,
                train_size,
                eval_size,
                separation,
                data_seed,
                ..
            } => {
                let means = class_means(*n_classes, *feature_dim, *separation, *data_seed);
                // Train labels in class-sorted blocks; eval interleaved.
                let train = gaussian_split(
                    &means,
                    *train_size,
                    seeds::derive(*data_seed, "train", 0),
                    |i| i * n_classes / train_size,
                );
                let eval = gaussian_split(
                    &means,
                    *eval_size,
                    seeds::derive(*data_seed, "eval", 0),
                    |i| i % n_classes,
                );
                (train, eval)
            }
            TaskSpec::SyntheticRegression {
                feature_dim,
                train_size,
                eval_size,
                noise_sigma,
                data_seed,
            } => {
                let w_base = seeds::derive(*data_seed, "weights", 0);
                let w: Vec<f64> = (0..*feature_dim)
                    .map(|j| seeds::unit_normal(seeds::mix(w_base, j as u64)))
                    .collect();
                let train = regression_split(
                    &w,
                    *train_size,
                    *noise_sigma,
                    seeds::derive(*data_seed, "train", 0),
                );
                let eval = regression_split(
                    &w,
                    *eval_size,
                    *noise_sigma,
                    seeds::derive(*data_seed, "eval", 0),
                );
                (train, eval)
            }
        }
    }
}

/// Class means. For two classes: an antipodal pair `separation` apart; for
/// more: independent random directions at radius `separation / 2`.
fn class_means(n_classes: usize, dim: usize, separation: f64, data_seed: u64) -> Vec<Vec<f64>> {
    let base = seeds::derive(data_seed, "means", 0);
    let radius = separation / 2.0;
    let direction = |c: usize| -> Vec<f64> {
        let raw: Vec<f64> = (0..dim)
            .map(|j| seeds::unit_normal(seeds::mix(seeds::mix(base, c as u64), j as u64)))
            .collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        raw.into_iter().map(|x| x * radius / norm).collect()
    };
    if n_classes == 2 {
        let m0 = direction(0);
        let m1 = m0.iter().map(|x| -x).collect();
        vec![m0, m1]
    } else {
        (0..n_classes).map(direction).collect()
    }
}

fn gaussian_split(
    means: &[Vec<f64>],
    size: usize,
    key_base: u64,
    class_of: impl Fn(usize) -> usize,
) -> Dataset {
    let dim = means[0].len();
    let mut features = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for i in 0..size {
        let c = class_of(i);
        let row_key = seeds::mix(key_base, i as u64);
        let row: Vec<f64> = (0..dim)
            .map(|j| means[c][j] + seeds::unit_normal(seeds::mix(row_key, j as u64)))
            .collect();
        features.push(row);
        labels.push(Label::Class(c as u32));
    }
    Dataset::new(features, labels)
}

fn regression_split(w: &[f64], size: usize, noise_sigma: f64, key_base: u64) -> Dataset {
    let dim = w.len();
    let mut features = Vec::with_capacity(size);
    let mut labels = Vec::with_capacity(size);
    for i in 0..size {
        let row_key = seeds::mix(key_base, i as u64);
        let row: Vec<f64> = (0..dim)
            .map(|j| seeds::unit_normal(seeds::mix(row_key, j as u64)))
            .collect();
        let y = row.iter().zip(w).map(|(x, wj)| x * wj).sum::<f64>()
            + noise_sigma * seeds::unit_normal(seeds::mix(row_key, dim as u64));
        features.push(row);
        labels.push(Label::Value(y));
    }
    Dataset::new(features, labels)
}
