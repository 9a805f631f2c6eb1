//! Small dense models with hand-written gradients.
//!
//! Parameters live in one flat `Vec<f64>` so the optimizer can treat every
//! model uniformly. Layouts:
//!
//! * linear regression: `[w (d), b (1)]`
//! * softmax classifier: `[W (C x d, row-major), b (C)]`
//! * small MLP: `[W1 (H x d), b1 (H), W2 (C x H), b2 (C)]`, tanh hidden
//!   layer, softmax output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{BatchRecord, Dataset, Label};
use crate::seeds;

/// Which model to train.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelKind {
    /// Scalar linear regression with squared loss.
    LinearRegression,
    /// Multinomial logistic regression with cross-entropy loss.
    SoftmaxClassifier,
    /// One tanh hidden layer of `hidden` units, softmax output,
    /// cross-entropy loss.
    SmallMlp { hidden: usize },
}

/// Error constructing a model.
#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("feature_dim must be at least 1")]
    ZeroFeatureDim,
    #[error("classification models need n_classes >= 2, got {0}")]
    TooFewClasses(usize),
    #[error("small_mlp needs hidden >= 1")]
    ZeroHidden,
}

/// Error signalled when a gradient or loss stops being finite; the training
/// loop reports the run as diverged rather than propagating a panic.
#[derive(Debug, Error, PartialEq)]
#[error("loss or gradient is no longer finite")]
pub struct NonFinite;

/// Metric used for evaluation and stopping.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Mean loss over the eval set; targets are "at most".
    Loss,
    /// Classification accuracy over the eval set; targets are "at least".
    Accuracy,
}

/// A model's parameters plus the shape information needed to use them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub kind: ModelKind,
    pub feature_dim: usize,
    /// Output classes; 1 for regression.
    pub n_classes: usize,
    pub params: Vec<f64>,
}

impl ModelState {
    /// Initialise parameters uniformly in `[-0.05, 0.05)`, keyed by `seed`.
    pub fn init(
        kind: ModelKind,
        feature_dim: usize,
        n_classes: usize,
        seed: u64,
    ) -> Result<ModelState, ModelError> {
        if feature_dim == 0 {
            return Err(ModelError::ZeroFeatureDim);
        }
        let n_classes = match kind {
            ModelKind::LinearRegression => 1,
            ModelKind::SoftmaxClassifier | ModelKind::SmallMlp { .. } => {
                if n_classes < 2 {
                    return Err(ModelError::TooFewClasses(n_classes));
                }
                n_classes
            }
        };
        if let ModelKind::SmallMlp { hidden } = kind {
            if hidden == 0 {
                return Err(ModelError::ZeroHidden);
            }
        }
        let count = param_count(kind, feature_dim, n_classes);
        let base = seeds::derive(seed, "model-init", 0);
        let params = (0..count)
            .map(|i| (seeds::unit_uniform(seeds::mix(base, i as u64)) - 0.5) * 0.1)
            .collect();
        Ok(ModelState {
            kind,
            feature_dim,
            n_classes,
            params,
        })
    }

    /// Mean loss over the batch and its gradient with respect to every
    /// parameter. `Err(NonFinite)` signals divergence.
    pub fn grad(&self, batch: &BatchRecord) -> Result<(f64, Vec<f64>), NonFinite> {
        let mut g = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        for ex in &batch.examples {
            loss += self.backward(&ex.features, ex.label, &mut g);
        }
        let scale = 1.0 / batch.len() as f64;
        loss *= scale;
        for v in &mut g {
            *v *= scale;
        }
        if !loss.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(NonFinite);
        }
        Ok((loss, g))
    }

    /// Mean metric over a dataset.
    pub fn eval_metric(&self, data: &Dataset, metric: MetricKind) -> f64 {
        assert!(!data.is_empty(), "eval dataset must not be empty");
        match metric {
            MetricKind::Loss => {
                let mut sum = 0.0;
                for i in 0..data.len() {
                    sum += self.example_loss(data.features_at(i), data.label_at(i));
                }
                sum / data.len() as f64
            }
            MetricKind::Accuracy => {
                assert!(
                    self.kind != ModelKind::LinearRegression,
                    "accuracy is undefined for regression models"
                );
                let mut hits = 0usize;
                for i in 0..data.len() {
                    if self.predict_class(data.features_at(i)) == data.label_at(i).class() {
                        hits += 1;
                    }
                }
                hits as f64 / data.len() as f64
            }
        }
    }

    /// Loss of a single example under the current parameters.
    pub fn example_loss(&self, x: &[f64], label: Label) -> f64 {
        match self.kind {
            ModelKind::LinearRegression => {
                let err = self.linear_pred(x) - label.value();
                0.5 * err * err
            }
            ModelKind::SoftmaxClassifier => cross_entropy(&self.logits_linear(x), label.class()),
            ModelKind::SmallMlp { hidden } => {
                let (_, logits) = self.mlp_forward(x, hidden);
                cross_entropy(&logits, label.class())
            }
        }
    }

    /// Most likely class under the current parameters (classifiers only).
    pub fn predict_class(&self, x: &[f64]) -> u32 {
        let logits = match self.kind {
            ModelKind::LinearRegression => panic!("no classes in a regression model"),
            ModelKind::SoftmaxClassifier => self.logits_linear(x),
            ModelKind::SmallMlp { hidden } => self.mlp_forward(x, hidden).1,
        };
        let mut best = 0usize;
        for c in 1..logits.len() {
            if logits[c] > logits[best] {
                best = c;
            }
        }
        best as u32
    }

    fn linear_pred(&self, x: &[f64]) -> f64 {
        let d = self.feature_dim;
        dot(&self.params[..d], x) + self.params[d]
    }

    /// Logits of the plain softmax classifier.
    fn logits_linear(&self, x: &[f64]) -> Vec<f64> {
        let (d, c) = (self.feature_dim, self.n_classes);
        let bias = c * d;
        (0..c)
            .map(|k| dot(&self.params[k * d..(k + 1) * d], x) + self.params[bias + k])
            .collect()
    }

    /// Hidden activations and logits of the MLP.
    fn mlp_forward(&self, x: &[f64], hidden: usize) -> (Vec<f64>, Vec<f64>) {
        let (d, c, h) = (self.feature_dim, self.n_classes, hidden);
        let (ob1, ow2, ob2) = (h * d, h * d + h, h * d + h + c * h);
        let act: Vec<f64> = (0..h)
            .map(|j| (dot(&self.params[j * d..(j + 1) * d], x) + self.params[ob1 + j]).tanh())
            .collect();
        let logits = (0..c)
            .map(|k| dot(&self.params[ow2 + k * h..ow2 + (k + 1) * h], &act) + self.params[ob2 + k])
            .collect();
        (act, logits)
    }

    /// Accumulate one example's loss gradient into `g`; returns the loss.
    fn backward(&self, x: &[f64], label: Label, g: &mut [f64]) -> f64 {
        match self.kind {
            ModelKind::LinearRegression => {
                let d = self.feature_dim;
                let err = self.linear_pred(x) - label.value();
                for i in 0..d {
                    g[i] += err * x[i];
                }
                g[d] += err;
                0.5 * err * err
            }
            ModelKind::SoftmaxClassifier => {
                let (d, c) = (self.feature_dim, self.n_classes);
                let y = label.class() as usize;
                let logits = self.logits_linear(x);
                let loss = cross_entropy(&logits, label.class());
                let p = softmax(&logits);
                for k in 0..c {
                    let dz = p[k] - f64::from(k == y);
                    for i in 0..d {
                        g[k * d + i] += dz * x[i];
                    }
                    g[c * d + k] += dz;
                }
                loss
            }
            ModelKind::SmallMlp { hidden } => {
                let (d, c, h) = (self.feature_dim, self.n_classes, hidden);
                let (ob1, ow2, ob2) = (h * d, h * d + h, h * d + h + c * h);
                let y = label.class() as usize;
                let (act, logits) = self.mlp_forward(x, hidden);
                let loss = cross_entropy(&logits, label.class());
                let p = softmax(&logits);
                let mut dact = vec![0.0; h];
                for k in 0..c {
                    let dz = p[k] - f64::from(k == y);
                    for j in 0..h {
                        g[ow2 + k * h + j] += dz * act[j];
                        dact[j] += dz * self.params[ow2 + k * h + j];
                    }
                    g[ob2 + k] += dz;
                }
                for j in 0..h {
                    let dz1 = dact[j] * (1.0 - act[j] * act[j]);
                    for i in 0..d {
                        g[j * d + i] += dz1 * x[i];
                    }
                    g[ob1 + j] += dz1;
                }
                loss
            }
        }
    }
}

fn param_count(kind: ModelKind, d: usize, c: usize) -> usize {
    match kind {
        ModelKind::LinearRegression => d + 1,
        ModelKind::SoftmaxClassifier => c * d + c,
        ModelKind::SmallMlp { hidden } => hidden * d + hidden + c * hidden + c,
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `-log p(y)` via a stable log-sum-exp.
fn cross_entropy(logits: &[f64], y: u32) -> f64 {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln() + m;
    lse - logits[y as usize]
}
