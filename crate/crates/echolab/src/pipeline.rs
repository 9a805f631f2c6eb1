//! Pull-based streaming pipeline: source, echoing, shuffle buffer,
//! augmentation, batching.
//!
//! A pipeline is a chain of iterator stages over [`ExampleRecord`]s ending
//! in a batching stage (and, for batch-level echoing, an echo stage over
//! whole batches). The echoing stage can sit at several insertion points;
//! the stage order for each is fixed:
//!
//! * no echoing:              source -> shuffle -> augment -> batch
//! * echo before augment:     source -> echo -> shuffle -> augment -> batch
//! * echo after augment:      source -> augment -> echo -> shuffle -> batch
//! * batch echoing:           source -> shuffle -> augment -> batch -> echo
//!
//! Every pipeline contains exactly one shuffle buffer. When examples are
//! echoed, the buffer sits *after* the echo stage so copies of one read are
//! spread out instead of arriving back to back; echoed batches are repeated
//! as-is and deliberately not re-shuffled.
//!
//! Batches are always full: a tail of examples smaller than the batch size
//! is dropped at end of stream.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::echo::{EchoFactor, EchoStage};
use crate::record::{BatchRecord, Dataset, ExampleRecord};
use crate::seeds;

/// Where the echoing stage sits in the pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoInsertion {
    /// No echoing stage at all; `echo_factor` must be 1.
    None,
    /// Echo fresh examples, then shuffle, then augment each copy separately.
    ExampleBeforeAugment,
    /// Augment fresh examples, then echo the augmented records (copies are
    /// bit-identical), then shuffle.
    ExampleAfterAugment,
    /// Echo whole batches after batching; repeats are not shuffled.
    Batch,
}

impl EchoInsertion {
    /// Short lowercase name used in CSV columns and stage listings.
    pub fn name(self) -> &'static str {
        match self {
            EchoInsertion::None => "none",
            EchoInsertion::ExampleBeforeAugment => "example_before_augment",
            EchoInsertion::ExampleAfterAugment => "example_after_augment",
            EchoInsertion::Batch => "batch",
        }
    }
}

/// Declarative description of one pipeline instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Number of examples the source dataset must hold.
    pub dataset_size: usize,
    /// Width of the feature vectors.
    pub feature_dim: usize,
    /// Examples per emitted batch (batches are always full).
    pub batch_size: usize,
    /// Capacity of the shuffle buffer; 1 means pass-through order.
    pub shuffle_buffer_size: usize,
    /// Where the echoing stage sits.
    pub echo_insertion: EchoInsertion,
    /// Repetition factor for the echoing stage.
    pub echo_factor: EchoFactor,
    /// Scale of the additive noise applied by the augmentation stage;
    /// 0 disables augmentation arithmetic entirely.
    pub augment_noise_scale: f64,
    /// Seed for the pipeline's own randomness (shuffle slots, echo coins,
    /// augmentation noise). Stage streams are derived, not shared.
    pub rng_seed: u64,
}

/// Error constructing a pipeline from a config and a dataset.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("batch_size must be at least 1")]
    ZeroBatchSize,
    #[error("shuffle_buffer_size must be at least 1")]
    ZeroBufferSize,
    #[error("dataset_size must be at least 1")]
    EmptyDataset,
    #[error("config says dataset_size = {expected} but the dataset holds {actual} examples")]
    DatasetSizeMismatch { expected: usize, actual: usize },
    #[error("config says feature_dim = {expected} but the dataset rows have width {actual}")]
    FeatureDimMismatch { expected: usize, actual: usize },
    #[error("augment_noise_scale must be finite and >= 0, got {0}")]
    BadNoiseScale(f64),
    #[error("echo_insertion is `none` but echo_factor is {0}; use a factor of 1")]
    FactorWithoutEcho(f64),
}

impl PipelineConfig {
    /// Check internal consistency (without a dataset).
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.batch_size == 0 {
            return Err(ConfigError::ZeroBatchSize);
        }
        if self.shuffle_buffer_size == 0 {
            return Err(ConfigError::ZeroBufferSize);
        }
        if self.dataset_size == 0 {
            return Err(ConfigError::EmptyDataset);
        }
        if !self.augment_noise_scale.is_finite() || self.augment_noise_scale < 0.0 {
            return Err(ConfigError::BadNoiseScale(self.augment_noise_scale));
        }
        if self.echo_insertion == EchoInsertion::None && self.echo_factor != EchoFactor::ONE {
            return Err(ConfigError::FactorWithoutEcho(self.echo_factor.value()));
        }
        Ok(())
    }
}

/// Shared counters written by pipeline stages. Clones observe the same
/// underlying counts.
///
/// In pull mode the counts are exact between [`BatchStream::next_batch`]
/// calls. Behind a prefetch thread they are momentary snapshots that may
/// run ahead of the batches actually consumed; they become exact once the
/// stream is drained or the pipeline is dropped.
#[derive(Clone, Debug, Default)]
pub struct PipelineCounters {
    fresh_reads: Arc<AtomicU64>,
}

impl PipelineCounters {
    /// Number of examples read fresh from the source so far. Echoed copies
    /// do not count; every source read (including re-reads of the same
    /// example in a later epoch) counts once.
    pub fn fresh_examples(&self) -> u64 {
        self.fresh_reads.load(Ordering::Relaxed)
    }
}

// ------------------------------------------------------------------
// Stages
// ------------------------------------------------------------------

/// Reads the dataset in storage order, assigning a fresh `read_id` to every
/// read. Optionally stops after a number of epochs.
struct Source {
    data: Arc<Dataset>,
    epochs: Option<u64>,
    pos: usize,
    epoch: u64,
    next_read_id: u64,
    aug_seed: u64,
    fresh_reads: Arc<AtomicU64>,
}

impl Iterator for Source {
    type Item = ExampleRecord;

    fn next(&mut self) -> Option<ExampleRecord> {
        if self.pos == self.data.len() {
            self.pos = 0;
            self.epoch += 1;
        }
        if let Some(limit) = self.epochs {
            if self.epoch >= limit {
                return None;
            }
        }
        let i = self.pos;
        self.pos += 1;
        let read_id = self.next_read_id;
        self.next_read_id += 1;
        self.fresh_reads.fetch_add(1, Ordering::Relaxed);
        Some(ExampleRecord {
            source_index: i,
            read_id,
            echo_index: 0,
            aug_seed: self.aug_seed,
            features: self.data.features_at(i).to_vec(),
            label: self.data.label_at(i),
        })
    }
}

/// The state machine of a streaming shuffle buffer, separated from any
/// particular input so it can be driven directly in tests.
///
/// Protocol: incoming items fill the slots until the buffer is at capacity.
/// Once full, each incoming item displaces one uniformly chosen occupant,
/// which is emitted in its place. When the input ends, the remaining
/// occupants drain in uniformly random order.
pub struct ShuffleState<T> {
    slots: Vec<T>,
    capacity: usize,
    rng: ChaCha8Rng,
}

impl<T> ShuffleState<T> {
    /// New empty buffer. `capacity` must be at least 1 (a capacity of 1 is a
    /// pass-through: each incoming item displaces the previous one).
    pub fn new(capacity: usize, rng: ChaCha8Rng) -> ShuffleState<T> {
        assert!(capacity >= 1, "shuffle buffer capacity must be at least 1");
        ShuffleState {
            slots: Vec::with_capacity(capacity),
            capacity,
            rng,
        }
    }

    /// Offer one incoming item. Returns the displaced occupant once the
    /// buffer is full, or `None` while still filling.
    pub fn push_pop(&mut self, incoming: T) -> Option<T> {
        if self.slots.len() < self.capacity {
            self.slots.push(incoming);
            return None;
        }
        let slot = self.rng.random_range(0..self.slots.len());
        Some(std::mem::replace(&mut self.slots[slot], incoming))
    }

    /// Remove one uniformly chosen occupant; used to drain at end of input.
    pub fn pop_drain(&mut self) -> Option<T> {
        if self.slots.is_empty() {
            return None;
        }
        let slot = self.rng.random_range(0..self.slots.len());
        Some(self.slots.swap_remove(slot))
    }

    /// Number of occupied slots.
    pub fn occupancy(&self) -> usize {
        self.slots.len()
    }

    /// Configured capacity.
    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

/// Iterator adapter around [`ShuffleState`].
struct ShuffleStage<I: Iterator> {
    inner: I,
    state: ShuffleState<I::Item>,
}

impl<I: Iterator> ShuffleStage<I> {
    fn new(inner: I, capacity: usize, rng: ChaCha8Rng) -> ShuffleStage<I> {
        ShuffleStage {
            inner,
            state: ShuffleState::new(capacity, rng),
        }
    }
}

impl<I: Iterator> Iterator for ShuffleStage<I> {
    type Item = I::Item;

    fn next(&mut self) -> Option<I::Item> {
        loop {
            match self.inner.next() {
                Some(item) => {
                    if let Some(out) = self.state.push_pop(item) {
                        return Some(out);
                    }
                    // Item went into a free slot; keep pulling.
                }
                None => return self.state.pop_drain(),
            }
        }
    }
}

/// Add deterministic per-feature noise to one record.
///
/// The noise is a pure function of `(aug_seed, read_id, echo_index, feature
/// index)`, so re-augmenting the same record gives the same result, while
/// echoed copies with distinct `echo_index` get fresh noise. With
/// `noise_scale == 0` the record passes through untouched (bit-identical).
pub fn augment(mut record: ExampleRecord, noise_scale: f64) -> ExampleRecord {
    if noise_scale == 0.0 {
        return record;
    }
    let base = seeds::mix(
        seeds::mix(record.aug_seed, record.read_id),
        u64::from(record.echo_index),
    );
    for (i, x) in record.features.iter_mut().enumerate() {
        *x += noise_scale * seeds::unit_normal(seeds::mix(base, i as u64));
    }
    record
}

struct AugmentStage<I> {
    inner: I,
    noise_scale: f64,
}

impl<I: Iterator<Item = ExampleRecord>> Iterator for AugmentStage<I> {
    type Item = ExampleRecord;

    fn next(&mut self) -> Option<ExampleRecord> {
        self.inner.next().map(|r| augment(r, self.noise_scale))
    }
}

/// Groups examples into full batches; a final partial group is dropped.
struct Batcher<I> {
    inner: I,
    batch_size: usize,
    next_batch_id: u64,
}

impl<I: Iterator<Item = ExampleRecord>> Iterator for Batcher<I> {
    type Item = BatchRecord;

    fn next(&mut self) -> Option<BatchRecord> {
        let mut examples = Vec::with_capacity(self.batch_size);
        for _ in 0..self.batch_size {
            examples.push(self.inner.next()?);
        }
        let batch_id = self.next_batch_id;
        self.next_batch_id += 1;
        Some(BatchRecord {
            batch_id,
            echo_index: 0,
            examples,
        })
    }
}

// ------------------------------------------------------------------
// Assembled pipelines
// ------------------------------------------------------------------

/// Unified view of a batch producer, whether pulled inline or fed by a
/// prefetch thread.
pub trait BatchStream {
    /// Next full batch, or `None` at end of stream.
    fn next_batch(&mut self) -> Option<BatchRecord>;

    /// Fresh source reads so far (see [`PipelineCounters::fresh_examples`]).
    fn fresh_examples(&self) -> u64;

    /// Batches handed to the consumer so far.
    fn batches_pulled(&self) -> u64;

    /// Configured batch size.
    fn batch_size(&self) -> usize;

    /// Examples handed to the consumer so far (batches x batch size).
    fn examples_emitted(&self) -> u64 {
        self.batches_pulled() * self.batch_size() as u64
    }
}

/// A fully assembled pipeline, pulled synchronously by the consumer.
pub struct Pipeline {
    batches: Box<dyn Iterator<Item = BatchRecord> + Send>,
    counters: PipelineCounters,
    batch_size: usize,
    batches_pulled: u64,
    stage_names: Vec<&'static str>,
}

impl Pipeline {
    /// Assemble the stage chain for `config` over `dataset`.
    ///
    /// `epochs` limits how many passes the source makes over the dataset;
    /// `None` streams forever. Fractional echo factors make the per-epoch
    /// emission count random, so callers that need exact epoch accounting
    /// should use integral factors.
    pub fn build(
        config: &PipelineConfig,
        dataset: Arc<Dataset>,
        epochs: Option<u64>,
    ) -> Result<Pipeline, ConfigError> {
        config.validate()?;
        if dataset.len() != config.dataset_size {
            return Err(ConfigError::DatasetSizeMismatch {
                expected: config.dataset_size,
                actual: dataset.len(),
            });
        }
        if dataset.feature_dim() != config.feature_dim {
            return Err(ConfigError::FeatureDimMismatch {
                expected: config.feature_dim,
                actual: dataset.feature_dim(),
            });
        }

        let counters = PipelineCounters::default();
        let shuffle_rng = ChaCha8Rng::seed_from_u64(seeds::derive(config.rng_seed, "shuffle", 0));
        let echo_rng = ChaCha8Rng::seed_from_u64(seeds::derive(config.rng_seed, "echo", 0));
        let aug_seed = seeds::derive(config.rng_seed, "augment", 0);

        let source = Source {
            data: dataset,
            epochs,
            pos: 0,
            epoch: 0,
            next_read_id: 0,
            aug_seed,
            fresh_reads: Arc::clone(&counters.fresh_reads),
        };
        let noise = config.augment_noise_scale;
        let buffer = config.shuffle_buffer_size;
        let factor = config.echo_factor;

        let (batches, stage_names): (Box<dyn Iterator<Item = BatchRecord> + Send>, Vec<&str>) =
            match config.echo_insertion {
                EchoInsertion::None => {
                    let shuffled = ShuffleStage::new(source, buffer, shuffle_rng);
                    let augmented = AugmentStage {
                        inner: shuffled,
                        noise_scale: noise,
                    };
                    let batched = Batcher {
                        inner: augmented,
                        batch_size: config.batch_size,
                        next_batch_id: 0,
                    };
                    (
                        Box::new(batched),
                        vec!["source", "shuffle", "augment", "batch"],
                    )
                }
                EchoInsertion::ExampleBeforeAugment => {
                    let echoed = EchoStage::new(source, factor, echo_rng);
                    let shuffled = ShuffleStage::new(echoed, buffer, shuffle_rng);
                    let augmented = AugmentStage {
                        inner: shuffled,
                        noise_scale: noise,
                    };
                    let batched = Batcher {
                        inner: augmented,
                        batch_size: config.batch_size,
                        next_batch_id: 0,
                    };
                    (
                        Box::new(batched),
                        vec!["source", "echo", "shuffle", "augment", "batch"],
                    )
                }
                EchoInsertion::ExampleAfterAugment => {
                    let augmented = AugmentStage {
                        inner: source,
                        noise_scale: noise,
                    };
                    let echoed = EchoStage::new(augmented, factor, echo_rng);
                    let shuffled = ShuffleStage::new(echoed, buffer, shuffle_rng);
                    let batched = Batcher {
                        inner: shuffled,
                        batch_size: config.batch_size,
                        next_batch_id: 0,
                    };
                    (
                        Box::new(batched),
                        vec!["source", "augment", "echo", "shuffle", "batch"],
                    )
                }
                EchoInsertion::Batch => {
                    let shuffled = ShuffleStage::new(source, buffer, shuffle_rng);
                    let augmented = AugmentStage {
                        inner: shuffled,
                        noise_scale: noise,
                    };
                    let batched = Batcher {
                        inner: augmented,
                        batch_size: config.batch_size,
                        next_batch_id: 0,
                    };
                    let echoed = EchoStage::new(batched, factor, echo_rng);
                    (
                        Box::new(echoed),
                        vec!["source", "shuffle", "augment", "batch", "echo"],
                    )
                }
            };

        Ok(Pipeline {
            batches,
            counters,
            batch_size: config.batch_size,
            batches_pulled: 0,
            stage_names,
        })
    }

    /// Stage names in pipeline order, e.g. `["source", "echo", "shuffle",
    /// "augment", "batch"]`.
    pub fn stage_names(&self) -> &[&'static str] {
        &self.stage_names
    }

    /// Human-readable stage chain, e.g. `source -> shuffle -> augment -> batch`.
    pub fn describe(&self) -> String {
        self.stage_names.join(" -> ")
    }

    /// Handle to the shared counters, usable after this pipeline is dropped.
    pub fn counters(&self) -> PipelineCounters {
        self.counters.clone()
    }

    /// Move the stage chain behind a bounded prefetch thread.
    pub fn into_prefetch(self, queue_capacity: usize) -> PrefetchPipeline {
        PrefetchPipeline::spawn(self, queue_capacity)
    }
}

impl BatchStream for Pipeline {
    fn next_batch(&mut self) -> Option<BatchRecord> {
        let batch = self.batches.next()?;
        self.batches_pulled += 1;
        Some(batch)
    }

    fn fresh_examples(&self) -> u64 {
        self.counters.fresh_examples()
    }

    fn batches_pulled(&self) -> u64 {
        self.batches_pulled
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }
}

/// A pipeline whose stage chain runs on its own thread, feeding a bounded
/// queue. Emits the exact same batch sequence as pulling the wrapped
/// pipeline directly; only the overlap with the consumer changes.
pub struct PrefetchPipeline {
    rx: Option<mpsc::Receiver<BatchRecord>>,
    worker: Option<thread::JoinHandle<()>>,
    counters: PipelineCounters,
    batch_size: usize,
    batches_pulled: u64,
    stage_names: Vec<&'static str>,
}

impl PrefetchPipeline {
    /// Reasonable default queue depth: enough to overlap, small enough that
    /// fresh-read counters stay close to what the consumer has seen.
    pub const DEFAULT_QUEUE: usize = 2;

    fn spawn(pipeline: Pipeline, queue_capacity: usize) -> PrefetchPipeline {
        let Pipeline {
            batches,
            counters,
            batch_size,
            stage_names,
            ..
        } = pipeline;
        let (tx, rx) = mpsc::sync_channel(queue_capacity.max(1));
        let worker = thread::spawn(move || {
            for batch in batches {
                if tx.send(batch).is_err() {
                    break; // consumer hung up; stop producing
                }
            }
        });
        PrefetchPipeline {
            rx: Some(rx),
            worker: Some(worker),
            counters,
            batch_size,
            batches_pulled: 0,
            stage_names,
        }
    }

    /// Stage names in pipeline order (prefetching adds no stage).
    pub fn stage_names(&self) -> &[&'static str] {
        &self.stage_names
    }

    /// Handle to the shared counters, usable after this pipeline is dropped.
    pub fn counters(&self) -> PipelineCounters {
        self.counters.clone()
    }
}

impl BatchStream for PrefetchPipeline {
    fn next_batch(&mut self) -> Option<BatchRecord> {
        let batch = self.rx.as_ref()?.recv().ok()?;
        self.batches_pulled += 1;
        Some(batch)
    }

    fn fresh_examples(&self) -> u64 {
        self.counters.fresh_examples()
    }

    fn batches_pulled(&self) -> u64 {
        self.batches_pulled
    }

    fn batch_size(&self) -> usize {
        self.batch_size
    }
}

impl Drop for PrefetchPipeline {
    fn drop(&mut self) {
        // Disconnect the queue first so a blocked producer wakes up and
        // exits, then reap the thread; counters are exact afterwards.
        drop(self.rx.take());
        if let Some(worker) = self.worker.take() {
            let _ = worker.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::Label;

    fn tiny_dataset(n: usize, dim: usize) -> Arc<Dataset> {
        let features = (0..n)
            .map(|i| (0..dim).map(|j| (i * dim + j) as f64).collect())
            .collect();
        let labels = (0..n).map(|i| Label::Class((i % 2) as u32)).collect();
        Arc::new(Dataset::new(features, labels))
    }

    fn config(n: usize, dim: usize) -> PipelineConfig {
        PipelineConfig {
            dataset_size: n,
            feature_dim: dim,
            batch_size: 2,
            shuffle_buffer_size: 1,
            echo_insertion: EchoInsertion::None,
            echo_factor: EchoFactor::ONE,
            augment_noise_scale: 0.0,
            rng_seed: 7,
        }
    }

    fn collect_batches(p: &mut impl BatchStream) -> Vec<BatchRecord> {
        let mut out = Vec::new();
        while let Some(b) = p.next_batch() {
            out.push(b);
        }
        out
    }

    #[test]
    fn pass_through_preserves_order_and_drops_partial_tail() {
        let cfg = config(5, 1);
        let mut p = Pipeline::build(&cfg, tiny_dataset(5, 1), Some(1)).unwrap();
        let batches = collect_batches(&mut p);
        assert_eq!(batches.len(), 2, "5 examples / batch 2 -> 2 full batches");
        let order: Vec<usize> = batches
            .iter()
            .flat_map(|b| b.examples.iter().map(|e| e.source_index))
            .collect();
        assert_eq!(order, vec![0, 1, 2, 3]);
        assert_eq!(p.fresh_examples(), 5, "the dropped tail was still read");
        assert_eq!(p.examples_emitted(), 4);
    }

    #[test]
    fn stage_orders_match_insertion_points() {
        let data = tiny_dataset(4, 1);
        let mut cfg = config(4, 1);
        let expect = [
            (EchoInsertion::None, "source -> shuffle -> augment -> batch"),
            (
                EchoInsertion::ExampleBeforeAugment,
                "source -> echo -> shuffle -> augment -> batch",
            ),
            (
                EchoInsertion::ExampleAfterAugment,
                "source -> augment -> echo -> shuffle -> batch",
            ),
            (
                EchoInsertion::Batch,
                "source -> shuffle -> augment -> batch -> echo",
            ),
        ];
        for (insertion, description) in expect {
            cfg.echo_insertion = insertion;
            cfg.echo_factor = if insertion == EchoInsertion::None {
                EchoFactor::ONE
            } else {
                EchoFactor::new(2.0).unwrap()
            };
            let p = Pipeline::build(&cfg, Arc::clone(&data), Some(1)).unwrap();
            assert_eq!(p.describe(), description);
            let shuffles = p.stage_names().iter().filter(|s| **s == "shuffle").count();
            assert_eq!(shuffles, 1, "exactly one shuffle buffer in {description}");
        }
    }

    #[test]
    fn full_buffer_emits_a_permutation_per_epoch() {
        let n = 64;
        let mut cfg = config(n, 1);
        cfg.batch_size = 1;
        cfg.shuffle_buffer_size = n;
        cfg.rng_seed = 99;
        let mut p = Pipeline::build(&cfg, tiny_dataset(n, 1), Some(1)).unwrap();
        let mut seen: Vec<usize> = collect_batches(&mut p)
            .iter()
            .map(|b| b.examples[0].source_index)
            .collect();
        assert_ne!(
            seen,
            (0..n).collect::<Vec<_>>(),
            "a 64-slot buffer virtually never emits identity order"
        );
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn echo_after_augment_copies_are_bit_identical() {
        let mut cfg = config(6, 3);
        cfg.echo_insertion = EchoInsertion::ExampleAfterAugment;
        cfg.echo_factor = EchoFactor::new(2.0).unwrap();
        cfg.augment_noise_scale = 0.5;
        cfg.shuffle_buffer_size = 4;
        let mut p = Pipeline::build(&cfg, tiny_dataset(6, 3), Some(1)).unwrap();
        let mut by_read: std::collections::HashMap<u64, Vec<Vec<f64>>> = Default::default();
        for b in collect_batches(&mut p) {
            for ex in b.examples {
                by_read.entry(ex.read_id).or_default().push(ex.features);
            }
        }
        for (read, copies) in by_read {
            assert_eq!(copies.len(), 2, "read {read} must appear twice");
            assert_eq!(
                copies[0], copies[1],
                "copies of read {read} must match bit for bit"
            );
        }
    }

    #[test]
    fn echo_before_augment_copies_differ() {
        let mut cfg = config(6, 3);
        cfg.echo_insertion = EchoInsertion::ExampleBeforeAugment;
        cfg.echo_factor = EchoFactor::new(2.0).unwrap();
        cfg.augment_noise_scale = 0.5;
        cfg.shuffle_buffer_size = 4;
        let mut p = Pipeline::build(&cfg, tiny_dataset(6, 3), Some(1)).unwrap();
        let mut by_read: std::collections::HashMap<u64, Vec<Vec<f64>>> = Default::default();
        for b in collect_batches(&mut p) {
            for ex in b.examples {
                by_read.entry(ex.read_id).or_default().push(ex.features);
            }
        }
        for (read, copies) in by_read {
            assert_eq!(copies.len(), 2, "read {read} must appear twice");
            assert_ne!(
                copies[0], copies[1],
                "copies of read {read} must get fresh noise"
            );
        }
    }

    #[test]
    fn batch_echo_repeats_batches_verbatim_and_in_place() {
        let mut cfg = config(8, 1);
        cfg.echo_insertion = EchoInsertion::Batch;
        cfg.echo_factor = EchoFactor::new(3.0).unwrap();
        cfg.shuffle_buffer_size = 4;
        let mut p = Pipeline::build(&cfg, tiny_dataset(8, 1), Some(1)).unwrap();
        let batches = collect_batches(&mut p);
        assert_eq!(batches.len(), 4 * 3);
        for (k, b) in batches.iter().enumerate() {
            assert_eq!(b.batch_id, (k / 3) as u64, "copies must be adjacent");
            assert_eq!(b.echo_index, (k % 3) as u32);
        }
        for chunk in batches.chunks(3) {
            let ids: Vec<Vec<u64>> = chunk.iter().map(|b| b.read_ids().collect()).collect();
            assert_eq!(ids[0], ids[1], "repeat keeps member order");
            assert_eq!(ids[0], ids[2]);
        }
    }

    #[test]
    fn fresh_reads_count_source_reads_not_emissions() {
        let mut cfg = config(10, 1);
        cfg.echo_insertion = EchoInsertion::ExampleBeforeAugment;
        cfg.echo_factor = EchoFactor::new(2.0).unwrap();
        cfg.batch_size = 4;
        cfg.shuffle_buffer_size = 3;
        let mut p = Pipeline::build(&cfg, tiny_dataset(10, 1), Some(1)).unwrap();
        let batches = collect_batches(&mut p);
        assert_eq!(p.fresh_examples(), 10);
        assert_eq!(batches.len(), 5, "20 emissions / batch 4");
    }

    #[test]
    fn prefetch_mode_yields_identical_sequence() {
        let mut cfg = config(24, 2);
        cfg.echo_insertion = EchoInsertion::ExampleBeforeAugment;
        cfg.echo_factor = EchoFactor::new(1.5).unwrap();
        cfg.shuffle_buffer_size = 6;
        cfg.augment_noise_scale = 0.3;
        cfg.batch_size = 3;
        let data = tiny_dataset(24, 2);
        let mut pull = Pipeline::build(&cfg, Arc::clone(&data), Some(2)).unwrap();
        let direct = collect_batches(&mut pull);
        let mut prefetched = Pipeline::build(&cfg, data, Some(2))
            .unwrap()
            .into_prefetch(2);
        let threaded = collect_batches(&mut prefetched);
        assert_eq!(direct, threaded);
        assert_eq!(pull.fresh_examples(), prefetched.fresh_examples());
    }

    #[test]
    fn dropping_a_prefetch_pipeline_mid_stream_does_not_hang() {
        let mut cfg = config(512, 1);
        cfg.shuffle_buffer_size = 8;
        let mut p = Pipeline::build(&cfg, tiny_dataset(512, 1), None)
            .unwrap()
            .into_prefetch(2);
        for _ in 0..5 {
            assert!(p.next_batch().is_some());
        }
        drop(p); // must reap the producer thread promptly
    }

    #[test]
    fn config_validation_names_the_problem() {
        let data = tiny_dataset(4, 1);
        let mut cfg = config(4, 1);
        cfg.batch_size = 0;
        assert!(matches!(
            Pipeline::build(&cfg, Arc::clone(&data), None),
            Err(ConfigError::ZeroBatchSize)
        ));

        let mut cfg = config(4, 1);
        cfg.echo_factor = EchoFactor::new(2.0).unwrap();
        assert!(matches!(
            Pipeline::build(&cfg, Arc::clone(&data), None),
            Err(ConfigError::FactorWithoutEcho(_))
        ));

        let cfg = config(5, 1);
        assert!(matches!(
            Pipeline::build(&cfg, data, None),
            Err(ConfigError::DatasetSizeMismatch {
                expected: 5,
                actual: 4
            })
        ));
    }

    #[test]
    fn shuffle_state_fills_before_emitting() {
        let rng = ChaCha8Rng::seed_from_u64(1);
        let mut state = ShuffleState::new(3, rng);
        assert_eq!(state.push_pop(10), None);
        assert_eq!(state.push_pop(11), None);
        assert_eq!(state.push_pop(12), None);
        assert_eq!(state.occupancy(), 3);
        let emitted = state.push_pop(13).expect("buffer is full, must emit");
        assert!([10, 11, 12].contains(&emitted));
        assert_eq!(state.occupancy(), 3);
        let mut drained = Vec::new();
        while let Some(x) = state.pop_drain() {
            drained.push(x);
        }
        assert_eq!(drained.len(), 3);
        assert_eq!(state.occupancy(), 0);
    }
}
