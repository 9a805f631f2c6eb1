//! Duplication statistics for echoed pipelines.
//!
//! Echoing trades fresh data for repeated data, and the quality cost of the
//! trade shows up in how duplicates land in SGD batches. Three quantities
//! capture it:
//!
//! * **within-batch duplicate fraction** — fraction of examples in a batch
//!   that share their `read_id` with another example of the same batch,
//! * **adjacent-batch identity rate** — over disjoint consecutive batch
//!   pairs (batches 0-1, 2-3, ...), how often the two batches hold exactly
//!   the same multiset of `read_id`s,
//! * **distinct reads per batch** — mean number of distinct `read_id`s in a
//!   batch.
//!
//! [`measure_duplication`] estimates all three by Monte Carlo over the real
//! pipeline; [`duplication_oracle`] computes them exactly for tiny
//! configurations by enumerating every trajectory of the shuffle buffer.
//! Both use the same single-epoch protocol: each run starts with a cold
//! (empty) buffer, streams one epoch, and drops the final partial batch.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::pipeline::{BatchStream, ConfigError, EchoInsertion, Pipeline, PipelineConfig};
use crate::record::Dataset;
use crate::seeds;

/// Upper bounds accepted by [`duplication_oracle`]; beyond these the exact
/// enumeration blows up.
pub const ORACLE_MAX_DATASET: usize = 6;
pub const ORACLE_MAX_BUFFER: usize = 4;
pub const ORACLE_MAX_BATCH: usize = 4;
pub const ORACLE_MAX_ECHO: u32 = 3;

/// Error computing duplication statistics.
#[derive(Debug, Error)]
pub enum StatsError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("configuration never produces a full batch within one epoch")]
    NoBatches,
    #[error("outside the exact-oracle domain: {0}")]
    OracleDomain(String),
}

/// Duplication estimates with standard errors.
///
/// The Monte Carlo path reports the standard error of each mean across
/// independent single-epoch runs; the exact oracle reports zeros.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DuplicationReport {
    /// Mean fraction of batch members sharing a read id within their batch.
    pub within_batch_dup_fraction: f64,
    pub within_batch_dup_se: f64,
    /// Mean number of distinct read ids per batch.
    pub distinct_reads_per_batch_mean: f64,
    pub distinct_reads_se: f64,
    /// Rate of identical read-id multisets over disjoint adjacent pairs.
    pub adjacent_batch_identity_rate: f64,
    pub adjacent_identity_se: f64,
    /// Total full batches that entered the estimates.
    pub batches_measured: u64,
    /// Total disjoint adjacent pairs that entered the identity rate.
    pub pairs_measured: u64,
}

/// Estimate duplication statistics by running single-epoch pipelines until
/// at least `min_batches` full batches have been observed.
///
/// Every run uses a fresh pipeline with a cold shuffle buffer and a run
/// seed derived from `seed`, so runs are independent and the whole
/// measurement is reproducible. Per-run means are averaged with equal
/// weight and the standard errors are across runs.
pub fn measure_duplication(
    config: &PipelineConfig,
    min_batches: u64,
    seed: u64,
) -> Result<DuplicationReport, StatsError> {
    config.validate()?;
    let dataset = Arc::new(Dataset::zeros(config.dataset_size, config.feature_dim));

    let mut run_dup = Vec::new();
    let mut run_distinct = Vec::new();
    let mut run_pairs = Vec::new();
    let mut batches_total = 0u64;
    let mut pairs_total = 0u64;

    let mut run = 0u64;
    while batches_total < min_batches || run < 2 {
        let mut cfg = config.clone();
        cfg.rng_seed = seeds::derive(seed, "dup-run", run);
        run += 1;
        let mut pipeline = Pipeline::build(&cfg, Arc::clone(&dataset), Some(1))?;

        let mut dup_sum = 0.0;
        let mut distinct_sum = 0.0;
        let mut n = 0u64;
        let mut identical = 0u64;
        let mut pairs = 0u64;
        let mut pending: Option<Vec<u64>> = None;
        while let Some(batch) = pipeline.next_batch() {
            dup_sum += batch.duplicate_fraction();
            distinct_sum += batch.distinct_reads() as f64;
            n += 1;
            let ids = batch.read_id_multiset();
            match pending.take() {
                Some(first) => {
                    pairs += 1;
                    if first == ids {
                        identical += 1;
                    }
                }
                None => pending = Some(ids),
            }
        }
        if n == 0 {
            return Err(StatsError::NoBatches);
        }
        batches_total += n;
        pairs_total += pairs;
        run_dup.push(dup_sum / n as f64);
        run_distinct.push(distinct_sum / n as f64);
        if pairs > 0 {
            run_pairs.push(identical as f64 / pairs as f64);
        }
    }

    let (dup_mean, dup_se) = mean_and_se(&run_dup);
    let (distinct_mean, distinct_se) = mean_and_se(&run_distinct);
    let (pair_mean, pair_se) = mean_and_se(&run_pairs);
    Ok(DuplicationReport {
        within_batch_dup_fraction: dup_mean,
        within_batch_dup_se: dup_se,
        distinct_reads_per_batch_mean: distinct_mean,
        distinct_reads_se: distinct_se,
        adjacent_batch_identity_rate: pair_mean,
        adjacent_identity_se: pair_se,
        batches_measured: batches_total,
        pairs_measured: pairs_total,
    })
}

fn mean_and_se(samples: &[f64]) -> (f64, f64) {
    if samples.is_empty() {
        return (0.0, 0.0);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Exact duplication statistics for a tiny configuration, by enumerating
/// every trajectory of the shuffle buffer with its exact probability.
///
/// Domain: `dataset_size <= 6`, `buffer_size <= 4`, `batch_size <= 4`,
/// integral `e <= 3`. The echoed read stream is deterministic for integral
/// factors, so the only randomness enumerated is the buffer's slot choices.
pub fn duplication_oracle(
    dataset_size: usize,
    buffer_size: usize,
    batch_size: usize,
    e: u32,
    insertion: EchoInsertion,
) -> Result<DuplicationReport, StatsError> {
    if dataset_size == 0 || dataset_size > ORACLE_MAX_DATASET {
        return Err(StatsError::OracleDomain(format!(
            "dataset_size must be in 1..={ORACLE_MAX_DATASET}, got {dataset_size}"
        )));
    }
    if buffer_size == 0 || buffer_size > ORACLE_MAX_BUFFER {
        return Err(StatsError::OracleDomain(format!(
            "buffer_size must be in 1..={ORACLE_MAX_BUFFER}, got {buffer_size}"
        )));
    }
    if batch_size == 0 || batch_size > ORACLE_MAX_BATCH {
        return Err(StatsError::OracleDomain(format!(
            "batch_size must be in 1..={ORACLE_MAX_BATCH}, got {batch_size}"
        )));
    }
    if e == 0 || e > ORACLE_MAX_ECHO {
        return Err(StatsError::OracleDomain(format!(
            "echo factor must be in 1..={ORACLE_MAX_ECHO}, got {e}"
        )));
    }
    if insertion == EchoInsertion::None && e != 1 {
        return Err(StatsError::OracleDomain(format!(
            "echo_insertion `none` requires e = 1, got {e}"
        )));
    }

    match insertion {
        EchoInsertion::Batch => Ok(batch_echo_closed_form(dataset_size, batch_size, e)),
        EchoInsertion::None
        | EchoInsertion::ExampleBeforeAugment
        | EchoInsertion::ExampleAfterAugment => {
            // Both example insertion points produce the same read-id stream:
            // each fresh read, e copies, in read order.
            let stream: Vec<u8> = (0..dataset_size as u8)
                .flat_map(|r| std::iter::repeat_n(r, e as usize))
                .collect();
            enumerate_buffer(&stream, buffer_size, batch_size)
        }
    }
}

/// Batch echoing never mixes reads across batches: batches are formed from
/// fresh reads (all distinct within an epoch) and then repeated verbatim,
/// so within-batch stats are those of unechoed batches and the identity
/// rate follows from the deterministic repeat pattern.
fn batch_echo_closed_form(dataset_size: usize, batch_size: usize, e: u32) -> DuplicationReport {
    let fresh_batches = dataset_size / batch_size;
    let emitted = fresh_batches * e as usize;
    let pairs = emitted / 2;
    let mut identical = 0usize;
    for k in 0..pairs {
        // Batch at position i is copy number i % e of fresh batch i / e.
        if (2 * k) / e as usize == (2 * k + 1) / e as usize {
            identical += 1;
        }
    }
    DuplicationReport {
        within_batch_dup_fraction: 0.0,
        within_batch_dup_se: 0.0,
        distinct_reads_per_batch_mean: batch_size as f64,
        distinct_reads_se: 0.0,
        adjacent_batch_identity_rate: if pairs == 0 {
            0.0
        } else {
            identical as f64 / pairs as f64
        },
        adjacent_identity_se: 0.0,
        batches_measured: emitted as u64,
        pairs_measured: pairs as u64,
    }
}

/// One point of the exact enumeration: buffer occupancy, progress through
/// the input stream, the partially filled batch, and (when the number of
/// completed batches is odd) the previous batch awaiting its pair partner.
///
/// Slot positions are exchangeable under uniform choice, so multisets of
/// read ids suffice and keep the state space small. `BTreeMap` keeps the
/// float accumulation order deterministic.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct OracleState {
    pos: u8,
    slots: Vec<u8>,
    partial: Vec<u8>,
    prev: Option<Vec<u8>>,
}

struct Accumulators {
    dup: f64,
    distinct: f64,
    identical_pairs: f64,
}

fn enumerate_buffer(
    stream: &[u8],
    buffer_size: usize,
    batch_size: usize,
) -> Result<DuplicationReport, StatsError> {
    let total = stream.len();
    let n_batches = total / batch_size;
    if n_batches == 0 {
        return Err(StatsError::NoBatches);
    }
    let n_pairs = n_batches / 2;

    let mut acc = Accumulators {
        dup: 0.0,
        distinct: 0.0,
        identical_pairs: 0.0,
    };
    let start = OracleState {
        pos: 0,
        slots: Vec::new(),
        partial: Vec::new(),
        prev: None,
    };
    let mut frontier: BTreeMap<OracleState, f64> = BTreeMap::new();
    frontier.insert(start, 1.0);

    while !frontier.is_empty() {
        let mut next: BTreeMap<OracleState, f64> = BTreeMap::new();
        for (state, prob) in frontier {
            let remaining = total - state.pos as usize;
            if remaining > 0 && state.slots.len() < buffer_size {
                // Filling phase: deterministic.
                let mut s = state.clone();
                s.slots.push(stream[state.pos as usize]);
                s.slots.sort_unstable();
                s.pos += 1;
                *next.entry(s).or_insert(0.0) += prob;
            } else if remaining > 0 {
                // Full buffer: each occupant is displaced with probability
                // proportional to its multiplicity.
                let incoming = stream[state.pos as usize];
                for (value, count) in distinct_counts(&state.slots) {
                    let p = prob * count as f64 / state.slots.len() as f64;
                    let mut s = state.clone();
                    remove_one(&mut s.slots, value);
                    s.slots.push(incoming);
                    s.slots.sort_unstable();
                    s.pos += 1;
                    emit(&mut s, value, p, batch_size, &mut acc);
                    *next.entry(s).or_insert(0.0) += p;
                }
            } else if !state.slots.is_empty() {
                // Drain phase: uniform removal.
                for (value, count) in distinct_counts(&state.slots) {
                    let p = prob * count as f64 / state.slots.len() as f64;
                    let mut s = state.clone();
                    remove_one(&mut s.slots, value);
                    emit(&mut s, value, p, batch_size, &mut acc);
                    *next.entry(s).or_insert(0.0) += p;
                }
            }
            // Empty buffer and exhausted stream: trajectory complete; any
            // leftover partial batch is dropped.
        }
        frontier = next;
    }

    Ok(DuplicationReport {
        within_batch_dup_fraction: acc.dup / n_batches as f64,
        within_batch_dup_se: 0.0,
        distinct_reads_per_batch_mean: acc.distinct / n_batches as f64,
        distinct_reads_se: 0.0,
        adjacent_batch_identity_rate: if n_pairs == 0 {
            0.0
        } else {
            acc.identical_pairs / n_pairs as f64
        },
        adjacent_identity_se: 0.0,
        batches_measured: n_batches as u64,
        pairs_measured: n_pairs as u64,
    })
}

/// Append an emitted read to the state's partial batch; on completion, add
/// this trajectory's contribution (weight `p`) to the accumulators and
/// update the pair-tracking field.
fn emit(state: &mut OracleState, value: u8, p: f64, batch_size: usize, acc: &mut Accumulators) {
    state.partial.push(value);
    state.partial.sort_unstable();
    if state.partial.len() < batch_size {
        return;
    }
    let batch = std::mem::take(&mut state.partial);
    acc.dup += p * multiset_dup_fraction(&batch);
    acc.distinct += p * distinct_counts(&batch).len() as f64;
    match state.prev.take() {
        Some(first) => {
            if first == batch {
                acc.identical_pairs += p;
            }
        }
        None => state.prev = Some(batch),
    }
}

fn distinct_counts(sorted: &[u8]) -> Vec<(u8, usize)> {
    let mut out: Vec<(u8, usize)> = Vec::new();
    for &v in sorted {
        match out.last_mut() {
            Some((last, count)) if *last == v => *count += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

fn remove_one(sorted: &mut Vec<u8>, value: u8) {
    let idx = sorted
        .iter()
        .position(|&v| v == value)
        .expect("value present");
    sorted.remove(idx);
}

fn multiset_dup_fraction(sorted: &[u8]) -> f64 {
    let dup: usize = distinct_counts(sorted)
        .iter()
        .filter(|(_, c)| *c > 1)
        .map(|(_, c)| *c)
        .sum();
    dup as f64 / sorted.len() as f64
}
