//! Quasi-random hyperparameter points: a digitally scrambled Halton
//! sequence mapped through per-dimension ranges.
//!
//! Low-discrepancy points cover a search range far more evenly than i.i.d.
//! uniform draws at the small trial counts used here. The scrambling is a
//! seeded per-digit shift (Cranley-Patterson style): each digit position of
//! each dimension gets a fixed random offset modulo the base. That keeps
//! the equidistribution structure — shifted points remain as spread out as
//! the raw sequence — while decorrelating repeated searches.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::seeds;

/// First primes, one per search dimension.
const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// How a unit coordinate maps into a dimension's range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimScale {
    /// Linear between `low` and `high`.
    Uniform,
    /// Exponential between `low` and `high` (both must be positive); equal
    /// unit intervals cover equal ratios.
    LogUniform,
    /// Integers `low ..= high`, each with equal measure.
    IntegerRange,
}

/// One searched hyperparameter.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchDim {
    pub name: String,
    pub low: f64,
    pub high: f64,
    pub scale: DimScale,
}

impl SearchDim {
    /// Check bounds for the scale.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |why: String| Err(HarnessError::Invalid(why));
        if self.name.is_empty() {
            return bad("search dim with an empty name".into());
        }
        if !self.low.is_finite() || !self.high.is_finite() || self.low >= self.high {
            return bad(format!(
                "search dim `{}`: need finite low < high, got [{}, {}]",
                self.name, self.low, self.high
            ));
        }
        match self.scale {
            DimScale::LogUniform if self.low <= 0.0 => bad(format!(
                "search dim `{}`: log_uniform needs low > 0, got {}",
                self.name, self.low
            )),
            DimScale::IntegerRange if self.low.fract() != 0.0 || self.high.fract() != 0.0 => {
                bad(format!(
                    "search dim `{}`: integer_range bounds must be integers",
                    self.name
                ))
            }
            _ => Ok(()),
        }
    }

    /// Map a unit coordinate into the dimension's range.
    pub fn map(&self, u: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&u));
        match self.scale {
            DimScale::Uniform => self.low + u * (self.high - self.low),
            DimScale::LogUniform => (self.low.ln() + u * (self.high.ln() - self.low.ln())).exp(),
            DimScale::IntegerRange => (self.low + u * (self.high - self.low + 1.0))
                .floor()
                .min(self.high),
        }
    }

    /// Position of a mapped value within the range, in the transformed
    /// space, 0 at `low` and 1 at `high`. Used for boundary flagging.
    pub fn normalized(&self, value: f64) -> f64 {
        match self.scale {
            DimScale::Uniform | DimScale::IntegerRange => {
                (value - self.low) / (self.high - self.low)
            }
            DimScale::LogUniform => (value.ln() - self.low.ln()) / (self.high.ln() - self.low.ln()),
        }
    }
}

/// The full search space.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SearchSpace {
    pub dims: Vec<SearchDim>,
}

impl SearchSpace {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.dims.is_empty() {
            return Err(HarnessError::Invalid(
                "search.dims must not be empty".into(),
            ));
        }
        if self.dims.len() > PRIMES.len() {
            return Err(HarnessError::Invalid(format!(
                "at most {} search dims are supported",
                PRIMES.len()
            )));
        }
        let mut names: Vec<&str> = self.dims.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.dims.len() {
            return Err(HarnessError::Invalid("duplicate search dim names".into()));
        }
        for dim in &self.dims {
            dim.validate()?;
        }
        Ok(())
    }

    /// Map one unit-cube point into hyperparameter values, dim order.
    pub fn map_point(&self, unit: &[f64]) -> Vec<f64> {
        debug_assert_eq!(unit.len(), self.dims.len());
        self.dims.iter().zip(unit).map(|(d, &u)| d.map(u)).collect()
    }
}

/// Scrambled Halton sequence over the unit cube, one prime base per
/// dimension, indices starting at 1.
pub struct HaltonSequence {
    /// Per dimension: (base, per-digit shifts).
    dims: Vec<(u64, Vec<u64>)>,
    next_index: u64,
}

/// Digit positions carried per base: enough that `base^DIGITS` overflows
/// any index we will ever reach, and the place value has underflowed f64.
const DIGITS: usize = 64;

impl HaltonSequence {
    pub fn new(n_dims: usize, seed: u64) -> HaltonSequence {
        assert!(n_dims >= 1 && n_dims <= PRIMES.len());
        let dims = (0..n_dims)
            .map(|d| {
                let base = PRIMES[d];
                let stream = seeds::derive(seed, "halton-shift", d as u64);
                let shifts = (0..DIGITS)
                    .map(|j| seeds::splitmix64(seeds::mix(stream, j as u64)) % base)
                    .collect();
                (base, shifts)
            })
            .collect();
        HaltonSequence {
            dims,
            next_index: 1,
        }
    }

    /// Next point of the sequence, in `[0, 1)^d`.
    pub fn next_point(&mut self) -> Vec<f64> {
        let index = self.next_index;
        self.next_index += 1;
        self.dims
            .iter()
            .map(|(base, shifts)| scrambled_radical_inverse(index, *base, shifts))
            .collect()
    }
}

/// Radical inverse of `index` in `base` with a digital shift: digit `j`
/// (including leading zeros) becomes `(digit + shift[j]) % base` before
/// mirroring around the radix point.
fn scrambled_radical_inverse(index: u64, base: u64, shifts: &[u64]) -> f64 {
    let mut value = 0.0;
    let mut place = 1.0 / base as f64;
    let mut rest = index;
    for &shift in shifts {
        let digit = rest % base;
        rest /= base;
        value += ((digit + shift) % base) as f64 * place;
        place /= base as f64;
        if place == 0.0 && rest == 0 {
            break;
        }
    }
    value
}
