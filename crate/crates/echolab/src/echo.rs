//! The echoing stage: repeat each item coming out of a pipeline stage so
//! that downstream stages see it more than once.
//!
//! The repetition factor `e >= 1` need not be an integer. Each item is
//! emitted `floor(e)` times, plus one more with probability `e - floor(e)`
//! decided by an independent coin per item, so the expected number of
//! emissions per input is exactly `e`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::record::{BatchRecord, ExampleRecord};

/// Error building an [`EchoFactor`].
#[derive(Debug, Error, PartialEq)]
pub enum EchoFactorError {
    #[error("echo factor must be finite, got {0}")]
    NotFinite(f64),
    #[error("echo factor must be >= 1, got {0}")]
    TooSmall(f64),
}

/// Repetition factor of an echoing stage, split into integer and fractional
/// parts at construction so per-item decisions stay cheap and exact.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EchoFactor {
    whole: u32,
    frac: f64,
}

impl EchoFactor {
    /// Factor 1: every item emitted exactly once (no echoing).
    pub const ONE: EchoFactor = EchoFactor {
        whole: 1,
        frac: 0.0,
    };

    /// Validate and split a factor. `value` must be finite and `>= 1`.
    pub fn new(value: f64) -> Result<EchoFactor, EchoFactorError> {
        if !value.is_finite() {
            return Err(EchoFactorError::NotFinite(value));
        }
        if value < 1.0 {
            return Err(EchoFactorError::TooSmall(value));
        }
        let whole = value.floor();
        let mut frac = value - whole;
        // Guard against `value.floor() == value` failing under representation
        // noise: treat a vanishing fraction as zero.
        if frac < 1e-12 {
            frac = 0.0;
        }
        Ok(EchoFactor {
            whole: whole as u32,
            frac,
        })
    }

    /// The factor as a float (integer part + fractional part).
    pub fn value(self) -> f64 {
        f64::from(self.whole) + self.frac
    }

    /// Guaranteed repeats per item.
    pub fn integer_part(self) -> u32 {
        self.whole
    }

    /// Probability of one extra repeat per item.
    pub fn fractional_part(self) -> f64 {
        self.frac
    }

    /// True when every item gets the same number of repeats.
    pub fn is_integral(self) -> bool {
        self.frac == 0.0
    }

    /// Number of times one particular item will be emitted: the integer part
    /// plus a Bernoulli(fractional part) extra. Always at least 1.
    pub fn realized_repeats<R: Rng + ?Sized>(self, rng: &mut R) -> u32 {
        if self.frac == 0.0 {
            self.whole
        } else {
            self.whole + u32::from(rng.random_bool(self.frac))
        }
    }
}

impl Serialize for EchoFactor {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for EchoFactor {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<EchoFactor, D::Error> {
        let value = f64::deserialize(deserializer)?;
        EchoFactor::new(value).map_err(de::Error::custom)
    }
}

/// Items an [`EchoStage`] can repeat: cloning must be meaningful and the
/// stage must be able to stamp which copy an emission is.
pub trait Echoed: Clone {
    fn set_echo_index(&mut self, index: u32);
}

impl Echoed for ExampleRecord {
    fn set_echo_index(&mut self, index: u32) {
        self.echo_index = index;
    }
}

impl Echoed for BatchRecord {
    fn set_echo_index(&mut self, index: u32) {
        self.echo_index = index;
    }
}

/// Iterator adapter that repeats each upstream item according to an
/// [`EchoFactor`], stamping `echo_index` 0, 1, ... on the copies.
///
/// All copies of one item are emitted back to back; any reordering between
/// copies is the job of a shuffle buffer placed after this stage.
pub struct EchoStage<I: Iterator> {
    inner: I,
    factor: EchoFactor,
    rng: ChaCha8Rng,
    current: Option<I::Item>,
    emitted: u32,
    total: u32,
}

impl<I: Iterator> EchoStage<I> {
    pub fn new(inner: I, factor: EchoFactor, rng: ChaCha8Rng) -> EchoStage<I> {
        EchoStage {
            inner,
            factor,
            rng,
            current: None,
            emitted: 0,
            total: 0,
        }
    }
}

impl<I> Iterator for EchoStage<I>
where
    I: Iterator,
    I::Item: Echoed,
{
    type Item = I::Item;

    fn next(&mut self) -> Option<I::Item> {
        loop {
            if let Some(item) = &self.current {
                if self.emitted < self.total {
                    let mut out = item.clone();
                    out.set_echo_index(self.emitted);
                    self.emitted += 1;
                    return Some(out);
                }
                self.current = None;
            }
            let item = self.inner.next()?;
            self.total = self.factor.realized_repeats(&mut self.rng);
            self.emitted = 0;
            self.current = Some(item);
        }
    }
}
