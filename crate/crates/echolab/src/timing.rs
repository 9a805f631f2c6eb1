//! Overlap-time model for a two-stage pipeline with echoing.
//!
//! The pipeline is modelled as an upstream part (read + preprocess, cost
//! `t_upstream` per batch of fresh data) overlapped with a downstream part
//! (SGD updates, cost `t_downstream` per step). With an echo factor `e`, one
//! unit of upstream work feeds `e` downstream steps, so the steady-state
//! time per fresh batch is
//!
//! ```text
//! cycle_time(e) = max(t_upstream, e * t_downstream) + e * echo_overhead
//! ```
//!
//! While `e <= t_upstream / t_downstream` the extra downstream steps hide
//! entirely inside the upstream stall (they are "free"); past that ratio the
//! downstream stage becomes the bottleneck. `echo_overhead` charges a small
//! non-overlapped cost per echoed step for mechanisms that cannot hide all
//! of their work.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Error validating a [`TimingModel`].
#[derive(Debug, Error, PartialEq)]
pub enum TimingError {
    #[error("t_upstream must be finite and > 0, got {0}")]
    BadUpstream(f64),
    #[error("t_downstream must be finite and > 0, got {0}")]
    BadDownstream(f64),
    #[error("echo_overhead must be finite and >= 0, got {0}")]
    BadOverhead(f64),
    #[error("jitter_scale must be in [0, 1), got {0}")]
    BadJitter(f64),
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

/// Per-batch costs of the two pipeline halves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingModel {
    /// Time for the upstream stages to produce one batch of fresh data.
    pub t_upstream: f64,
    /// Time for one downstream SGD step.
    pub t_downstream: f64,
    /// Non-overlapped extra cost per echoed step (0 = echoing is free).
    #[serde(default)]
    pub echo_overhead: f64,
    /// Multiplicative jitter on the upstream time in
    /// [`TimingModel::simulate_walltime`]: each step draws a factor
    /// uniformly from `[1 - s, 1 + s)`. 0 disables jitter.
    #[serde(default)]
    pub jitter_scale: f64,
}

impl TimingModel {
    /// Jitter-free model.
    pub fn new(t_upstream: f64, t_downstream: f64, echo_overhead: f64) -> TimingModel {
        TimingModel {
            t_upstream,
            t_downstream,
            echo_overhead,
            jitter_scale: 0.0,
        }
    }

    /// Check all parameters are in range.
    pub fn validate(&self) -> Result<(), TimingError> {
        if !positive(self.t_upstream) {
            return Err(TimingError::BadUpstream(self.t_upstream));
        }
        if !positive(self.t_downstream) {
            return Err(TimingError::BadDownstream(self.t_downstream));
        }
        if !self.echo_overhead.is_finite() || self.echo_overhead < 0.0 {
            return Err(TimingError::BadOverhead(self.echo_overhead));
        }
        if !self.jitter_scale.is_finite() || !(0.0..1.0).contains(&self.jitter_scale) {
            return Err(TimingError::BadJitter(self.jitter_scale));
        }
        Ok(())
    }

    /// Upstream-to-downstream cost ratio `R`. Echoing with `e <= R` costs no
    /// wall time (when `echo_overhead` is 0).
    pub fn ratio(&self) -> f64 {
        self.t_upstream / self.t_downstream
    }

    /// True when the upstream half dominates a non-echoed pipeline.
    pub fn upstream_bound(&self) -> bool {
        self.t_upstream >= self.t_downstream
    }

    /// Steady-state time to consume one batch of fresh data at echo factor
    /// `e`: the two halves overlap, so the slower one sets the pace, plus
    /// any non-overlapped per-echo overhead.
    pub fn cycle_time(&self, e: f64) -> f64 {
        self.t_upstream.max(e * self.t_downstream) + e * self.echo_overhead
    }

    /// Fraction of the cycle the downstream stage spends idle at echo
    /// factor `e` (busy time is `e * t_downstream` out of one cycle).
    pub fn downstream_idle_fraction(&self, e: f64) -> f64 {
        1.0 - e * self.t_downstream / self.cycle_time(e)
    }

    /// Predicted wall-time speedup of an echoing run over a baseline run,
    /// given how many fresh examples each needed to reach the target:
    /// `(fresh_baseline * cycle_time(1)) / (fresh_echo * cycle_time(e))`.
    ///
    /// With zero overhead and `e <= R` the cycle times cancel and the
    /// speedup equals the fresh-data ratio; echoing then wins exactly when
    /// it saves fresh data.
    pub fn ideal_speedup(&self, e: f64, fresh_baseline: u64, fresh_echo: u64) -> f64 {
        (fresh_baseline as f64 * self.cycle_time(1.0)) / (fresh_echo as f64 * self.cycle_time(e))
    }

    /// Simulated wall time for consuming `fresh_batches` batches of fresh
    /// data at echo factor `e`. A fractional batch count scales the final
    /// cycle proportionally.
    ///
    /// With `jitter_scale == 0` this is exactly `fresh_batches *
    /// cycle_time(e)`; otherwise each cycle redraws the upstream time with
    /// multiplicative uniform jitter, modelling noisy I/O.
    pub fn simulate_walltime(&self, fresh_batches: f64, e: f64, rng: &mut ChaCha8Rng) -> f64 {
        assert!(
            fresh_batches >= 0.0 && fresh_batches.is_finite(),
            "fresh_batches must be finite and >= 0, got {fresh_batches}"
        );
        if self.jitter_scale == 0.0 {
            return fresh_batches * self.cycle_time(e);
        }
        let jittered_cycle = |rng: &mut ChaCha8Rng| {
            let factor = 1.0 + self.jitter_scale * rng.random_range(-1.0..1.0);
            (self.t_upstream * factor).max(e * self.t_downstream) + e * self.echo_overhead
        };
        let whole = fresh_batches.floor();
        let frac = fresh_batches - whole;
        let mut total = 0.0;
        for _ in 0..whole as u64 {
            total += jittered_cycle(rng);
        }
        if frac > 0.0 {
            total += frac * jittered_cycle(rng);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;

    #[test]
    fn cycle_time_is_the_slower_half() {
        let m = TimingModel::new(2.0, 1.0, 0.0);
        assert_eq!(m.cycle_time(1.0), 2.0, "upstream-bound at e = 1");
        assert_eq!(
            m.cycle_time(2.0),
            2.0,
            "e = R: downstream exactly fills the stall"
        );
        assert_eq!(
            m.cycle_time(3.0),
            3.0,
            "past R the downstream half dominates"
        );
    }

    #[test]
    fn overhead_charges_per_echoed_step() {
        let m = TimingModel::new(2.0, 1.0, 0.25);
        assert_eq!(m.cycle_time(1.0), 2.25);
        assert_eq!(m.cycle_time(2.0), 2.5);
    }

    #[test]
    fn idle_fraction_shrinks_to_zero_at_the_ratio() {
        let m = TimingModel::new(2.0, 1.0, 0.0);
        assert_relative_eq!(m.downstream_idle_fraction(1.0), 0.5);
        assert_relative_eq!(m.downstream_idle_fraction(2.0), 0.0);
    }

    #[test]
    fn speedup_equals_fresh_ratio_in_the_free_regime() {
        let m = TimingModel::new(6.0, 1.0, 0.0);
        // Downstream needs half the fresh data at e = 4 <= R = 6.
        let s = m.ideal_speedup(4.0, 10_000, 5_000);
        assert_relative_eq!(s, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn zero_jitter_simulation_is_exact() {
        let m = TimingModel::new(3.0, 1.0, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let t = m.simulate_walltime(12.5, 2.0, &mut rng);
        assert_eq!(t, 12.5 * m.cycle_time(2.0));
    }

    #[test]
    fn jittered_simulation_converges_to_the_mean() {
        let m = TimingModel {
            t_upstream: 4.0,
            t_downstream: 1.0,
            echo_overhead: 0.0,
            jitter_scale: 0.2,
        };
        let n = 20_000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = m.simulate_walltime(n, 1.0, &mut rng);
        // Jitter is symmetric and never pushes t_up below e * t_down here
        // (4 * 0.8 = 3.2 > 1), so the mean cycle is exactly 4.
        let per_cycle = t / n;
        assert!(
            (per_cycle - 4.0).abs() < 0.02,
            "mean cycle drifted: {per_cycle}"
        );
        assert!(t != n * 4.0, "jitter must actually perturb the sum");
    }

    #[test]
    fn validation_rejects_out_of_range_parameters() {
        let mut m = TimingModel::new(1.0, 1.0, 0.0);
        assert_eq!(m.validate(), Ok(()));
        m.t_upstream = 0.0;
        assert_eq!(m.validate(), Err(TimingError::BadUpstream(0.0)));
        m.t_upstream = 1.0;
        m.jitter_scale = 1.0;
        assert_eq!(m.validate(), Err(TimingError::BadJitter(1.0)));
        m.jitter_scale = 0.0;
        m.echo_overhead = -0.5;
        assert_eq!(m.validate(), Err(TimingError::BadOverhead(-0.5)));
    }
}
