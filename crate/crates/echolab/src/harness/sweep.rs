//! Sweeps: repeat the whole experiment while varying one pipeline knob.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::experiment::{run_experiment, ExperimentOutcome, RunOptions};
use super::HarnessError;
use crate::echo::EchoFactor;

/// Which pipeline knob a sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    /// Echo factor of every echoing arm (arms with `echo_insertion: none`
    /// keep their factor of 1, so a baseline arm stays a baseline).
    EchoFactor,
    /// Global batch size (values must be positive integers).
    BatchSize,
    /// Global shuffle-buffer capacity (values must be positive integers).
    BufferSize,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::EchoFactor => "echo_factor",
            SweepAxis::BatchSize => "batch_size",
            SweepAxis::BufferSize => "buffer_size",
        }
    }

    /// Apply one axis value to a copy of the config.
    fn apply(self, config: &mut ExperimentConfig, value: f64) -> Result<(), HarnessError> {
        let as_size = |what: &str| -> Result<usize, HarnessError> {
            if value.fract() != 0.0 || value < 1.0 || value > u32::MAX as f64 {
                return Err(HarnessError::Invalid(format!(
                    "{what} sweep values must be positive integers, got {value}"
                )));
            }
            Ok(value as usize)
        };
        match self {
            SweepAxis::EchoFactor => {
                let factor = EchoFactor::new(value).map_err(|e| {
                    HarnessError::Invalid(format!("echo_factor sweep value {value}: {e}"))
                })?;
                for arm in &mut config.pipeline.arms {
                    if arm.echo_insertion != crate::pipeline::EchoInsertion::None {
                        arm.echo_factor = factor;
                    }
                }
            }
            SweepAxis::BatchSize => config.pipeline.batch_size = as_size("batch_size")?,
            SweepAxis::BufferSize => config.pipeline.shuffle_buffer_size = as_size("buffer_size")?,
        }
        Ok(())
    }
}

/// One row of `sweep.csv`: the aggregate outcome of one arm at one axis
/// value. Empty aggregate fields mean no search produced a winner.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis: &'static str,
    pub value: f64,
    pub arm: String,
    pub searches_with_winner: usize,
    pub fresh_mean: Option<f64>,
    pub fresh_min: Option<u64>,
    pub fresh_max: Option<u64>,
    pub walltime_mean: Option<f64>,
}

/// Results of a sweep: the combined rows plus each value's full outcome.
#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub per_value: Vec<(f64, ExperimentOutcome)>,
    pub sweep_csv_path: PathBuf,
}

/// Run the experiment once per axis value, each into its own subdirectory
/// of `opts.out_dir`, and write a combined `sweep.csv` for plotting.
pub fn run_sweep(
    config: &ExperimentConfig,
    axis: SweepAxis,
    values: &[f64],
    opts: &RunOptions,
) -> Result<SweepOutcome, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::Invalid(
            "sweep needs at least one value".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut per_value = Vec::new();
    for &value in values {
        let mut cfg = config.clone();
        axis.apply(&mut cfg, value)?;
        cfg.validate()?;
        let sub_opts = RunOptions {
            out_dir: opts
                .out_dir
                .join(format!("{}_{}", axis.name(), fmt_value(value))),
            ..opts.clone()
        };
        if opts.progress {
            eprintln!("=== {} = {value} ===", axis.name());
        }
        let outcome = run_experiment(&cfg, &sub_opts)?;
        for arm in &outcome.summary.arms {
            rows.push(SweepRow {
                axis: axis.name(),
                value,
                arm: arm.name.clone(),
                searches_with_winner: arm
                    .searches
                    .iter()
                    .filter(|s| s.winner_trial_id.is_some())
                    .count(),
                fresh_mean: arm.fresh_mean,
                fresh_min: arm.fresh_min,
                fresh_max: arm.fresh_max,
                walltime_mean: arm.walltime_mean,
            });
        }
        per_value.push((value, outcome));
    }
    let sweep_csv_path = opts.out_dir.join("sweep.csv");
    write_sweep_csv(&sweep_csv_path, &rows)?;
    Ok(SweepOutcome {
        rows,
        per_value,
        sweep_csv_path,
    })
}

/// Directory-name-friendly rendering of an axis value: `2` not `2.0`.
fn fmt_value(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    (|| {
        writeln!(
            file,
            "axis,value,arm,searches_with_winner,fresh_mean,fresh_min,fresh_max,walltime_mean"
        )?;
        for r in rows {
            writeln!(
                file,
                "{},{},{},{},{},{},{},{}",
                r.axis,
                r.value,
                r.arm,
                r.searches_with_winner,
                opt(r.fresh_mean),
                opt(r.fresh_min),
                opt(r.fresh_max),
                opt(r.walltime_mean),
            )?;
        }
        file.flush()
    })()
    .map_err(io_err)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}
