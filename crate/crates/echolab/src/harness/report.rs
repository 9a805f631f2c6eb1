//! Rebuild `summary.json` from `trials.csv`.
//!
//! The summary is a pure aggregation of the trial rows, so it can always be
//! re-derived from the CSV (plus the config, which carries the dim names
//! and arm list). Floats round-trip exactly through the CSV because the
//! writer uses shortest-roundtrip formatting.

use std::path::Path;
use std::str::FromStr;

use super::config::ExperimentConfig;
use super::experiment::{summarize, trials_csv_header, ExperimentSummary, TrialResult};
use super::HarnessError;
use crate::trainer::RunStatus;

impl FromStr for RunStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<RunStatus, String> {
        match s {
            "reached_target" => Ok(RunStatus::ReachedTarget),
            "budget_exhausted" => Ok(RunStatus::BudgetExhausted),
            "diverged" => Ok(RunStatus::Diverged),
            other => Err(format!("unknown run status `{other}`")),
        }
    }
}

/// Read a `trials.csv` produced for `config` back into trial rows.
pub fn read_trials_csv(
    path: &Path,
    config: &ExperimentConfig,
) -> Result<Vec<TrialResult>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let bad = |line: usize, why: String| {
        HarnessError::Invalid(format!("{}:{line}: {why}", path.display()))
    };
    let n_dims = config.search.dims.dims.len();
    let expected_header = trials_csv_header(config);
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == expected_header => {}
        Some((_, header)) => {
            return Err(bad(
                1,
                format!("header `{header}` does not match the config (`{expected_header}`)"),
            ))
        }
        None => return Err(bad(1, "empty file".into())),
    }

    let mut trials = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 + n_dims + 6 {
            return Err(bad(
                line_no,
                format!("expected {} fields, found {}", 3 + n_dims + 6, fields.len()),
            ));
        }
        let parse_u64 = |s: &str, what: &str| {
            s.parse::<u64>()
                .map_err(|e| bad(line_no, format!("{what}: {e}")))
        };
        let parse_f64 = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|e| bad(line_no, format!("{what}: {e}")))
        };
        let mut hyperparams = Vec::with_capacity(n_dims);
        for (k, field) in fields[3..3 + n_dims].iter().enumerate() {
            hyperparams.push(parse_f64(field, &config.search.dims.dims[k].name)?);
        }
        let tail = &fields[3 + n_dims..];
        trials.push(TrialResult {
            arm: fields[0].to_string(),
            search_id: parse_u64(fields[1], "search_id")?,
            trial_id: parse_u64(fields[2], "trial_id")?,
            hyperparams,
            fresh_examples: parse_u64(tail[0], "fresh_examples")?,
            sgd_steps: parse_u64(tail[1], "sgd_steps")?,
            examples_emitted: parse_u64(tail[2], "examples_emitted")?,
            simulated_walltime: parse_f64(tail[3], "simulated_walltime")?,
            status: tail[4].parse::<RunStatus>().map_err(|e| bad(line_no, e))?,
            best_metric: parse_f64(tail[5], "best_metric")?,
        });
    }
    Ok(trials)
}

/// Recompute the summary for an existing `trials.csv`.
pub fn rebuild_summary(
    trials_path: &Path,
    config: &ExperimentConfig,
) -> Result<ExperimentSummary, HarnessError> {
    let trials = read_trials_csv(trials_path, config)?;
    Ok(summarize(config, &trials))
}
