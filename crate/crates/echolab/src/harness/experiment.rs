//! The experiment protocol: repeated quasi-random searches per arm.
//!
//! For every pipeline arm, `n_searches` independent searches each draw
//! quasi-random hyperparameter points and train one trial per point. A
//! trial that diverges is recorded (status `diverged`) but does not count
//! toward `n_trials`; a replacement point is drawn, mirroring the practice
//! of discarding trials with divergent training. The winner of a search is
//! the trial that reached the target with the fewest fresh examples (ties
//! broken by lower trial id); searches where nothing reached the target
//! have no winner.
//!
//! Everything is derived from the master seed, so a rerun reproduces every
//! file byte for byte (in deterministic mode).

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::quasi::HaltonSequence;
use super::HarnessError;
use crate::pipeline::PrefetchPipeline;
use crate::seeds;
use crate::trainer::{train_until_target, MetricPoint, RunStatus, TrainRun, TrainSetup};

/// One trial, as it appears in `trials.csv`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub arm: String,
    pub search_id: u64,
    /// Draw index within the search, diverged draws included.
    pub trial_id: u64,
    /// Searched values, in `search.dims` order.
    pub hyperparams: Vec<f64>,
    /// Fresh reads consumed (at the deciding evaluation for winners).
    pub fresh_examples: u64,
    pub sgd_steps: u64,
    pub examples_emitted: u64,
    pub simulated_walltime: f64,
    pub status: RunStatus,
    pub best_metric: f64,
}

/// Outcome of one search within one arm.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchOutcome {
    pub search_id: u64,
    pub winner_trial_id: Option<u64>,
    /// Fresh examples the winner needed (None when nothing reached target).
    pub fresh_examples: Option<u64>,
    pub simulated_walltime: Option<f64>,
    pub best_metric: Option<f64>,
    /// The winner's hyperparameters by name (empty when no winner).
    pub hyperparams: BTreeMap<String, f64>,
    pub diverged_draws: u64,
}

/// Per-arm aggregate over searches.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ArmSummary {
    pub name: String,
    pub searches: Vec<SearchOutcome>,
    /// Mean/min/max of winner fresh-example counts, over searches that
    /// produced a winner.
    pub fresh_mean: Option<f64>,
    pub fresh_min: Option<u64>,
    pub fresh_max: Option<u64>,
    pub walltime_mean: Option<f64>,
    pub diverged_draws: u64,
    /// Per search dim: did any winner land within 5% of a range edge (in
    /// the dim's transformed space)? A flag here means the range should be
    /// widened before trusting the numbers.
    pub boundary_flags: BTreeMap<String, bool>,
}

/// The whole experiment, as written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSummary {
    pub n_searches: usize,
    pub n_trials: usize,
    pub budget_fresh: u64,
    pub arms: Vec<ArmSummary>,
}

/// How to execute an experiment.
#[derive(Clone, Debug)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub master_seed: u64,
    /// Pull pipelines inline instead of behind a prefetch thread; byte
    /// determinism of the outputs is only guaranteed in this mode.
    pub deterministic: bool,
    /// Print per-search progress to stderr.
    pub progress: bool,
}

/// Results plus where they were written.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub trials: Vec<TrialResult>,
    pub summary: ExperimentSummary,
    pub trials_path: PathBuf,
    pub summary_path: PathBuf,
}

/// Give up on a search after this many draws fail to produce `n_trials`
/// non-diverged trials.
fn draw_cap(n_trials: usize) -> u64 {
    n_trials as u64 * 20 + 16
}

/// Run every search of every arm and write `trials.csv`, `summary.json`,
/// and one metric-history CSV per search winner.
pub fn run_experiment(
    config: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    let (train, eval) = config.task.generate();
    let train = Arc::new(train);
    let dims = &config.search.dims.dims;

    std::fs::create_dir_all(&opts.out_dir).map_err(|source| HarnessError::Io {
        path: opts.out_dir.clone(),
        source,
    })?;

    let mut trials: Vec<TrialResult> = Vec::new();
    // Histories of the current search's trials, so the winner's curve can
    // be written once the winner is known.
    for (arm_idx, arm) in config.pipeline.arms.iter().enumerate() {
        for search in 0..config.search.n_searches as u64 {
            let seq_seed = seeds::mix(
                seeds::mix(seeds::derive(opts.master_seed, "halton", 0), arm_idx as u64),
                search,
            );
            let mut seq = HaltonSequence::new(dims.len(), seq_seed);
            let mut histories: Vec<(u64, Vec<MetricPoint>)> = Vec::new();
            let mut accepted = 0usize;
            let mut draw = 0u64;
            let mut diverged = 0u64;
            while accepted < config.search.n_trials {
                if draw >= draw_cap(config.search.n_trials) {
                    return Err(HarnessError::TooManyDiverged {
                        arm: arm.name.clone(),
                        search,
                    });
                }
                let unit = seq.next_point();
                let values = config.search.dims.map_point(&unit);

                let mut base_lr = config.optimizer.base_lr;
                let mut momentum = config.optimizer.momentum;
                let mut schedule = config.schedule.clone();
                for (dim, &value) in dims.iter().zip(&values) {
                    ExperimentConfig::apply_dim(
                        &dim.name,
                        value,
                        &mut base_lr,
                        &mut momentum,
                        &mut schedule,
                    );
                }

                let trial_stream = |tag: &str| {
                    seeds::mix(
                        seeds::mix(
                            seeds::mix(seeds::derive(opts.master_seed, tag, 0), arm_idx as u64),
                            search,
                        ),
                        draw,
                    )
                };
                let pipeline = config.pipeline_for(arm, trial_stream("pipeline"));
                let setup = TrainSetup {
                    pipeline: &pipeline,
                    model: config.task.model(),
                    n_classes: config.task.n_classes(),
                    rule: config.optimizer.rule,
                    momentum,
                    base_lr,
                    schedule,
                    target: config.search.target,
                    budget_fresh: config.search.budget_fresh,
                    eval_interval: config.search.eval_interval,
                    run_seed: trial_stream("trial"),
                    prefetch: if opts.deterministic {
                        None
                    } else {
                        Some(PrefetchPipeline::DEFAULT_QUEUE)
                    },
                };
                let run: TrainRun =
                    train_until_target(&setup, Arc::clone(&train), &eval, Some(&config.timing))?;

                if run.status == RunStatus::Diverged {
                    diverged += 1;
                } else {
                    accepted += 1;
                }
                histories.push((draw, run.counters.history.clone()));
                trials.push(TrialResult {
                    arm: arm.name.clone(),
                    search_id: search,
                    trial_id: draw,
                    hyperparams: values,
                    fresh_examples: run.counters.fresh_examples,
                    sgd_steps: run.counters.sgd_steps,
                    examples_emitted: run.counters.examples_emitted,
                    simulated_walltime: run.counters.simulated_walltime,
                    status: run.status,
                    best_metric: run.best_metric,
                });
                draw += 1;
            }

            // Winner of this search, if any: write its metric history.
            let search_trials: Vec<&TrialResult> = trials
                .iter()
                .filter(|t| t.arm == arm.name && t.search_id == search)
                .collect();
            if let Some(winner) = pick_winner(&search_trials) {
                let history = &histories
                    .iter()
                    .find(|(id, _)| *id == winner.trial_id)
                    .expect("winner history recorded")
                    .1;
                let path = opts
                    .out_dir
                    .join(format!("history_{}_search{}.csv", arm.name, search));
                write_history_csv(&path, history)?;
                if opts.progress {
                    eprintln!(
                        "[{}] search {search}: winner trial {} at {} fresh examples \
                         ({} draws, {} diverged)",
                        arm.name, winner.trial_id, winner.fresh_examples, draw, diverged
                    );
                }
            } else if opts.progress {
                eprintln!(
                    "[{}] search {search}: no trial reached the target \
                     ({} draws, {} diverged)",
                    arm.name, draw, diverged
                );
            }
        }
    }

    let summary = summarize(config, &trials);
    let trials_path = opts.out_dir.join("trials.csv");
    write_trials_csv(&trials_path, config, &trials)?;
    let summary_path = opts.out_dir.join("summary.json");
    write_summary_json(&summary_path, &summary)?;
    Ok(ExperimentOutcome {
        trials,
        summary,
        trials_path,
        summary_path,
    })
}

/// The trial that reached the target with the fewest fresh examples; ties
/// break toward the lower trial id. `None` when nothing reached the target.
pub fn pick_winner<'a>(trials: &[&'a TrialResult]) -> Option<&'a TrialResult> {
    trials
        .iter()
        .filter(|t| t.status == RunStatus::ReachedTarget)
        .min_by_key(|t| (t.fresh_examples, t.trial_id))
        .copied()
}

/// Aggregate trial rows into the summary; a pure function of the config
/// and the rows, so `report` can rebuild `summary.json` from `trials.csv`.
pub fn summarize(config: &ExperimentConfig, trials: &[TrialResult]) -> ExperimentSummary {
    let dims = &config.search.dims.dims;
    let mut arms = Vec::new();
    for arm in &config.pipeline.arms {
        let mut searches = Vec::new();
        let mut winner_values: Vec<Vec<f64>> = Vec::new();
        let mut total_diverged = 0u64;
        for search in 0..config.search.n_searches as u64 {
            let search_trials: Vec<&TrialResult> = trials
                .iter()
                .filter(|t| t.arm == arm.name && t.search_id == search)
                .collect();
            let diverged = search_trials
                .iter()
                .filter(|t| t.status == RunStatus::Diverged)
                .count() as u64;
            total_diverged += diverged;
            let winner = pick_winner(&search_trials);
            if let Some(w) = winner {
                winner_values.push(w.hyperparams.clone());
            }
            searches.push(SearchOutcome {
                search_id: search,
                winner_trial_id: winner.map(|w| w.trial_id),
                fresh_examples: winner.map(|w| w.fresh_examples),
                simulated_walltime: winner.map(|w| w.simulated_walltime),
                best_metric: winner.map(|w| w.best_metric),
                hyperparams: winner.map_or_else(BTreeMap::new, |w| {
                    dims.iter()
                        .map(|d| d.name.clone())
                        .zip(w.hyperparams.iter().copied())
                        .collect()
                }),
                diverged_draws: diverged,
            });
        }

        let fresh: Vec<u64> = searches.iter().filter_map(|s| s.fresh_examples).collect();
        let walltimes: Vec<f64> = searches
            .iter()
            .filter_map(|s| s.simulated_walltime)
            .collect();
        let boundary_flags = dims
            .iter()
            .enumerate()
            .map(|(i, dim)| {
                let near_edge = winner_values.iter().any(|values| {
                    let u = dim.normalized(values[i]);
                    u <= 0.05 || u >= 0.95
                });
                (dim.name.clone(), near_edge)
            })
            .collect();
        arms.push(ArmSummary {
            name: arm.name.clone(),
            searches,
            fresh_mean: mean_u64(&fresh),
            fresh_min: fresh.iter().min().copied(),
            fresh_max: fresh.iter().max().copied(),
            walltime_mean: mean_f64(&walltimes),
            diverged_draws: total_diverged,
            boundary_flags,
        });
    }
    ExperimentSummary {
        n_searches: config.search.n_searches,
        n_trials: config.search.n_trials,
        budget_fresh: config.search.budget_fresh,
        arms,
    }
}

fn mean_u64(xs: &[u64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<u64>() as f64 / xs.len() as f64)
    }
}

fn mean_f64(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

// ------------------------------------------------------------------
// File formats
// ------------------------------------------------------------------

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// CSV header for this config's dims.
pub fn trials_csv_header(config: &ExperimentConfig) -> String {
    let mut cols = vec!["arm".to_string(), "search_id".into(), "trial_id".into()];
    cols.extend(config.search.dims.dims.iter().map(|d| d.name.clone()));
    cols.extend(
        [
            "fresh_examples",
            "sgd_steps",
            "examples_emitted",
            "simulated_walltime",
            "status",
            "best_metric",
        ]
        .map(String::from),
    );
    cols.join(",")
}

/// Write all trial rows. Floats use Rust's shortest-roundtrip formatting,
/// so reading the file back reproduces the exact values.
pub fn write_trials_csv(
    path: &Path,
    config: &ExperimentConfig,
    trials: &[TrialResult],
) -> Result<(), HarnessError> {
    let mut out = String::new();
    out.push_str(&trials_csv_header(config));
    out.push('\n');
    for t in trials {
        out.push_str(&t.arm);
        out.push_str(&format!(",{},{}", t.search_id, t.trial_id));
        for v in &t.hyperparams {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(&format!(
            ",{},{},{},{},{},{}\n",
            t.fresh_examples,
            t.sgd_steps,
            t.examples_emitted,
            t.simulated_walltime,
            t.status,
            t.best_metric
        ));
    }
    std::fs::write(path, out).map_err(io_err(path))
}

fn write_history_csv(path: &Path, history: &[MetricPoint]) -> Result<(), HarnessError> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err(path))?);
    (|| {
        writeln!(file, "sgd_steps,fresh_examples,metric")?;
        for p in history {
            writeln!(file, "{},{},{}", p.sgd_steps, p.fresh_examples, p.metric)?;
        }
        file.flush()
    })()
    .map_err(io_err(path))
}

/// Write the summary as pretty JSON with a trailing newline.
pub fn write_summary_json(path: &Path, summary: &ExperimentSummary) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::RunStatus;

    fn trial(arm: &str, search: u64, id: u64, status: RunStatus, fresh: u64) -> TrialResult {
        TrialResult {
            arm: arm.into(),
            search_id: search,
            trial_id: id,
            hyperparams: vec![0.1],
            fresh_examples: fresh,
            sgd_steps: 10,
            examples_emitted: 160,
            simulated_walltime: 1.0,
            status,
            best_metric: 0.9,
        }
    }

    #[test]
    fn winner_is_min_fresh_with_ties_to_lower_trial_id() {
        let trials = [
            trial("a", 0, 0, RunStatus::BudgetExhausted, 50_000),
            trial("a", 0, 1, RunStatus::ReachedTarget, 1_200),
            trial("a", 0, 2, RunStatus::ReachedTarget, 900),
            trial("a", 0, 3, RunStatus::ReachedTarget, 900),
            trial("a", 0, 4, RunStatus::Diverged, 100),
        ];
        let refs: Vec<&TrialResult> = trials.iter().collect();
        let winner = pick_winner(&refs).unwrap();
        assert_eq!(winner.trial_id, 2);
    }

    #[test]
    fn no_reached_trial_means_no_winner() {
        let trials = [
            trial("a", 0, 0, RunStatus::BudgetExhausted, 50_000),
            trial("a", 0, 1, RunStatus::Diverged, 10),
        ];
        let refs: Vec<&TrialResult> = trials.iter().collect();
        assert!(pick_winner(&refs).is_none());
    }
}
