//! Multi-trial experiments: seeded trial ensembles, hyperparameter search
//! by mean validation RMSE, trial-count convergence, cross-seed stability
//! and per-stratum batch runs.
//!
//! Trial `t` of a run always uses seed `base_seed + t`, so any prefix of a
//! larger run is itself a valid smaller run. Trials execute on the ambient
//! rayon pool (see [`with_workers`]) and are merged by trial index, so
//! results never depend on scheduling.

mod grid;
mod horizons;
mod stats;
mod stratified;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evalkit::{apply_intervals, conformal_radius, EvalError, Metric, MetricsReport};
use crate::forecasters::{self, Fitted, ForecastError, ModelConfig, TrainedModel};
use crate::ingest::IngestError;
use crate::projection::ProjectionResult;
use crate::sarima::forecast_sarima;
use crate::series::{DatasetSplit, MonthlySeries, SeriesError, TuningSplit};

pub use grid::{grid_search_dl, DlGrid, DlLeaderboardEntry, DlSearch};
pub use horizons::{horizon_table, horizons_csv, HorizonRow, HorizonStat};
pub use stats::{
    Aggregate, ConvergenceCurve, ConvergencePoint, CurveStat, Summary, CI_REL_TOL, CI_Z, CONVERGENCE_METRICS,
    MEAN_REL_TOL,
};
pub(crate) use stats::check_counts;
pub use stratified::{run_stratified, StratifiedPlan, StratifiedResult, StratumCensus, StratumResult, SummaryRow};

pub const DEFAULT_BASE_SEED: u64 = 42;
/// Trials per configuration during tuning.
pub const TUNING_TRIALS: usize = 30;
/// Trials per configuration for stratified and final reporting runs.
pub const REPORTING_TRIALS: usize = 100;
pub const CONVERGENCE_COUNTS: [usize; 10] = [10, 20, 30, 40, 50, 60, 70, 80, 90, 100];
pub const CROSS_SEEDS: [u64; 5] = [42, 123, 456, 789, 2024];
/// Miscoverage level of the conformal intervals.
pub const CONFORMAL_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrialsError {
    #[error("all {} trial(s) of {label} failed; first failure: {}", census.len(), census.first().map(|f| f.reason.as_str()).unwrap_or("none"))]
    Exhausted { label: String, census: Vec<TrialFailure> },
    #[error("every configuration in the grid failed ({tried} tried)")]
    GridExhausted { tried: usize },
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Where the conformal residuals for the projection intervals come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualSource {
    /// Validation residuals of the model trained on the train segment only.
    #[default]
    Tuning,
    /// Residuals of the retrained model rolled over the validation span from
    /// the end of the train segment (in-sample for that model).
    Retrained,
}

/// Called with `(done, total)` as trials finish. Side channel only.
pub type Progress = Arc<dyn Fn(usize, usize) + Send + Sync>;

#[derive(Clone, Default)]
pub struct TrialOptions {
    pub residuals: ResidualSource,
    pub progress: Option<Progress>,
}

impl std::fmt::Debug for TrialOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TrialOptions")
            .field("residuals", &self.residuals)
            .field("progress", &self.progress.is_some())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedTrial {
    /// In-sample one-step fit of the retrained model over train+validation.
    pub train: MetricsReport,
    pub metrics: MetricsReport,
    pub result: ProjectionResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    /// In-sample one-step fit over the train segment.
    pub train: MetricsReport,
    pub validation: MetricsReport,
    pub validation_result: ProjectionResult,
    /// Absolute validation residuals of the train-only model.
    pub residuals: Vec<f64>,
    /// Conformal radius from `residuals` (neural families only).
    pub radius: Option<f64>,
    /// Present when the split carries a projection segment.
    pub projection: Option<ProjectedTrial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialEnsemble {
    pub config: ModelConfig,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    /// Successful trials in trial order.
    pub trials: Vec<TrialRecord>,
    pub failures: Vec<TrialFailure>,
    pub train: Aggregate,
    pub validation: Aggregate,
    /// In-sample fit of the retrained models, present with `projection`.
    pub final_train: Option<Aggregate>,
    pub projection: Option<Aggregate>,
}

impl TrialEnsemble {
    fn assemble(
        config: ModelConfig,
        base_seed: u64,
        outcomes: Vec<Result<TrialRecord, TrialFailure>>,
    ) -> Result<Self, TrialsError> {
        let seeds = (0..outcomes.len()).map(|t| trial_seed(base_seed, t)).collect();
        let (mut trials, mut failures) = (Vec::new(), Vec::new());
        for o in outcomes {
            match o {
                Ok(r) => trials.push(r),
                Err(f) => failures.push(f),
            }
        }
        let Some(validation) = Aggregate::from_reports(trials.iter().map(|t| &t.validation)) else {
            return Err(TrialsError::Exhausted {
                label: config.label(),
                census: failures,
            });
        };
        let train = Aggregate::from_reports(trials.iter().map(|t| &t.train)).expect("same trials as validation");
        let projection = Aggregate::from_reports(trials.iter().filter_map(|t| t.projection.as_ref().map(|p| &p.metrics)));
        let final_train = Aggregate::from_reports(trials.iter().filter_map(|t| t.projection.as_ref().map(|p| &p.train)));
        Ok(Self {
            config,
            base_seed,
            seeds,
            trials,
            failures,
            train,
            validation,
            final_train,
            projection,
        })
    }

    /// Pointwise mean of the successful trials' projections.
    pub fn mean_projection(&self) -> Option<ProjectionResult> {
        let results: Vec<&ProjectionResult> = self
            .trials
            .iter()
            .filter_map(|t| t.projection.as_ref().map(|p| &p.result))
            .collect();
        mean_paths(&results)
    }

    /// Pointwise mean of the validation paths.
    pub fn mean_validation(&self) -> ProjectionResult {
        mean_paths(&self.trials.iter().map(|t| &t.validation_result).collect::<Vec<_>>())
            .expect("an ensemble holds at least one trial")
    }

    /// `trial,seed,stage,rmse,mae,mape,pi_coverage,pi_width`.
    pub fn trials_csv(&self) -> String {
        let mut out = String::from("trial,seed,stage,rmse,mae,mape,pi_coverage,pi_width\n");
        let row = |out: &mut String, t: &TrialRecord, stage: &str, m: &MetricsReport| {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
                t.trial, t.seed, stage, m.rmse, m.mae, m.mape, m.pi_coverage, m.pi_width
            ));
        };
        for t in &self.trials {
            row(&mut out, t, "train", &t.train);
            row(&mut out, t, "validation", &t.validation);
            if let Some(p) = &t.projection {
                row(&mut out, t, "final_train", &p.train);
                row(&mut out, t, "projection", &p.metrics);
            }
        }
        out
    }
}

fn mean_paths(results: &[&ProjectionResult]) -> Option<ProjectionResult> {
    let first = results.first()?;
    let k = results.len() as f64;
    let avg = |f: fn(&ProjectionResult) -> &Vec<f64>| -> Vec<f64> {
        (0..first.len())
            .map(|i| results.iter().map(|r| f(r)[i]).sum::<f64>() / k)
            .collect()
    };
    Some(
        ProjectionResult::new(
            first.start,
            avg(|r| &r.points),
            avg(|r| &r.lower),
            avg(|r| &r.upper),
            first.level,
        )
        .expect("averages of ordered bounds stay ordered"),
    )
}

pub fn trial_seed(base_seed: u64, trial: usize) -> u64 {
    base_seed.wrapping_add(trial as u64)
}

/// Runs `f` on a dedicated pool of `workers` threads (0 means the rayon
/// default). Every parallel step inside uses that pool.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Trains, validates and (when the split has a projection segment)
/// retrains on train+validation and projects, once per trial. Equivalent
/// to [`project_trials`] applied to the run on the masked split.
///
/// SARIMA fits are deterministic, so the SARIMA trial is computed once
/// and replicated across the seed schedule.
pub fn run_trials(
    config: &ModelConfig,
    split: &DatasetSplit,
    n_trials: usize,
    base_seed: u64,
    opts: &TrialOptions,
) -> Result<TrialEnsemble, TrialsError> {
    if n_trials == 0 {
        return Err(TrialsError::Precondition("n_trials must be at least 1".into()));
    }
    config.validate()?;
    let tuning = split.tuning();
    let done = AtomicUsize::new(0);
    let tick = || {
        let d = done.fetch_add(1, Ordering::Relaxed) + 1;
        if let Some(p) = &opts.progress {
            p(d, n_trials);
        }
    };
    let full = |t: usize, seed: u64| -> Result<TrialRecord, TrialFailure> {
        let mut r = tune_one(config, &tuning, t, seed).map_err(|e| failure(t, seed, e))?;
        if split.projection.is_some() {
            r.projection = Some(project_one(config, split, &r, opts.residuals).map_err(|e| failure(t, seed, e))?);
        }
        Ok(r)
    };
    let outcomes: Vec<Result<TrialRecord, TrialFailure>> = if config.family().is_neural() {
        (0..n_trials)
            .into_par_iter()
            .map(|t| {
                let out = full(t, trial_seed(base_seed, t));
                tick();
                out
            })
            .collect()
    } else {
        let once = full(0, trial_seed(base_seed, 0));
        (0..n_trials)
            .map(|t| {
                tick();
                replicate(&once, t, trial_seed(base_seed, t))
            })
            .collect()
    };
    TrialEnsemble::assemble(*config, base_seed, outcomes)
}

/// Second protocol stage: retrains every successful trial of a tuning
/// ensemble on train+validation with the same seed and projects over the
/// split's projection segment. Trials failing here join the census.
pub fn project_trials(
    tuned: &TrialEnsemble,
    split: &DatasetSplit,
    opts: &TrialOptions,
) -> Result<TrialEnsemble, TrialsError> {
    if split.projection.is_none() {
        return Err(TrialsError::Precondition("the split has no projection segment".into()));
    }
    let config = &tuned.config;
    let project = |r: &TrialRecord| -> Result<TrialRecord, TrialFailure> {
        let p = project_one(config, split, r, opts.residuals).map_err(|e| failure(r.trial, r.seed, e))?;
        Ok(TrialRecord {
            projection: Some(p),
            ..r.clone()
        })
    };
    let mut outcomes: Vec<Result<TrialRecord, TrialFailure>> = if config.family().is_neural() {
        tuned.trials.par_iter().map(project).collect()
    } else {
        match tuned.trials.first() {
            None => Vec::new(),
            Some(first) => {
                let once = project(first);
                tuned.trials.iter().map(|r| replicate(&once, r.trial, r.seed)).collect()
            }
        }
    };
    outcomes.extend(tuned.failures.iter().cloned().map(Err));
    outcomes.sort_by_key(|o| match o {
        Ok(r) => r.trial,
        Err(f) => f.trial,
    });
    TrialEnsemble::assemble(*config, tuned.base_seed, outcomes)
}

fn failure(trial: usize, seed: u64, e: TrialsError) -> TrialFailure {
    TrialFailure {
        trial,
        seed,
        reason: e.to_string(),
    }
}

fn replicate(once: &Result<TrialRecord, TrialFailure>, trial: usize, seed: u64) -> Result<TrialRecord, TrialFailure> {
    match once {
        Ok(r) => Ok(TrialRecord { trial, seed, ..r.clone() }),
        Err(f) => Err(TrialFailure {
            trial,
            seed,
            reason: f.reason.clone(),
        }),
    }
}

/// Stage one: train on the train segment, score the fit and the
/// validation span. Only the tuning view of the data is in scope.
fn tune_one(config: &ModelConfig, split: &TuningSplit, trial: usize, seed: u64) -> Result<TrialRecord, TrialsError> {
    let val = &split.validation;
    let model = forecasters::train(config, &split.train, seed)?;
    let (validation_result, radius) = validation_path(&model, val)?;
    let residuals: Vec<f64> = val
        .values()
        .iter()
        .zip(&validation_result.points)
        .map(|(y, p)| (y - p).abs())
        .collect();
    let validation = MetricsReport::compute(val.values(), &validation_result)?;
    let train = in_sample(&model, &split.train, radius)?;
    Ok(TrialRecord {
        trial,
        seed,
        train,
        validation,
        validation_result,
        residuals,
        radius,
        projection: None,
    })
}

/// Stage two: retrain on train+validation with the trial's seed and
/// project over the projection segment.
fn project_one(
    config: &ModelConfig,
    split: &DatasetSplit,
    tuned: &TrialRecord,
    source: ResidualSource,
) -> Result<ProjectedTrial, TrialsError> {
    let obs = split
        .projection
        .as_ref()
        .ok_or_else(|| TrialsError::Precondition("the split has no projection segment".into()))?;
    let val = &split.validation;
    let combined = split.combined_train();
    let retrained = forecasters::train(config, &combined, tuned.seed)?;
    let (result, radius) = match &retrained.fitted {
        Fitted::Sarima(m) => (forecast_sarima(m, obs.len()).map_err(ForecastError::from)?.floored(), None),
        Fitted::Neural(n) => {
            let q = match source {
                ResidualSource::Tuning => tuned
                    .radius
                    .ok_or_else(|| TrialsError::Precondition("tuning trial carries no conformal radius".into()))?,
                ResidualSource::Retrained => {
                    let context = split.train.tail(n.settings.lookback);
                    let path = retrained.rollout(context, val.len())?;
                    let r: Vec<f64> = val.values().iter().zip(&path).map(|(y, p)| (y - p).abs()).collect();
                    conformal_radius(&r, CONFORMAL_ALPHA)?
                }
            };
            (apply_intervals(retrained.forecast_start(), &retrained.forecast(obs.len())?, q), Some(q))
        }
    };
    if result.start != obs.start() {
        return Err(TrialsError::Precondition(format!(
            "projection starts {}, observed segment starts {}",
            result.start,
            obs.start()
        )));
    }
    Ok(ProjectedTrial {
        train: in_sample(&retrained, &combined, radius)?,
        metrics: MetricsReport::compute(obs.values(), &result)?,
        result,
    })
}

/// In-sample one-step fit over the train segment. SARIMA uses its analytic
/// one-step band; neural models reuse the validation conformal radius.
fn in_sample(model: &TrainedModel, train: &MonthlySeries, radius: Option<f64>) -> Result<MetricsReport, TrialsError> {
    let (start_index, result) = match &model.fitted {
        Fitted::Sarima(m) => {
            let fitted = m.fitted();
            let hw = m.one_step_half_width();
            let lower = fitted.iter().map(|p| p - hw).collect();
            let upper = fitted.iter().map(|p| p + hw).collect();
            let r = ProjectionResult::new(train.month_at(m.first_residual), fitted, lower, upper, 0.95)
                .map_err(|e| TrialsError::Precondition(e.to_string()))?;
            (m.first_residual, r.floored())
        }
        Fitted::Neural(n) => {
            let l = n.settings.lookback;
            let windows: Vec<Vec<f64>> = train.values().windows(l + 1).map(|w| w[..l].to_vec()).collect();
            let preds = n.predict_batch(&windows)?;
            (l, apply_intervals(train.month_at(l), &preds, radius.unwrap_or(0.0)))
        }
    };
    Ok(MetricsReport::compute(&train.values()[start_index..], &result)?)
}

/// Validation path with intervals: analytic for SARIMA, conformal (from
/// the path's own residuals) for neural families. Returns the conformal
/// radius when one was used.
fn validation_path(model: &TrainedModel, val: &MonthlySeries) -> Result<(ProjectionResult, Option<f64>), TrialsError> {
    match &model.fitted {
        Fitted::Sarima(m) => Ok((forecast_sarima(m, val.len()).map_err(ForecastError::from)?.floored(), None)),
        Fitted::Neural(_) => {
            let v = forecasters::validate(model, val)?;
            let q = conformal_radius(&v.residuals, CONFORMAL_ALPHA)?;
            Ok((apply_intervals(val.start(), &v.predictions, q), Some(q)))
        }
    }
}

/// Convergence analysis over incremental trial prefixes. The largest count
/// is run once; each checkpoint aggregates the first `n` trials, so the
/// checkpoint at `n` equals a fresh `run_trials` with `n` trials.
pub fn convergence(
    config: &ModelConfig,
    split: &DatasetSplit,
    counts: &[usize],
    base_seed: u64,
    opts: &TrialOptions,
) -> Result<(ConvergenceCurve, TrialEnsemble), TrialsError> {
    stats::check_counts(counts).map_err(TrialsError::Precondition)?;
    let max = *counts.last().expect("checked nonempty");
    let ens = run_trials(config, split, max, base_seed, opts)?;
    let mut outcomes: Vec<Option<MetricsReport>> = vec![None; max];
    for t in &ens.trials {
        outcomes[t.trial] = Some(t.validation);
    }
    let curve = ConvergenceCurve::from_outcomes(&outcomes, counts).map_err(TrialsError::Precondition)?;
    Ok((curve, ens))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub base_seed: u64,
    pub validation: Aggregate,
    pub trials_ok: usize,
    pub trials_failed: usize,
}

/// Spread of a metric across base seeds: summaries of the per-seed means
/// and of the per-seed standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverallRow {
    pub metric: Metric,
    pub mean: Summary,
    pub sd: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSeedReport {
    pub config: ModelConfig,
    pub trials_each: usize,
    pub per_seed: Vec<SeedRow>,
    pub overall: Vec<OverallRow>,
}

impl CrossSeedReport {
    /// `seed,metric,mean,mean_sd,sd,sd_sd`; per-seed rows leave the spread
    /// columns empty, the `overall` rows fill them.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("seed,metric,mean,mean_sd,sd,sd_sd\n");
        for row in &self.per_seed {
            for m in Metric::ALL {
                let s = row.validation.get(m);
                out.push_str(&format!("{},{},{:.6},,{:.6},\n", row.base_seed, m.name(), s.mean, s.sd));
            }
        }
        for o in &self.overall {
            out.push_str(&format!(
                "overall,{},{:.6},{:.6},{:.6},{:.6}\n",
                o.metric.name(),
                o.mean.mean,
                o.mean.sd,
                o.sd.mean,
                o.sd.sd
            ));
        }
        out
    }
}

/// One ensemble per base seed; the overall rows summarise across seeds.
pub fn cross_seed(
    config: &ModelConfig,
    split: &DatasetSplit,
    base_seeds: &[u64],
    trials_each: usize,
    opts: &TrialOptions,
) -> Result<CrossSeedReport, TrialsError> {
    if base_seeds.len() < 2 {
        return Err(TrialsError::Precondition(format!(
            "cross-seed analysis needs at least 2 base seeds, got {}",
            base_seeds.len()
        )));
    }
    let ensembles: Vec<TrialEnsemble> = base_seeds
        .iter()
        .map(|&s| run_trials(config, split, trials_each, s, opts))
        .collect::<Result<_, _>>()?;
    let per_seed: Vec<SeedRow> = ensembles
        .iter()
        .map(|e| SeedRow {
            base_seed: e.base_seed,
            validation: e.validation,
            trials_ok: e.trials.len(),
            trials_failed: e.failures.len(),
        })
        .collect();
    let overall = Metric::ALL
        .into_iter()
        .map(|m| {
            let means: Vec<f64> = per_seed.iter().map(|r| r.validation.get(m).mean).collect();
            let sds: Vec<f64> = per_seed.iter().map(|r| r.validation.get(m).sd).collect();
            OverallRow {
                metric: m,
                mean: Summary::of(&means).expect("at least two seeds"),
                sd: Summary::of(&sds).expect("at least two seeds"),
            }
        })
        .collect();
    Ok(CrossSeedReport {
        config: *config,
        trials_each,
        per_seed,
        overall,
    })
}
