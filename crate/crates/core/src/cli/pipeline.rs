use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use super::artifacts::{IndexEntry, Manifest, RunDir, RunIndex, Status};
use super::config::{RunConfig, TuningMode};
use super::reports::{metrics_csv, stage_table, table1_csv, StageRow};
use super::{load_data, run_id, CliError, LoadedData};
use crate::evalkit::{excess, ExcessReport};
use crate::forecasters::{self, Family, ModelConfig};
use crate::ingest::series_to_csv;
use crate::sarima::{grid_search_sarima_with, SarimaFitOptions};
use crate::series::{split, DatasetSplit, Period, TuningSplit};
use crate::trials::{
    grid_search_dl, horizon_table, horizons_csv, project_trials, run_stratified, run_trials, with_workers,
    StratifiedPlan, Summary, TrialEnsemble, TrialOptions,
};

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub manifest: Manifest,
    pub selected: BTreeMap<Family, ModelConfig>,
    /// Excess of the observed projection segment over each family's mean
    /// projection; empty when the split has no projection segment.
    pub excess: BTreeMap<Family, ExcessReport>,
}

pub(crate) fn progress(label: String) -> TrialOptions {
    TrialOptions {
        progress: Some(Arc::new(move |done, total| log::info!("{label}: {done}/{total}"))),
        ..TrialOptions::default()
    }
}

pub(crate) fn period(p: &Period) -> String {
    format!("{}..{}", p.start, p.end)
}

/// Runs the three-stage protocol and writes every artifact under
/// `out/<run id>`. On failure the artifacts written so far stay in place
/// and the manifest records the failed stage.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<PipelineOutcome, CliError> {
    cfg.validate()?;
    let data = load_data(&cfg.data)?;
    let id = run_id(cfg, &data);
    let entry = |status| IndexEntry {
        id: id.clone(),
        data: data.label.clone(),
        families: cfg.families.iter().map(|f| f.name().to_string()).collect(),
        status,
    };
    let mut dir = RunDir::open(&cfg.out, &id, "pipeline")?;
    RunIndex::upsert(&cfg.out, entry(Status::Running))?;
    log::info!("run {id} -> {}", dir.root().display());
    let result = with_workers(cfg.worker_count(), || stages(cfg, &data, &mut dir));
    let run_dir = dir.root().to_path_buf();
    let manifest = dir.finish(result.as_ref().map(|_| ()))?;
    let status = if result.is_ok() { Status::Complete } else { Status::Failed };
    RunIndex::upsert(&cfg.out, entry(status))?;
    let (selected, excess) = result?;
    Ok(PipelineOutcome {
        run_id: id,
        run_dir,
        manifest,
        selected,
        excess,
    })
}

type Ensembles = BTreeMap<Family, TrialEnsemble>;
type StageOutput = (BTreeMap<Family, ModelConfig>, BTreeMap<Family, ExcessReport>);

fn stages(cfg: &RunConfig, data: &LoadedData, dir: &mut RunDir) -> Result<StageOutput, CliError> {
    // The worker budget never changes a result, so it is not part of the record.
    let recorded = RunConfig {
        workers: None,
        ..cfg.clone()
    };
    dir.write("config.toml", &recorded.to_toml())?;
    dir.write("data/observed.csv", &series_to_csv(&data.series))?;
    // Stage one sees a split built without the projection segment at all.
    let tuning = split(&data.series, &cfg.split.masked())?.tuning();
    let (selected, tuned) = tune(cfg, &tuning, dir)?;
    dir.stage_done("tune")?;

    let mut excess_reports = BTreeMap::new();
    let spec = &cfg.split;
    let mut rows: Vec<(Family, &str, String, crate::trials::Aggregate)> = Vec::new();
    for (family, e) in &tuned {
        rows.push((*family, "train", period(&spec.train), e.train));
        rows.push((*family, "validation", period(&spec.validation), e.validation));
    }
    if let Some(p) = spec.projection {
        let full = split(&data.series, spec)?;
        let projected = project(cfg, &full, &tuned, dir)?;
        dir.stage_done("project")?;

        let observed = full.projection.as_ref().expect("projection segment requested");
        let combined = Period::new(spec.train.start, spec.validation.end);
        let mut summary = String::from("model,months,cumulative,trial_cumulative_sd,share_outside_pi\n");
        let mut horizons = Vec::new();
        for (family, e) in &projected {
            let mean = e.mean_projection().expect("ensembles hold at least one projected trial");
            let report = excess(observed, &mean)?;
            let per_trial: Vec<f64> = e
                .trials
                .iter()
                .map(|t| excess(observed, &t.projection.as_ref().expect("projected").result).map(|r| r.cumulative))
                .collect::<Result<_, _>>()?;
            let spread = Summary::of(&per_trial).expect("nonempty");
            summary.push_str(&format!(
                "{family},{},{:.6},{:.6},{:.6}\n",
                report.monthly.len(),
                report.cumulative,
                spread.sd,
                report.share_outside_pi
            ));
            dir.write(&format!("excess/{family}.csv"), &report.to_csv())?;
            dir.write_json(&format!("excess/{family}.json"), &report)?;
            horizons.extend(horizon_table(e, observed, &cfg.horizons)?);
            rows.push((*family, "final_train", period(&combined), e.final_train.expect("projected")));
            rows.push((*family, "projection", period(&p), e.projection.expect("projected")));
            excess_reports.insert(*family, report);
        }
        dir.write("excess_summary.csv", &summary)?;
        dir.write("horizons.csv", &horizons_csv(&horizons))?;
        let table3: Vec<_> = projected
            .iter()
            .map(|(f, e)| (*f, e.final_train.as_ref().expect("projected"), e.projection.as_ref().expect("projected")))
            .collect();
        dir.write("table3.csv", &stage_table("Training", "Projection", &table3))?;
        if let (Some(st), Some(ds)) = (&cfg.stratify, &data.dataset) {
            let plan = StratifiedPlan {
                dimensions: st.dimensions.clone(),
                configs: selected.values().copied().collect(),
                spec: *spec,
                n_trials: cfg.trials,
                base_seed: cfg.base_seed,
                retune: None,
                retune_trials: cfg.tuning.trials,
            };
            let strat = run_stratified(ds, &plan, &progress("strata".into()))?;
            dir.write("stratified_summary.csv", &strat.summary_csv())?;
            dir.write("strata.csv", &strat.strata_csv())?;
            dir.write_json("stratified_census.json", &strat.census)?;
        }
    }
    rows.sort_by_key(|r| (r.0, stage_rank(r.1)));
    let stage_rows: Vec<StageRow<'_>> = rows
        .iter()
        .map(|(family, stage, period, agg)| StageRow {
            family: *family,
            stage,
            period,
            agg,
        })
        .collect();
    dir.write("metrics.csv", &metrics_csv(&stage_rows))?;
    dir.stage_done("report")?;
    Ok((selected, excess_reports))
}

fn stage_rank(stage: &str) -> usize {
    ["train", "validation", "final_train", "projection"]
        .iter()
        .position(|s| *s == stage)
        .unwrap_or(usize::MAX)
}

/// Stage one. Everything written here is a function of the train and
/// validation segments only.
fn tune(
    cfg: &RunConfig,
    tuning: &TuningSplit,
    dir: &mut RunDir,
) -> Result<(BTreeMap<Family, ModelConfig>, Ensembles), CliError> {
    let masked = DatasetSplit::from_tuning(tuning.clone());
    let mut selected = BTreeMap::new();
    let mut ensembles = BTreeMap::new();
    for &family in &cfg.families {
        let (config, reuse) = match cfg.tuning.mode {
            TuningMode::Fixed => (cfg.fixed_config(family), None),
            TuningMode::Grid if family.is_neural() => {
                log::info!("grid search {family}");
                let search = grid_search_dl(
                    family,
                    &cfg.tuning.dl_grid,
                    tuning,
                    cfg.tuning.trials,
                    cfg.base_seed,
                    &progress(format!("{family} grid")),
                )?;
                dir.write(&format!("tuning/leaderboard_{family}.csv"), &search.leaderboard_csv())?;
                (search.best, Some(search.best_ensemble))
            }
            TuningMode::Grid => {
                log::info!("grid search sarima");
                let search = grid_search_sarima_with(tuning, &cfg.tuning.sarima_grid, &SarimaFitOptions::default())?;
                dir.write("tuning/leaderboard_sarima.csv", &search.leaderboard_csv())?;
                (ModelConfig::Sarima { order: search.best }, None)
            }
        };
        let ensemble = match reuse {
            // Same config, seeds and data: the search already ran these trials.
            Some(e) if e.seeds.len() == cfg.trials => e,
            _ => run_trials(&config, &masked, cfg.trials, cfg.base_seed, &progress(format!("{family} trials")))?,
        };
        dir.write(&format!("tuning/trials_{family}.csv"), &ensemble.trials_csv())?;
        dir.write(&format!("tuning/validation_{family}.csv"), &ensemble.mean_validation().to_csv())?;
        selected.insert(family, config);
        ensembles.insert(family, ensemble);
    }
    dir.write_json("tuning/selected.json", &selected)?;
    let rows: Vec<_> = ensembles.iter().map(|(f, e)| (*f, &e.train, &e.validation)).collect();
    let periods = [period(&cfg.split.train), period(&cfg.split.validation)];
    let long: Vec<StageRow<'_>> = ensembles
        .iter()
        .flat_map(|(f, e)| {
            [
                StageRow { family: *f, stage: "train", period: &periods[0], agg: &e.train },
                StageRow { family: *f, stage: "validation", period: &periods[1], agg: &e.validation },
            ]
        })
        .collect();
    dir.write("tuning/metrics.csv", &metrics_csv(&long))?;
    dir.write("table1.csv", &table1_csv(&selected.values().copied().collect::<Vec<_>>()))?;
    dir.write("table2.csv", &stage_table("Training", "Validation", &rows))?;
    Ok((selected, ensembles))
}

/// Stage two: retrain every tuned trial on train+validation and project.
fn project(
    cfg: &RunConfig,
    full: &DatasetSplit,
    tuned: &BTreeMap<Family, TrialEnsemble>,
    dir: &mut RunDir,
) -> Result<BTreeMap<Family, TrialEnsemble>, CliError> {
    let mut out = BTreeMap::new();
    for (family, e) in tuned {
        let opts = TrialOptions {
            residuals: cfg.residuals,
            ..progress(format!("{family} projection"))
        };
        let projected = project_trials(e, full, &opts)?;
        let first_seed = projected.trials[0].seed;
        let checkpoint = forecasters::train(&e.config, &full.combined_train(), first_seed)?;
        dir.write(&format!("checkpoints/{family}.json"), &checkpoint.checkpoint_json())?;
        let mean = projected.mean_projection().expect("at least one projected trial");
        dir.write(&format!("projections/{family}.csv"), &mean.to_csv())?;
        dir.write(&format!("trials/{family}.csv"), &projected.trials_csv())?;
        out.insert(*family, projected);
    }
    Ok(out)
}
