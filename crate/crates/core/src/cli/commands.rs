use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use super::artifacts::{write_atomic, RunDir};
use super::config::{RunConfig, SyntheticSource, TuningMode};
use super::pipeline::{period, progress};
use super::{load_data, run_id, CliError, LoadedData};
use crate::calendar::YearMonth;
use crate::forecasters::{Family, ModelConfig};
use crate::ingest::{
    apply_level_shift, generate_synthetic, parse_wonder_export, resolve_suppression, series_to_csv, to_series, Deaths,
    IngestError, StratifiedDataset, SuppressionPolicy, WonderRecord,
};
use crate::series::{split, DatasetSplit};
use crate::trials::{
    convergence, cross_seed, horizon_table, horizons_csv, run_trials, with_workers, ConvergenceCurve, CrossSeedReport,
    HorizonRow,
};

/// What `ingest` wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub months: usize,
    pub start: YearMonth,
    pub end: YearMonth,
    pub suppressed_cells: usize,
    pub files: Vec<PathBuf>,
    /// Strata skipped because their months do not form a contiguous run.
    pub skipped: Vec<(String, String)>,
}

impl fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} months, {}..{}", self.months, self.start, self.end)
    }
}

/// Parses an export, resolves suppressed cells under `policy` and writes
/// `national.csv` plus, when `dimensions` is nonempty, one CSV per stratum
/// under `strata/`.
pub fn cmd_ingest(
    export: &Path,
    dimensions: &[String],
    policy: SuppressionPolicy,
    out: &Path,
) -> Result<IngestSummary, CliError> {
    let text = std::fs::read_to_string(export).map_err(|e| CliError::io(export, e))?;
    let parsed = parse_wonder_export(&text, dimensions)?;
    let suppressed_cells = parsed.suppressed_cells();
    let dataset = resolve_suppression(&parsed, policy)?;
    let national = to_series(&dataset, None)?;
    let mut files = vec![out.join("national.csv")];
    write_atomic(&files[0], series_to_csv(&national).as_bytes())?;
    let mut skipped = Vec::new();
    if !dimensions.is_empty() {
        for stratum in dataset.strata(dimensions) {
            let label: Vec<String> = stratum.iter().map(|(k, v)| format!("{k}={v}")).collect();
            let label = label.join(";");
            match to_series(&dataset, Some(&stratum)) {
                Ok(s) => {
                    let path = out.join("strata").join(format!("{}.csv", file_safe(&label)));
                    write_atomic(&path, series_to_csv(&s).as_bytes())?;
                    files.push(path);
                }
                Err(e @ IngestError::Gap { .. }) => skipped.push((label, e.to_string())),
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(IngestSummary {
        months: national.len(),
        start: national.start(),
        end: national.end(),
        suppressed_cells,
        files,
        skipped,
    })
}

fn file_safe(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_=;.".contains(c) { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub csv: PathBuf,
    pub export: PathBuf,
    pub months: usize,
}

/// Writes a synthetic fixture both as `synthetic.csv` and as a
/// WONDER-layout `synthetic_export.txt`, so it can feed either data source.
pub fn cmd_synth(source: &SyntheticSource, out: &Path) -> Result<SynthOutput, CliError> {
    let mut series = generate_synthetic(&source.spec(), source.seed)?;
    if let Some(shift) = source.level_shift {
        series = apply_level_shift(&series, shift.from, shift.amount);
    }
    let records = series
        .months()
        .zip(series.values())
        .map(|(ym, v)| WonderRecord {
            year: ym.year,
            month: ym.month,
            stratum: BTreeMap::new(),
            deaths: Deaths::Count(v.round() as u64),
        })
        .collect();
    let dataset = StratifiedDataset::new(records, Vec::new(), "synthetic")?;
    let csv = out.join("synthetic.csv");
    let export = out.join("synthetic_export.txt");
    write_atomic(&csv, series_to_csv(&series).as_bytes())?;
    write_atomic(&export, dataset.to_export().as_bytes())?;
    Ok(SynthOutput {
        csv,
        export,
        months: series.len(),
    })
}

/// The configuration analysed for `family`: the fixed one, or in grid
/// mode the selection recorded by an earlier `pipeline` run.
fn analysis_config(cfg: &RunConfig, dir: &RunDir, family: Family) -> Result<ModelConfig, CliError> {
    match cfg.tuning.mode {
        TuningMode::Fixed => Ok(cfg.fixed_config(family)),
        TuningMode::Grid => {
            let path = dir.root().join("tuning/selected.json");
            let text = std::fs::read_to_string(&path).map_err(|_| {
                CliError::Config(format!("grid mode needs the selection from `pipeline` ({} is missing)", path.display()))
            })?;
            let selected: BTreeMap<Family, ModelConfig> =
                serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            selected
                .get(&family)
                .copied()
                .ok_or_else(|| CliError::Config(format!("{} holds no selection for {family}", path.display())))
        }
    }
}

/// Opens the run directory for `command`, runs `body` inside the worker
/// pool and records the outcome in the manifest.
fn analysis<T>(
    cfg: &RunConfig,
    command: &str,
    body: impl FnOnce(&LoadedData, &mut RunDir) -> Result<T, CliError> + Send,
) -> Result<T, CliError>
where
    T: Send,
{
    cfg.validate()?;
    let data = load_data(&cfg.data)?;
    let mut dir = RunDir::open(&cfg.out, &run_id(cfg, &data), command)?;
    let result = with_workers(cfg.worker_count(), || body(&data, &mut dir));
    dir.finish(result.as_ref().map(|_| ()))?;
    result
}

fn tuning_split(cfg: &RunConfig, data: &LoadedData) -> Result<DatasetSplit, CliError> {
    Ok(DatasetSplit::from_tuning(split(&data.series, &cfg.split.masked())?.tuning()))
}

/// Validation-metric convergence over increasing trial counts for the
/// analysis family; writes `analysis/convergence_<family>.csv`.
pub fn cmd_converge(cfg: &RunConfig) -> Result<(PathBuf, ConvergenceCurve), CliError> {
    let family = cfg.analysis.family;
    analysis(cfg, "converge", |data, dir| {
        let config = analysis_config(cfg, dir, family)?;
        let masked = tuning_split(cfg, data)?;
        let (curve, _) = convergence(
            &config,
            &masked,
            &cfg.analysis.counts,
            cfg.base_seed,
            &progress(format!("{family} convergence")),
        )?;
        let path = dir.write(&format!("analysis/convergence_{family}.csv"), &curve.to_csv())?;
        Ok((path, curve))
    })
}

/// Validation metrics of the analysis family under several base seeds;
/// writes `analysis/crossseed_<family>.csv`.
pub fn cmd_crossseed(cfg: &RunConfig) -> Result<(PathBuf, CrossSeedReport), CliError> {
    let family = cfg.analysis.family;
    if cfg.analysis.seeds.len() < 2 {
        return Err(CliError::Config(format!(
            "crossseed needs at least 2 base seeds, got {}",
            cfg.analysis.seeds.len()
        )));
    }
    analysis(cfg, "crossseed", |data, dir| {
        let config = analysis_config(cfg, dir, family)?;
        let masked = tuning_split(cfg, data)?;
        let report = cross_seed(
            &config,
            &masked,
            &cfg.analysis.seeds,
            cfg.trials,
            &progress(format!("{family} cross-seed")),
        )?;
        let path = dir.write(&format!("analysis/crossseed_{family}.csv"), &report.to_csv())?;
        Ok((path, report))
    })
}

/// Projection errors over the first 12/24/36/48 (or configured) months for
/// every family; writes `analysis/horizons.csv`.
pub fn cmd_horizons(cfg: &RunConfig) -> Result<(PathBuf, Vec<HorizonRow>), CliError> {
    let Some(p) = cfg.split.projection else {
        return Err(CliError::Config("horizons needs a projection segment in the split".into()));
    };
    analysis(cfg, "horizons", |data, dir| {
        let full = split(&data.series, &cfg.split)?;
        let observed = full.projection.as_ref().expect("projection requested");
        let mut rows = Vec::new();
        for &family in &cfg.families {
            let config = analysis_config(cfg, dir, family)?;
            let opts = crate::trials::TrialOptions {
                residuals: cfg.residuals,
                ..progress(format!("{family} horizons"))
            };
            let e = run_trials(&config, &full, cfg.trials, cfg.base_seed, &opts)?;
            rows.extend(horizon_table(&e, observed, &cfg.horizons)?);
        }
        log::info!("horizons over {}", period(&p));
        let path = dir.write("analysis/horizons.csv", &horizons_csv(&rows))?;
        Ok((path, rows))
    })
}
