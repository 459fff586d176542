//! Command orchestration: tune on the masked split, retrain on
//! train+validation, project, score and report. The `excessmort` binary is
//! a thin argument parser over the `cmd_*` functions here.

mod artifacts;
mod commands;
mod config;
mod pipeline;
mod reports;

use std::path::Path;

use serde::Serialize;
use thiserror::Error;

pub use artifacts::{sha256_hex, write_atomic, ArtifactEntry, CommandState, IndexEntry, Manifest, RunDir, RunIndex, Status, INDEX, MANIFEST};
pub use commands::{cmd_converge, cmd_crossseed, cmd_horizons, cmd_ingest, cmd_synth, IngestSummary, SynthOutput};
pub use config::{Analysis, DataSource, LevelShift, RunConfig, Stratify, SyntheticSource, Tuning, TuningMode};
pub use pipeline::{cmd_pipeline, PipelineOutcome};
pub use reports::{display_name, metrics_csv, stage_table, table1_csv, StageRow};

use crate::evalkit::EvalError;
use crate::forecasters::ForecastError;
use crate::ingest::{
    apply_level_shift, generate_synthetic, parse_wonder_export, resolve_suppression, series_from_csv, series_to_csv,
    to_series, IngestError, StratifiedDataset, SuppressionPolicy,
};
use crate::sarima::SarimaError;
use crate::series::{MonthlySeries, SeriesError};
use crate::trials::TrialsError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Trials(#[from] TrialsError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Sarima(#[from] SarimaError),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

/// The modelled series plus, for exports, the stratified records.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub series: MonthlySeries,
    pub dataset: Option<StratifiedDataset>,
    /// SHA-256 of the raw input bytes (of the generated CSV for synthetic data).
    pub digest: String,
    /// Short description for the run index.
    pub label: String,
}

pub fn load_data(source: &DataSource) -> Result<LoadedData, CliError> {
    match source {
        DataSource::Csv { path } => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            Ok(LoadedData {
                series: series_from_csv(&text)?,
                dataset: None,
                digest: sha256_hex(text.as_bytes()),
                label: format!("csv:{}", file_name(path)),
            })
        }
        DataSource::Export {
            path,
            dimensions,
            filter,
            suppression,
        } => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let parsed = parse_wonder_export(&text, dimensions)?;
            let dataset = resolve_suppression(&parsed, SuppressionPolicy { mode: *suppression })?;
            let series = to_series(&dataset, (!filter.is_empty()).then_some(filter))?;
            Ok(LoadedData {
                series,
                dataset: Some(dataset),
                digest: sha256_hex(text.as_bytes()),
                label: format!("export:{}", file_name(path)),
            })
        }
        DataSource::Synthetic(s) => {
            let mut series = generate_synthetic(&s.spec(), s.seed)?;
            if let Some(shift) = s.level_shift {
                series = apply_level_shift(&series, shift.from, shift.amount);
            }
            Ok(LoadedData {
                digest: sha256_hex(series_to_csv(&series).as_bytes()),
                series,
                dataset: None,
                label: format!("synthetic:seed={}", s.seed),
            })
        }
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Content hash naming the run directory: every input that can change a
/// result, and nothing else (paths, output location and worker count are
/// excluded).
pub fn run_id(cfg: &RunConfig, data: &LoadedData) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        version: &'a str,
        data_digest: &'a str,
        data: DataSource,
        split: &'a crate::series::SplitSpec,
        families: &'a [crate::forecasters::Family],
        tuning: &'a Tuning,
        models: &'a [crate::forecasters::ModelConfig],
        trials: usize,
        base_seed: u64,
        residuals: crate::trials::ResidualSource,
        horizons: &'a [usize],
        stratify: &'a Option<Stratify>,
    }
    let mut data_key = cfg.data.clone();
    match &mut data_key {
        DataSource::Csv { path } | DataSource::Export { path, .. } => *path = Default::default(),
        DataSource::Synthetic(_) => {}
    }
    let key = Key {
        version: env!("CARGO_PKG_VERSION"),
        data_digest: &data.digest,
        data: data_key,
        split: &cfg.split,
        families: &cfg.families,
        tuning: &cfg.tuning,
        models: &cfg.models,
        trials: cfg.trials,
        base_seed: cfg.base_seed,
        residuals: cfg.residuals,
        horizons: &cfg.horizons,
        stratify: &cfg.stratify,
    };
    let json = serde_json::to_string(&key).expect("run key serializes");
    sha256_hex(json.as_bytes())[..16].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(seed: u64) -> RunConfig {
        RunConfig::from_toml(&format!("[data]\nkind = \"synthetic\"\nseed = {seed}\n"), Path::new("/")).unwrap()
    }

    #[test]
    fn run_id_ignores_location_and_workers_only() {
        let a = synthetic(1);
        let data = load_data(&a.data).unwrap();
        let mut b = a.clone();
        b.out = "/elsewhere".into();
        b.workers = Some(4);
        assert_eq!(run_id(&a, &data), run_id(&b, &data));
        b.trials = 5;
        assert_ne!(run_id(&a, &data), run_id(&b, &data));
        let c = synthetic(2);
        assert_ne!(run_id(&a, &data), run_id(&c, &load_data(&c.data).unwrap()));
        assert_eq!(run_id(&a, &data).len(), 16);
    }

    #[test]
    fn synthetic_source_applies_the_level_shift() {
        let mut cfg = synthetic(3);
        let plain = load_data(&cfg.data).unwrap().series;
        if let DataSource::Synthetic(s) = &mut cfg.data {
            s.level_shift = Some(LevelShift {
                from: "2020-01".parse().unwrap(),
                amount: 500.0,
            });
        }
        let shifted = load_data(&cfg.data).unwrap().series;
        assert_eq!(plain.len(), 108);
        assert_eq!(shifted.values()[59], plain.values()[59]);
        assert_eq!(shifted.values()[60], plain.values()[60] + 500.0);
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_data(&DataSource::Csv {
            path: "/no/such/file.csv".into(),
        })
        .unwrap_err();
        assert!(matches!(err, CliError::Io { .. }));
    }
}
