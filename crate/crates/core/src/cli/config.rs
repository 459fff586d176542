use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::calendar::YearMonth;
use crate::evalkit::STANDARD_HORIZONS;
use crate::forecasters::{Family, ModelConfig};
use crate::ingest::{SuppressionMode, StratumFilter, SyntheticSpec};
use crate::sarima::SarimaGrid;
use crate::series::SplitSpec;
use crate::trials::{DlGrid, ResidualSource, CONVERGENCE_COUNTS, CROSS_SEEDS, DEFAULT_BASE_SEED, TUNING_TRIALS};

/// A complete, auditable description of one run, read from TOML.
///
/// ```toml
/// families = ["sarima", "lstm"]
/// trials = 30
/// base_seed = 42
///
/// [data]
/// kind = "synthetic"
/// n_months = 108
/// seed = 7
/// level_shift = { from = "2020-01", amount = 900.0 }
///
/// [split]
/// train = { start = "2015-01", end = "2018-12" }
/// validation = { start = "2019-01", end = "2019-12" }
/// projection = { start = "2020-01", end = "2023-12" }
///
/// [tuning]
/// mode = "grid"
/// trials = 30
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    #[serde(default = "SplitSpec::national_main")]
    pub split: SplitSpec,
    #[serde(default = "all_families")]
    pub families: Vec<Family>,
    #[serde(default)]
    pub tuning: Tuning,
    /// Fixed configurations replacing the family defaults in fixed mode.
    #[serde(default)]
    pub models: Vec<ModelConfig>,
    /// Trials per family for the reported ensembles.
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
    #[serde(default)]
    pub residuals: ResidualSource,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default)]
    pub stratify: Option<Stratify>,
    #[serde(default)]
    pub analysis: Analysis,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub workers: Option<usize>,
}

fn all_families() -> Vec<Family> {
    Family::ALL.to_vec()
}
fn default_trials() -> usize {
    TUNING_TRIALS
}
fn default_seed() -> u64 {
    DEFAULT_BASE_SEED
}
fn default_horizons() -> Vec<usize> {
    STANDARD_HORIZONS.to_vec()
}
fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// `year,month,deaths` CSV as written by `ingest` or `synth`.
    Csv { path: PathBuf },
    /// WONDER tab-delimited export.
    Export {
        path: PathBuf,
        #[serde(default)]
        dimensions: Vec<String>,
        /// Restricts the modelled series to one category per dimension.
        #[serde(default)]
        filter: StratumFilter,
        #[serde(default)]
        suppression: SuppressionMode,
    },
    /// Trend plus seasonality fixture, optionally with a regime change.
    Synthetic(SyntheticSource),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSource {
    #[serde(default = "default_months")]
    pub n_months: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub start: Option<YearMonth>,
    #[serde(default)]
    pub base_level: Option<f64>,
    #[serde(default)]
    pub linear_slope: Option<f64>,
    #[serde(default)]
    pub noise_sd: Option<f64>,
    #[serde(default)]
    pub level_shift: Option<LevelShift>,
}

fn default_months() -> usize {
    108
}

impl Default for SyntheticSource {
    fn default() -> Self {
        Self {
            n_months: default_months(),
            seed: 0,
            start: None,
            base_level: None,
            linear_slope: None,
            noise_sd: None,
            level_shift: None,
        }
    }
}

impl SyntheticSource {
    pub fn spec(&self) -> SyntheticSpec {
        let mut spec = SyntheticSpec::national_like(self.n_months);
        if let Some(s) = self.start {
            spec.start = s;
        }
        if let Some(v) = self.base_level {
            spec.base_level = v;
        }
        if let Some(v) = self.linear_slope {
            spec.linear_slope = v;
        }
        if let Some(v) = self.noise_sd {
            spec.noise_sd = v;
        }
        spec
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelShift {
    pub from: YearMonth,
    pub amount: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningMode {
    /// Use `models` (or the family defaults) without searching.
    #[default]
    Fixed,
    Grid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tuning {
    #[serde(default)]
    pub mode: TuningMode,
    /// Trials per neural grid cell.
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub dl_grid: DlGrid,
    #[serde(default)]
    pub sarima_grid: SarimaGrid,
}

impl Default for Tuning {
    fn default() -> Self {
        Self {
            mode: TuningMode::Fixed,
            trials: TUNING_TRIALS,
            dl_grid: DlGrid::default(),
            sarima_grid: SarimaGrid::default(),
        }
    }
}

/// Per-stratum runs reusing the selected national configurations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stratify {
    pub dimensions: Vec<String>,
}

/// Settings for `converge` and `crossseed`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    #[serde(default = "default_family")]
    pub family: Family,
    #[serde(default = "default_counts")]
    pub counts: Vec<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
}

fn default_family() -> Family {
    Family::Lstm
}
fn default_counts() -> Vec<usize> {
    CONVERGENCE_COUNTS.to_vec()
}
fn default_seeds() -> Vec<u64> {
    CROSS_SEEDS.to_vec()
}

impl Default for Analysis {
    fn default() -> Self {
        Self {
            family: default_family(),
            counts: default_counts(),
            seeds: default_seeds(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        match &mut cfg.data {
            DataSource::Csv { path } | DataSource::Export { path, .. } if path.is_relative() => {
                *path = base_dir.join(&*path);
            }
            _ => {}
        }
        if cfg.out.is_relative() {
            cfg.out = base_dir.join(&cfg.out);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialize to TOML")
    }

    /// Checks every precondition that can be checked before any work starts.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.families.is_empty() {
            return bad("`families` is empty".into());
        }
        let unique: BTreeSet<Family> = self.families.iter().copied().collect();
        if unique.len() != self.families.len() {
            return bad(format!("`families` lists a family twice: {:?}", self.families));
        }
        if self.trials == 0 || self.tuning.trials == 0 {
            return bad("trial counts must be at least 1".into());
        }
        if self.workers == Some(0) {
            return bad("`workers` must be at least 1".into());
        }
        self.split.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let mut seen = BTreeSet::new();
        for m in &self.models {
            m.validate().map_err(|e| CliError::Config(e.to_string()))?;
            if !seen.insert(m.family()) {
                return bad(format!("`models` has two entries for {}", m.family()));
            }
            if !unique.contains(&m.family()) {
                return bad(format!("`models` configures {}, which is not in `families`", m.family()));
            }
        }
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return bad("`horizons` must be nonempty and positive".into());
        }
        if let Some(p) = &self.split.projection {
            let max = *self.horizons.iter().max().expect("nonempty");
            if max as i64 > p.months() {
                return bad(format!(
                    "largest horizon {max} exceeds the {}-month projection segment",
                    p.months()
                ));
            }
        }
        if self.tuning.mode == TuningMode::Grid {
            for f in self.families.iter().filter(|f| f.is_neural()) {
                self.tuning
                    .dl_grid
                    .configs(*f)
                    .map_err(|e| CliError::Config(e.to_string()))?;
            }
            if self.tuning.sarima_grid.orders().is_empty() {
                return bad("SARIMA grid is empty".into());
            }
        }
        match &self.data {
            DataSource::Synthetic(s) => {
                if s.n_months < 24 {
                    return bad(format!("synthetic series needs at least 24 months, got {}", s.n_months));
                }
            }
            DataSource::Export { dimensions, filter, .. } => {
                if let Some(k) = filter.keys().find(|k| !dimensions.contains(k)) {
                    return bad(format!("filter names {k:?}, which is not in `dimensions`"));
                }
            }
            DataSource::Csv { .. } => {}
        }
        if let Some(s) = &self.stratify {
            match &self.data {
                DataSource::Export { dimensions, .. } => {
                    if let Some(d) = s.dimensions.iter().find(|d| !dimensions.contains(d)) {
                        return bad(format!("stratify dimension {d:?} is not read from the export"));
                    }
                }
                _ => return bad("`stratify` needs an export data source".into()),
            }
        }
        crate::trials::check_counts(&self.analysis.counts).map_err(CliError::Config)?;
        Ok(())
    }

    /// The configuration used for `family` in fixed mode.
    pub fn fixed_config(&self, family: Family) -> ModelConfig {
        self.models
            .iter()
            .find(|m| m.family() == family)
            .copied()
            .unwrap_or_else(|| ModelConfig::default_for(family))
    }

    pub fn worker_count(&self) -> usize {
        self.workers.unwrap_or(1)
    }
}
