use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{grid_search_dl, run_trials, DlGrid, Summary, TrialEnsemble, TrialOptions, TrialsError};
use crate::evalkit::{Metric, MetricsReport};
use crate::forecasters::{Family, ModelConfig};
use crate::ingest::{to_series, StratifiedDataset, Stratum};
use crate::sarima::grid_search_sarima;
use crate::series::{split, SplitSpec};

/// What to run for every stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedPlan {
    /// Dimensions to stratify by; empty means the national total.
    pub dimensions: Vec<String>,
    /// One configuration per family, reused for every stratum unless
    /// `retune` is set.
    pub configs: Vec<ModelConfig>,
    pub spec: SplitSpec,
    pub n_trials: usize,
    pub base_seed: u64,
    /// Re-select hyperparameters inside each stratum: neural families on
    /// this grid with `retune_trials` trials per cell, SARIMA on the full
    /// order grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retune: Option<DlGrid>,
    #[serde(default = "default_retune_trials")]
    pub retune_trials: usize,
}

fn default_retune_trials() -> usize {
    super::TUNING_TRIALS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumResult {
    pub stratum: Stratum,
    pub label: String,
    pub ensembles: BTreeMap<Family, TrialEnsemble>,
}

/// A stratum (or stratum x family cell) that produced no ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCensus {
    pub label: String,
    pub family: Option<Family>,
    pub reason: String,
}

/// One row of the pooled summary table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub family: Family,
    pub rmse: f64,
    pub mae: f64,
    pub mape: f64,
    pub pi_coverage: f64,
    /// Stratum x trial cells pooled into the row.
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedResult {
    /// Dimensions joined with `+`, or `National`.
    pub variable: String,
    pub strata: Vec<StratumResult>,
    pub census: Vec<StratumCensus>,
}

impl StratifiedResult {
    /// Per family, the mean over every (stratum, trial) cell of the
    /// projection metrics (validation metrics when the split has no
    /// projection segment).
    pub fn summary(&self) -> Vec<SummaryRow> {
        let mut cells: BTreeMap<Family, Vec<MetricsReport>> = BTreeMap::new();
        for s in &self.strata {
            for (family, e) in &s.ensembles {
                let reports = e
                    .trials
                    .iter()
                    .map(|t| t.projection.as_ref().map(|p| p.metrics).unwrap_or(t.validation));
                cells.entry(*family).or_default().extend(reports);
            }
        }
        cells
            .into_iter()
            .map(|(family, reports)| {
                let mean = |m: Metric| Summary::of(&reports.iter().map(|r| r.metric(m)).collect::<Vec<_>>()).map_or(f64::NAN, |s| s.mean);
                SummaryRow {
                    family,
                    rmse: mean(Metric::Rmse),
                    mae: mean(Metric::Mae),
                    mape: mean(Metric::Mape),
                    pi_coverage: mean(Metric::PiCoverage),
                    cells: reports.len(),
                }
            })
            .collect()
    }

    /// `Variable,Model,RMSE,MAE,MAPE,PI Cov.`
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("Variable,Model,RMSE,MAE,MAPE,PI Cov.\n");
        for r in self.summary() {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{:.6}\n",
                self.variable, r.family, r.rmse, r.mae, r.mape, r.pi_coverage
            ));
        }
        out
    }

    /// `stratum,model,stage,rmse_mean,rmse_sd,mae_mean,mape_mean,pi_coverage_mean,trials_ok,trials_failed`.
    pub fn strata_csv(&self) -> String {
        let mut out =
            String::from("stratum,model,stage,rmse_mean,rmse_sd,mae_mean,mape_mean,pi_coverage_mean,trials_ok,trials_failed\n");
        for s in &self.strata {
            for (family, e) in &s.ensembles {
                let stages = [("validation", Some(e.validation)), ("projection", e.projection)];
                for (stage, agg) in stages {
                    let Some(a) = agg else { continue };
                    out.push_str(&format!(
                        "\"{}\",{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{},{}\n",
                        s.label,
                        family,
                        stage,
                        a.rmse.mean,
                        a.rmse.sd,
                        a.mae.mean,
                        a.mape.mean,
                        a.pi_coverage.mean,
                        e.trials.len(),
                        e.failures.len()
                    ));
                }
            }
        }
        out
    }
}

fn label(s: &Stratum) -> String {
    if s.is_empty() {
        return "national".into();
    }
    s.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";")
}

/// An independent univariate pipeline per stratum. Strata whose series
/// cannot be built or split are skipped and listed in the census, as are
/// family cells whose every trial failed.
pub fn run_stratified(
    dataset: &StratifiedDataset,
    plan: &StratifiedPlan,
    opts: &TrialOptions,
) -> Result<StratifiedResult, TrialsError> {
    for d in &plan.dimensions {
        if !dataset.dimensions.contains(d) {
            return Err(TrialsError::Precondition(format!(
                "dataset has no dimension {d:?} (available: {:?})",
                dataset.dimensions
            )));
        }
    }
    if plan.configs.is_empty() {
        return Err(TrialsError::Precondition("no model configurations given".into()));
    }
    let mut strata = Vec::new();
    let mut census = Vec::new();
    for stratum in dataset.strata(&plan.dimensions) {
        let label = label(&stratum);
        let data = match to_series(dataset, Some(&stratum))
            .map_err(TrialsError::from)
            .and_then(|s| Ok(split(&s, &plan.spec)?))
        {
            Ok(d) => d,
            Err(e) => {
                census.push(StratumCensus {
                    label,
                    family: None,
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let mut ensembles = BTreeMap::new();
        for base in &plan.configs {
            let family = base.family();
            let config = match &plan.retune {
                None => Ok(*base),
                Some(grid) => retuned(family, grid, &data.tuning(), plan, opts),
            };
            let result = config.and_then(|c| run_trials(&c, &data, plan.n_trials, plan.base_seed, opts));
            match result {
                Ok(e) => {
                    ensembles.insert(family, e);
                }
                Err(e @ (TrialsError::Exhausted { .. } | TrialsError::GridExhausted { .. })) => {
                    census.push(StratumCensus {
                        label: label.clone(),
                        family: Some(family),
                        reason: e.to_string(),
                    });
                }
                Err(other) => return Err(other),
            }
        }
        strata.push(StratumResult {
            stratum,
            label,
            ensembles,
        });
    }
    let variable = if plan.dimensions.is_empty() {
        "National".to_string()
    } else {
        plan.dimensions.join("+")
    };
    Ok(StratifiedResult {
        variable,
        strata,
        census,
    })
}

fn retuned(
    family: Family,
    grid: &DlGrid,
    tuning: &crate::series::TuningSplit,
    plan: &StratifiedPlan,
    opts: &TrialOptions,
) -> Result<ModelConfig, TrialsError> {
    if family.is_neural() {
        Ok(grid_search_dl(family, grid, tuning, plan.retune_trials, plan.base_seed, opts)?.best)
    } else {
        grid_search_sarima(tuning)
            .map(|r| ModelConfig::Sarima { order: r.best })
            .map_err(|_| TrialsError::GridExhausted { tried: 729 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, Deaths, SyntheticSpec, WonderRecord};
    use crate::sarima::SarimaOrder;
    use crate::series::DatasetSplit;

    fn dataset(strata: &[(&str, u64)], gap_in: Option<&str>) -> StratifiedDataset {
        let mut records = Vec::new();
        for &(sex, seed) in strata {
            let mut spec = SyntheticSpec::national_like(108);
            spec.base_level = 2000.0;
            let s = generate_synthetic(&spec, seed).unwrap();
            for (i, ym) in s.months().enumerate() {
                if gap_in == Some(sex) && i == 30 {
                    continue;
                }
                records.push(WonderRecord {
                    year: ym.year,
                    month: ym.month,
                    stratum: [("Sex".to_string(), sex.to_string())].into_iter().collect(),
                    deaths: Deaths::Count(s.values()[i].round() as u64),
                });
            }
        }
        StratifiedDataset::new(records, vec!["Sex".into()], "fixture").unwrap()
    }

    fn plan(dimensions: Vec<String>) -> StratifiedPlan {
        StratifiedPlan {
            dimensions,
            configs: vec![ModelConfig::Sarima {
                order: SarimaOrder::new(1, 0, 0, 0, 1, 0),
            }],
            spec: SplitSpec::national_main(),
            n_trials: 2,
            base_seed: 42,
            retune: None,
            retune_trials: 1,
        }
    }

    #[test]
    fn two_strata_in_two_results_out() {
        let ds = dataset(&[("Female", 1), ("Male", 2)], None);
        let r = run_stratified(&ds, &plan(vec!["Sex".into()]), &TrialOptions::default()).unwrap();
        assert_eq!(r.strata.len(), 2);
        assert_eq!(r.variable, "Sex");
        assert!(r.census.is_empty());
        let rows = r.summary();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].cells, 4);
        let csv = r.summary_csv();
        assert!(csv.starts_with("Variable,Model,RMSE,MAE,MAPE,PI Cov.\nSex,sarima,"));
        assert!(r.strata_csv().contains("\"Sex=Female\",sarima,projection"));
    }

    #[test]
    fn gappy_stratum_is_censused() {
        let ds = dataset(&[("Female", 1), ("Male", 2)], Some("Male"));
        let r = run_stratified(&ds, &plan(vec!["Sex".into()]), &TrialOptions::default()).unwrap();
        assert_eq!(r.strata.len(), 1);
        assert_eq!(r.census.len(), 1);
        assert_eq!(r.census[0].label, "Sex=Male");
        assert!(r.census[0].reason.contains("missing"));
    }

    #[test]
    fn no_dimensions_is_the_national_pipeline() {
        let ds = dataset(&[("Female", 1), ("Male", 2)], None);
        let p = plan(vec![]);
        let r = run_stratified(&ds, &p, &TrialOptions::default()).unwrap();
        assert_eq!(r.strata.len(), 1);
        let national = to_series(&ds, None).unwrap();
        let data: DatasetSplit = split(&national, &p.spec).unwrap();
        let direct = run_trials(&p.configs[0], &data, 2, 42, &TrialOptions::default()).unwrap();
        assert_eq!(r.strata[0].ensembles[&Family::Sarima], direct);
        assert_eq!(r.variable, "National");
    }

    #[test]
    fn unknown_dimension_is_rejected() {
        let ds = dataset(&[("Female", 1)], None);
        assert!(run_stratified(&ds, &plan(vec!["State".into()]), &TrialOptions::default()).is_err());
    }
}
