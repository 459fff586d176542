use serde::{Deserialize, Serialize};

use super::{TrialEnsemble, TrialsError};
use crate::evalkit::{horizon_slices, Metric};
use crate::forecasters::Family;
use crate::series::MonthlySeries;

/// Spread of one metric across trials at a fixed horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizonStat {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
}

impl HorizonStat {
    fn of(xs: &[f64]) -> Self {
        let s = super::Summary::of(xs).expect("ensembles hold at least one trial");
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 {
            sorted[n / 2]
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
        };
        Self {
            mean: s.mean,
            sd: s.sd,
            median,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonRow {
    pub family: Family,
    /// Months from the projection start.
    pub months: usize,
    /// Calendar span covered, e.g. `2020-01..2021-12`.
    pub period: String,
    pub rmse: HorizonStat,
    pub mae: HorizonStat,
    pub mape: HorizonStat,
}

/// One row per horizon: metrics over the first `k` projected months,
/// summarised across the ensemble's trials.
pub fn horizon_table(
    ensemble: &TrialEnsemble,
    observed: &MonthlySeries,
    horizons: &[usize],
) -> Result<Vec<HorizonRow>, TrialsError> {
    let mut per_trial = Vec::with_capacity(ensemble.trials.len());
    for t in &ensemble.trials {
        let p = t
            .projection
            .as_ref()
            .ok_or_else(|| TrialsError::Precondition("ensemble has no projections".into()))?;
        if p.result.start != observed.start() {
            return Err(TrialsError::Precondition(format!(
                "projection starts {}, observed series starts {}",
                p.result.start,
                observed.start()
            )));
        }
        per_trial.push(horizon_slices(observed.values(), &p.result, horizons)?);
    }
    Ok(horizons
        .iter()
        .map(|k| {
            let col = |m: Metric| HorizonStat::of(&per_trial.iter().map(|s| s[k].metric(m)).collect::<Vec<_>>());
            HorizonRow {
                family: ensemble.config.family(),
                months: *k,
                period: format!("{}..{}", observed.start(), observed.month_at(k - 1)),
                rmse: col(Metric::Rmse),
                mae: col(Metric::Mae),
                mape: col(Metric::Mape),
            }
        })
        .collect())
}

/// `model,period,months,rmse_mean,rmse_sd,rmse_median,mae_mean,mae_sd,mae_median,mape_mean,mape_sd,mape_median`.
pub fn horizons_csv(rows: &[HorizonRow]) -> String {
    let mut out = String::from(
        "model,period,months,rmse_mean,rmse_sd,rmse_median,mae_mean,mae_sd,mae_median,mape_mean,mape_sd,mape_median\n",
    );
    for r in rows {
        out.push_str(&format!("{},{},{}", r.family, r.period, r.months));
        for s in [r.rmse, r.mae, r.mape] {
            out.push_str(&format!(",{:.6},{:.6},{:.6}", s.mean, s.sd, s.median));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecasters::ModelConfig;
    use crate::ingest::{generate_synthetic, SyntheticSpec};
    use crate::sarima::SarimaOrder;
    use crate::series::{split, SplitSpec};
    use crate::trials::{run_trials, TrialOptions};

    #[test]
    fn median_of_even_and_odd_samples() {
        assert_eq!(HorizonStat::of(&[3.0, 1.0, 2.0]).median, 2.0);
        assert_eq!(HorizonStat::of(&[4.0, 1.0, 3.0, 2.0]).median, 2.5);
    }

    #[test]
    fn four_rows_for_a_48_month_projection() {
        let s = generate_synthetic(&SyntheticSpec::national_like(108), 3).unwrap();
        let data = split(&s, &SplitSpec::national_main()).unwrap();
        let config = ModelConfig::Sarima {
            order: SarimaOrder::new(1, 0, 0, 0, 1, 0),
        };
        let e = run_trials(&config, &data, 2, 42, &TrialOptions::default()).unwrap();
        let obs = data.projection.as_ref().unwrap();
        let rows = horizon_table(&e, obs, &crate::evalkit::STANDARD_HORIZONS).unwrap();
        assert_eq!(rows.iter().map(|r| r.months).collect::<Vec<_>>(), vec![12, 24, 36, 48]);
        let full = &e.trials[0].projection.as_ref().unwrap().metrics;
        assert!((rows[3].rmse.mean - full.rmse).abs() < 1e-9);
        assert_eq!(rows[0].rmse.sd, 0.0);
        assert_eq!(rows[1].period, "2020-01..2021-12");
        let csv = horizons_csv(&rows);
        assert_eq!(csv.lines().count(), 5);
        assert!(horizon_table(&e, obs, &[60]).is_err());
    }
}
