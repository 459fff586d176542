//! Point and interval metrics, conformal radii and excess-death accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::YearMonth;
use crate::projection::ProjectionResult;
use crate::series::MonthlySeries;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("length mismatch: {0} observations vs {1} predictions")]
    Shape(usize, usize),
    #[error("metrics need at least one observation")]
    Empty,
    #[error("MAPE is undefined: observation {index} is zero")]
    ZeroObservation { index: usize },
    #[error("conformal radius needs at least 2 residuals, got {0}")]
    InsufficientResiduals(usize),
    #[error("residuals must be finite and nonnegative")]
    InvalidResidual,
    #[error("alpha must lie in (0, 1), got {0}")]
    Alpha(f64),
    #[error("calendars are misaligned: observations start {observed}, projection starts {projected}")]
    Alignment {
        observed: YearMonth,
        projected: YearMonth,
    },
    #[error("projection covers {available} months, horizon {requested} requested")]
    Range { requested: usize, available: usize },
}

fn check(obs: &[f64], pred: &[f64]) -> Result<(), EvalError> {
    if obs.len() != pred.len() {
        return Err(EvalError::Shape(obs.len(), pred.len()));
    }
    if obs.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(())
}

pub fn rmse(obs: &[f64], pred: &[f64]) -> Result<f64, EvalError> {
    check(obs, pred)?;
    let mse = obs.iter().zip(pred).map(|(o, p)| (o - p).powi(2)).sum::<f64>() / obs.len() as f64;
    Ok(mse.sqrt())
}

pub fn mae(obs: &[f64], pred: &[f64]) -> Result<f64, EvalError> {
    check(obs, pred)?;
    Ok(obs.iter().zip(pred).map(|(o, p)| (o - p).abs()).sum::<f64>() / obs.len() as f64)
}

/// Mean absolute percentage error, in percent.
pub fn mape(obs: &[f64], pred: &[f64]) -> Result<f64, EvalError> {
    check(obs, pred)?;
    if let Some(index) = obs.iter().position(|&o| o == 0.0) {
        return Err(EvalError::ZeroObservation { index });
    }
    let s: f64 = obs.iter().zip(pred).map(|(o, p)| ((o - p) / o).abs()).sum();
    Ok(100.0 * s / obs.len() as f64)
}

/// Empirical `1 - alpha` quantile of the residuals, linearly interpolated
/// between order statistics at position `(1 - alpha)(n - 1)`.
pub fn conformal_radius(residuals: &[f64], alpha: f64) -> Result<f64, EvalError> {
    if residuals.len() < 2 {
        return Err(EvalError::InsufficientResiduals(residuals.len()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EvalError::Alpha(alpha));
    }
    if residuals.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(EvalError::InvalidResidual);
    }
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (1.0 - alpha) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    let q = match sorted.get(lo + 1) {
        Some(next) if frac > 0.0 => sorted[lo] + frac * (next - sorted[lo]),
        _ => sorted[lo],
    };
    Ok(q)
}

/// `[max(0, point - q), point + q]` around each point.
pub fn apply_intervals(start: YearMonth, points: &[f64], q: f64) -> ProjectionResult {
    let q = q.max(0.0);
    let lower = points.iter().map(|p| (p - q).max(0.0).min(*p)).collect();
    let upper = points.iter().map(|p| p + q).collect();
    ProjectionResult::new(start, points.to_vec(), lower, upper, 0.95)
        .expect("conformal bounds bracket the points")
}

/// Percentage of observations inside `[lower, upper]`, bounds inclusive.
pub fn pi_coverage(obs: &[f64], result: &ProjectionResult) -> Result<f64, EvalError> {
    check(obs, &result.points)?;
    let inside = obs
        .iter()
        .zip(result.lower.iter().zip(&result.upper))
        .filter(|(o, (l, u))| *l <= *o && *o <= *u)
        .count();
    Ok(100.0 * inside as f64 / obs.len() as f64)
}

pub fn pi_width(result: &ProjectionResult) -> f64 {
    result
        .upper
        .iter()
        .zip(&result.lower)
        .map(|(u, l)| u - l)
        .sum::<f64>()
        / result.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rmse: f64,
    pub mae: f64,
    /// Percent.
    pub mape: f64,
    /// Percent.
    pub pi_coverage: f64,
    pub pi_width: f64,
    pub n: usize,
}

impl MetricsReport {
    pub fn compute(obs: &[f64], result: &ProjectionResult) -> Result<Self, EvalError> {
        Ok(Self {
            rmse: rmse(obs, &result.points)?,
            mae: mae(obs, &result.points)?,
            mape: mape(obs, &result.points)?,
            pi_coverage: pi_coverage(obs, result)?,
            pi_width: pi_width(result),
            n: obs.len(),
        })
    }

    pub fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::Rmse => self.rmse,
            Metric::Mae => self.mae,
            Metric::Mape => self.mape,
            Metric::PiCoverage => self.pi_coverage,
            Metric::PiWidth => self.pi_width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rmse,
    Mae,
    Mape,
    PiCoverage,
    PiWidth,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Rmse, Metric::Mae, Metric::Mape, Metric::PiCoverage, Metric::PiWidth];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Mae => "mae",
            Metric::Mape => "mape",
            Metric::PiCoverage => "pi_coverage",
            Metric::PiWidth => "pi_width",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessMonth {
    pub year: i32,
    pub month: u32,
    pub observed: f64,
    pub counterfactual: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessReport {
    pub monthly: Vec<ExcessMonth>,
    /// Sum of monthly deltas, accumulated in calendar order.
    pub cumulative: f64,
    /// Fraction of months whose observation falls outside the interval.
    pub share_outside_pi: f64,
}

impl ExcessReport {
    /// `year,month,observed,counterfactual,delta`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("year,month,observed,counterfactual,delta\n");
        for m in &self.monthly {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                m.year, m.month, m.observed, m.counterfactual, m.delta
            ));
        }
        out
    }
}

/// Observed minus counterfactual per month over the overlap of `obs` and
/// the projection, which must start in the same month.
pub fn excess(obs: &MonthlySeries, result: &ProjectionResult) -> Result<ExcessReport, EvalError> {
    if obs.start() != result.start {
        return Err(EvalError::Alignment {
            observed: obs.start(),
            projected: result.start,
        });
    }
    if obs.len() != result.len() {
        return Err(EvalError::Shape(obs.len(), result.len()));
    }
    let mut cumulative = 0.0;
    let mut outside = 0usize;
    let monthly = (0..obs.len())
        .map(|i| {
            let ym = obs.month_at(i);
            let observed = obs.values()[i];
            let counterfactual = result.points[i];
            let delta = observed - counterfactual;
            cumulative += delta;
            if observed < result.lower[i] || observed > result.upper[i] {
                outside += 1;
            }
            ExcessMonth {
                year: ym.year,
                month: ym.month,
                observed,
                counterfactual,
                delta,
            }
        })
        .collect();
    Ok(ExcessReport {
        monthly,
        cumulative,
        share_outside_pi: outside as f64 / obs.len() as f64,
    })
}

pub const STANDARD_HORIZONS: [usize; 4] = [12, 24, 36, 48];

/// Metrics over the first `k` months for each requested `k`.
pub fn horizon_slices(
    obs: &[f64],
    result: &ProjectionResult,
    horizons: &[usize],
) -> Result<BTreeMap<usize, MetricsReport>, EvalError> {
    let max = horizons.iter().copied().max().unwrap_or(0);
    if max > result.len() || max > obs.len() {
        return Err(EvalError::Range {
            requested: max,
            available: result.len().min(obs.len()),
        });
    }
    horizons
        .iter()
        .map(|&k| Ok((k, MetricsReport::compute(&obs[..k], &result.truncated(k))?)))
        .collect()
}
