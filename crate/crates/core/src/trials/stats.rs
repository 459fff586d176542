use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::evalkit::{Metric, MetricsReport};

/// Normal quantile used for trial-mean confidence intervals.
pub const CI_Z: f64 = 1.96;

/// Metrics checked by the convergence rule. Coverage and width are
/// recorded but too volatile across trials to gate on.
pub const CONVERGENCE_METRICS: [Metric; 3] = [Metric::Rmse, Metric::Mae, Metric::Mape];

/// Largest CI width, relative to the mean, still counted as converged.
pub const CI_REL_TOL: f64 = 0.05;
/// Largest relative change of the mean between checkpoints.
pub const MEAN_REL_TOL: f64 = 0.01;

/// Mean and sample standard deviation (`n - 1` denominator, 0 for a single
/// value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n == 1 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Some(Self { mean, sd, n })
    }

    /// `1.96 * sd / sqrt(n)`.
    pub fn ci_width(&self) -> f64 {
        CI_Z * self.sd / (self.n as f64).sqrt()
    }
}

/// Per-metric summaries over a set of trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub rmse: Summary,
    pub mae: Summary,
    pub mape: Summary,
    pub pi_coverage: Summary,
    pub pi_width: Summary,
}

impl Aggregate {
    pub fn from_reports<'a>(reports: impl IntoIterator<Item = &'a MetricsReport>) -> Option<Self> {
        let reports: Vec<&MetricsReport> = reports.into_iter().collect();
        let col = |m: Metric| Summary::of(&reports.iter().map(|r| r.metric(m)).collect::<Vec<_>>());
        Some(Self {
            rmse: col(Metric::Rmse)?,
            mae: col(Metric::Mae)?,
            mape: col(Metric::Mape)?,
            pi_coverage: col(Metric::PiCoverage)?,
            pi_width: col(Metric::PiWidth)?,
        })
    }

    pub fn get(&self, m: Metric) -> Summary {
        match m {
            Metric::Rmse => self.rmse,
            Metric::Mae => self.mae,
            Metric::Mape => self.mape,
            Metric::PiCoverage => self.pi_coverage,
            Metric::PiWidth => self.pi_width,
        }
    }

    pub fn n(&self) -> usize {
        self.rmse.n
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveStat {
    pub mean: f64,
    pub sd: f64,
    pub ci_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePoint {
    /// Trials attempted (a prefix of the seed schedule).
    pub n: usize,
    /// Successful trials within the prefix.
    pub n_ok: usize,
    pub metrics: BTreeMap<Metric, CurveStat>,
    /// Both convergence rules hold at this checkpoint.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub points: Vec<ConvergencePoint>,
    /// The rule holds at the final checkpoint.
    pub converged: bool,
    /// First checkpoint at which the rule held, if any.
    pub first_converged: Option<usize>,
}

impl ConvergenceCurve {
    /// Builds the curve from per-trial outcomes in seed order; `None` marks
    /// a failed trial. Each checkpoint aggregates the first `n` entries.
    pub fn from_outcomes(outcomes: &[Option<MetricsReport>], counts: &[usize]) -> Result<Self, String> {
        check_counts(counts)?;
        let last = *counts.last().expect("nonempty");
        if last > outcomes.len() {
            return Err(format!("count {last} exceeds the {} trials available", outcomes.len()));
        }
        let mut points: Vec<ConvergencePoint> = Vec::with_capacity(counts.len());
        let mut prev: Option<Aggregate> = None;
        for &n in counts {
            let agg = Aggregate::from_reports(outcomes[..n].iter().flatten())
                .ok_or_else(|| format!("no successful trial among the first {n}"))?;
            let metrics = Metric::ALL
                .into_iter()
                .map(|m| {
                    let s = agg.get(m);
                    (
                        m,
                        CurveStat {
                            mean: s.mean,
                            sd: s.sd,
                            ci_width: s.ci_width(),
                        },
                    )
                })
                .collect();
            points.push(ConvergencePoint {
                n,
                n_ok: agg.n(),
                metrics,
                converged: rule_holds(prev.as_ref(), &agg),
            });
            prev = Some(agg);
        }
        let converged = points.last().is_some_and(|p| p.converged);
        let first_converged = points.iter().find(|p| p.converged).map(|p| p.n);
        Ok(Self {
            points,
            converged,
            first_converged,
        })
    }

    /// `n,n_ok,metric,mean,sd,ci_width,converged`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,n_ok,metric,mean,sd,ci_width,converged\n");
        for p in &self.points {
            for (m, s) in &p.metrics {
                out.push_str(&format!(
                    "{},{},{},{:.6},{:.6},{:.6},{}\n",
                    p.n,
                    p.n_ok,
                    m.name(),
                    s.mean,
                    s.sd,
                    s.ci_width,
                    p.converged
                ));
            }
        }
        out
    }
}

pub(crate) fn check_counts(counts: &[usize]) -> Result<(), String> {
    if counts.is_empty() || counts[0] == 0 {
        return Err("trial counts must be nonempty and positive".into());
    }
    if counts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(format!("trial counts must be strictly ascending, got {counts:?}"));
    }
    Ok(())
}

/// CI narrower than 5% of the mean, and the mean moved by less than 1%
/// since the previous checkpoint (vacuous at the first one).
fn rule_holds(prev: Option<&Aggregate>, cur: &Aggregate) -> bool {
    CONVERGENCE_METRICS.iter().all(|&m| {
        let s = cur.get(m);
        let narrow = s.ci_width() == 0.0 || s.ci_width() < CI_REL_TOL * s.mean.abs();
        let stable = match prev {
            None => true,
            Some(p) => {
                let before = p.get(m).mean;
                s.mean == before || (s.mean - before).abs() < MEAN_REL_TOL * before.abs()
            }
        };
        narrow && stable
    })
}
