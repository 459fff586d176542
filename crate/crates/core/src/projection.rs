use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::YearMonth;

/// Two-sided standard normal quantile for 95% intervals.
pub const Z_975: f64 = 1.959964;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProjectionError {
    #[error("points, lower and upper must have equal nonzero length ({points}, {lower}, {upper})")]
    Length { points: usize, lower: usize, upper: usize },
    #[error("interval at step {step} violates lower <= point <= upper or is non-finite")]
    Bounds { step: usize },
}

/// A counterfactual path with symmetric prediction intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub start: YearMonth,
    pub points: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub level: f64,
}

impl ProjectionResult {
    pub fn new(
        start: YearMonth,
        points: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        level: f64,
    ) -> Result<Self, ProjectionError> {
        if points.is_empty() || points.len() != lower.len() || points.len() != upper.len() {
            return Err(ProjectionError::Length {
                points: points.len(),
                lower: lower.len(),
                upper: upper.len(),
            });
        }
        for (step, ((p, l), u)) in points.iter().zip(&lower).zip(&upper).enumerate() {
            if !(p.is_finite() && l.is_finite() && u.is_finite() && l <= p && p <= u) {
                return Err(ProjectionError::Bounds { step });
            }
        }
        Ok(Self {
            start,
            points,
            lower,
            upper,
            level,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn month_at(&self, i: usize) -> YearMonth {
        self.start.add_months(i as i64)
    }

    /// Floors points and bounds at zero; death counts are nonnegative.
    pub fn floored(&self) -> Self {
        let f = |v: &Vec<f64>| v.iter().map(|x| x.max(0.0)).collect();
        Self {
            start: self.start,
            points: f(&self.points),
            lower: f(&self.lower),
            upper: f(&self.upper),
            level: self.level,
        }
    }

    /// First `k` steps.
    pub fn truncated(&self, k: usize) -> Self {
        let k = k.min(self.len());
        Self {
            start: self.start,
            points: self.points[..k].to_vec(),
            lower: self.lower[..k].to_vec(),
            upper: self.upper[..k].to_vec(),
            level: self.level,
        }
    }

    /// `year,month,point,lower,upper` CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("year,month,point,lower,upper\n");
        for i in 0..self.len() {
            let ym = self.month_at(i);
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                ym.year, ym.month, self.points[i], self.lower[i], self.upper[i]
            ));
        }
        out
    }
}
