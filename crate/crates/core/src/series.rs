//! Monthly series, temporal splits, scaling, sliding windows and differencing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::YearMonth;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("series must contain at least one value")]
    Empty,
    #[error("series value at index {index} is invalid ({value}); counts must be finite and nonnegative")]
    InvalidValue { index: usize, value: f64 },
    #[error("split range {start}..{end} lies outside series coverage {cover_start}..{cover_end}")]
    Range {
        start: YearMonth,
        end: YearMonth,
        cover_start: YearMonth,
        cover_end: YearMonth,
    },
    #[error("invalid split spec: {0}")]
    Spec(String),
    #[error("insufficient data: need more than {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate scale: training series is constant at {0}")]
    DegenerateScale(f64),
    #[error("differencing orders must lie in 0..=2 (got d={d}, D={seasonal_d})")]
    Order { d: usize, seasonal_d: usize },
    #[error("segments are not contiguous: {left_end} is not followed by {right_start}")]
    NotContiguous {
        left_end: YearMonth,
        right_start: YearMonth,
    },
}

/// Ordered monthly death counts anchored at a calendar month.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlySeries {
    start: YearMonth,
    values: Vec<f64>,
}

impl MonthlySeries {
    pub fn new(start: YearMonth, values: Vec<f64>) -> Result<Self, SeriesError> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(SeriesError::InvalidValue { index, value });
        }
        Ok(Self { start, values })
    }

    pub fn start(&self) -> YearMonth {
        self.start
    }

    /// Last covered month (inclusive).
    pub fn end(&self) -> YearMonth {
        self.start.add_months(self.values.len() as i64 - 1)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn month_at(&self, index: usize) -> YearMonth {
        self.start.add_months(index as i64)
    }

    pub fn months(&self) -> impl Iterator<Item = YearMonth> + '_ {
        (0..self.values.len()).map(|i| self.month_at(i))
    }

    /// Sub-series covering `start..=end`.
    pub fn slice(&self, start: YearMonth, end: YearMonth) -> Result<Self, SeriesError> {
        let from = self.start.months_until(start);
        let to = self.start.months_until(end);
        if from < 0 || to >= self.values.len() as i64 || to < from {
            return Err(SeriesError::Range {
                start,
                end,
                cover_start: self.start,
                cover_end: self.end(),
            });
        }
        Ok(Self {
            start,
            values: self.values[from as usize..=to as usize].to_vec(),
        })
    }

    /// Appends `next`, which must begin the month after `self` ends.
    pub fn concat(&self, next: &MonthlySeries) -> Result<Self, SeriesError> {
        if self.end().succ() != next.start {
            return Err(SeriesError::NotContiguous {
                left_end: self.end(),
                right_start: next.start,
            });
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&next.values);
        Ok(Self {
            start: self.start,
            values,
        })
    }

    /// The trailing `n` values (or the whole series when shorter).
    pub fn tail(&self, n: usize) -> &[f64] {
        &self.values[self.values.len().saturating_sub(n)..]
    }
}

/// Inclusive calendar range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Period {
    pub start: YearMonth,
    pub end: YearMonth,
}

impl Period {
    pub fn new(start: YearMonth, end: YearMonth) -> Self {
        Self { start, end }
    }

    pub fn months(&self) -> i64 {
        self.start.months_until(self.end) + 1
    }
}

/// Train / validation / projection partition of the calendar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Period,
    pub validation: Period,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub projection: Option<Period>,
}

impl SplitSpec {
    /// 2015-2018 train, 2019 validation, 2020-2023 projection.
    pub fn national_main() -> Self {
        Self::yearly(2015, 2018, 2019, 2020, 2023)
    }

    /// 2010-2017 train, 2018 validation, 2019-2023 projection.
    pub fn alternative() -> Self {
        Self::yearly(2010, 2017, 2018, 2019, 2023)
    }

    fn yearly(t0: i32, t1: i32, v: i32, p0: i32, p1: i32) -> Self {
        let ym = |y, m| YearMonth::new(y, m).expect("valid month");
        Self {
            train: Period::new(ym(t0, 1), ym(t1, 12)),
            validation: Period::new(ym(v, 1), ym(v, 12)),
            projection: Some(Period::new(ym(p0, 1), ym(p1, 12))),
        }
    }

    pub fn validate(&self) -> Result<(), SeriesError> {
        let spec_err = |m: String| Err(SeriesError::Spec(m));
        if self.train.months() < 24 {
            return spec_err(format!("train segment has {} months, need at least 24", self.train.months()));
        }
        if self.validation.months() < 12 {
            return spec_err(format!(
                "validation segment has {} months, need at least 12",
                self.validation.months()
            ));
        }
        if self.train.end.succ() != self.validation.start {
            return spec_err(format!(
                "validation must start the month after train ends ({} then {})",
                self.train.end, self.validation.start
            ));
        }
        if let Some(p) = &self.projection {
            if p.months() < 12 {
                return spec_err(format!("projection segment has {} months, need at least 12", p.months()));
            }
            if self.validation.end.succ() != p.start {
                return spec_err(format!(
                    "projection must start the month after validation ends ({} then {})",
                    self.validation.end, p.start
                ));
            }
        }
        Ok(())
    }

    /// The same spec with the projection segment removed.
    pub fn masked(&self) -> SplitSpec {
        SplitSpec {
            projection: None,
            ..*self
        }
    }
}

/// The segments a model is allowed to see during tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningSplit {
    pub train: MonthlySeries,
    pub validation: MonthlySeries,
}

impl TuningSplit {
    pub fn combined(&self) -> MonthlySeries {
        self.train
            .concat(&self.validation)
            .expect("split segments are contiguous")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: MonthlySeries,
    pub validation: MonthlySeries,
    pub projection: Option<MonthlySeries>,
}

impl DatasetSplit {
    /// Drops the projection segment; tuning code only ever receives this view.
    pub fn tuning(&self) -> TuningSplit {
        TuningSplit {
            train: self.train.clone(),
            validation: self.validation.clone(),
        }
    }

    pub fn from_tuning(t: TuningSplit) -> Self {
        Self {
            train: t.train,
            validation: t.validation,
            projection: None,
        }
    }

    /// Train and validation joined, the window used for final retraining.
    pub fn combined_train(&self) -> MonthlySeries {
        self.train
            .concat(&self.validation)
            .expect("split segments are contiguous")
    }
}

pub fn split(series: &MonthlySeries, spec: &SplitSpec) -> Result<DatasetSplit, SeriesError> {
    spec.validate()?;
    let train = series.slice(spec.train.start, spec.train.end)?;
    let validation = series.slice(spec.validation.start, spec.validation.end)?;
    let projection = spec
        .projection
        .map(|p| series.slice(p.start, p.end))
        .transpose()?;
    Ok(DatasetSplit {
        train,
        validation,
        projection,
    })
}

/// Min-max scaler fitted on a training segment. No clipping is applied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: f64,
    pub max: f64,
}

impl Scaler {
    pub fn fit(train: &[f64]) -> Result<Self, SeriesError> {
        if train.len() < 2 {
            return Err(SeriesError::InsufficientData {
                needed: 1,
                got: train.len(),
            });
        }
        let (min, max) = min_max(train);
        if max <= min {
            return Err(SeriesError::DegenerateScale(min));
        }
        Ok(Self { min, max })
    }

    /// Like [`Scaler::fit`], but a constant series `c` is mapped with the
    /// range `[0, c]` (or `[0, 1]` when `c == 0`) instead of failing.
    pub fn fit_lenient(train: &[f64]) -> Result<Self, SeriesError> {
        match Self::fit(train) {
            Err(SeriesError::DegenerateScale(c)) => Ok(if c > 0.0 {
                Self { min: 0.0, max: c }
            } else {
                Self { min: 0.0, max: 1.0 }
            }),
            other => other,
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        (x - self.min) / (self.max - self.min)
    }

    pub fn invert(&self, x: f64) -> f64 {
        x * (self.max - self.min) + self.min
    }

    pub fn apply_all(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply(x)).collect()
    }
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Input/target pairs for one-step-ahead training.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSet {
    pub lookback: usize,
    pub pairs: Vec<(Vec<f64>, f64)>,
}

impl WindowSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn make_windows(values: &[f64], lookback: usize) -> Result<WindowSet, SeriesError> {
    if lookback == 0 || values.len() <= lookback {
        return Err(SeriesError::InsufficientData {
            needed: lookback.max(1),
            got: values.len(),
        });
    }
    let pairs = values
        .windows(lookback + 1)
        .map(|w| (w[..lookback].to_vec(), w[lookback]))
        .collect();
    Ok(WindowSet { lookback, pairs })
}

/// Initial values retained by [`difference`] so that [`undifference`] is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffState {
    /// One entry per applied differencing pass, in application order:
    /// the lag and the first `lag` values of that pass's input.
    stages: Vec<(usize, Vec<f64>)>,
}

/// Applies `(1-B)^d (1-B^s)^D`. The output has `len - d - D*s` values.
pub fn difference(
    x: &[f64],
    d: usize,
    seasonal_d: usize,
    period: usize,
) -> Result<(Vec<f64>, DiffState), SeriesError> {
    if d > 2 || seasonal_d > 2 {
        return Err(SeriesError::Order { d, seasonal_d });
    }
    let lost = d + seasonal_d * period;
    if x.len() <= lost {
        return Err(SeriesError::InsufficientData {
            needed: lost,
            got: x.len(),
        });
    }
    let lags = std::iter::repeat_n(period, seasonal_d).chain(std::iter::repeat_n(1, d));
    let mut cur = x.to_vec();
    let mut stages = Vec::with_capacity(d + seasonal_d);
    for lag in lags {
        let next: Vec<f64> = (lag..cur.len()).map(|t| cur[t] - cur[t - lag]).collect();
        stages.push((lag, cur[..lag].to_vec()));
        cur = next;
    }
    Ok((cur, DiffState { stages }))
}

pub fn undifference(diffed: &[f64], state: &DiffState) -> Vec<f64> {
    let mut cur = diffed.to_vec();
    for (lag, head) in state.stages.iter().rev() {
        let mut out = head.clone();
        out.reserve(cur.len());
        debug_assert_eq!(head.len(), *lag);
        for (i, w) in cur.iter().enumerate() {
            // out[i] sits exactly `lag` positions behind the value being restored
            let prev = out[i];
            out.push(w + prev);
        }
        cur = out;
    }
    cur
}
