//! CDC WONDER tab-delimited exports, suppression handling, aggregation to
//! monthly series and deterministic synthetic fixtures.
//!
//! The synthetic generator draws from ChaCha8 (`rand_chacha::ChaCha8Rng`,
//! seeded through `SeedableRng::seed_from_u64`) and turns the stream into
//! Gaussian noise with `rand_distr::StandardNormal`. Both algorithms are
//! fixed and platform independent, so a `(spec, seed)` pair always yields
//! the same bits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::YearMonth;
use crate::rng::seeded;
use crate::series::MonthlySeries;

pub type Stratum = BTreeMap<String, String>;

/// Value substituted by [`SuppressionMode::Midpoint`]: suppressed cells hold 1-9 deaths.
pub const SUPPRESSED_MIDPOINT: u64 = 5;

pub const SUPPRESSED_TOKEN: &str = "Suppressed";

const MONTH_CODE: &str = "Month Code";
const DEATHS: &str = "Deaths";
const NOTES: &str = "Notes";
const MONTH: &str = "Month";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("duplicate record for {month} {stratum}")]
    Duplicate { month: YearMonth, stratum: String },
    #[error("{} suppressed cell(s) under `fail` policy: {}", cells.len(), cells.join(", "))]
    Suppressed { cells: Vec<String> },
    #[error("month coverage has a gap: {missing} is missing")]
    Gap { missing: YearMonth },
    #[error("no records match the selection")]
    Empty,
    #[error("synthetic series needs at least 24 months, got {0}")]
    TooShort(usize),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Deaths {
    Count(u64),
    Suppressed,
}

impl fmt::Display for Deaths {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Deaths::Count(n) => write!(f, "{n}"),
            Deaths::Suppressed => f.write_str(SUPPRESSED_TOKEN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WonderRecord {
    pub year: i32,
    pub month: u32,
    /// Dimension name to category label; empty for national totals.
    pub stratum: Stratum,
    pub deaths: Deaths,
}

impl WonderRecord {
    pub fn year_month(&self) -> YearMonth {
        YearMonth::new(self.year, self.month).expect("record month validated at parse time")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratifiedDataset {
    pub records: Vec<WonderRecord>,
    pub dimensions: Vec<String>,
    pub provenance: String,
}

fn stratum_label(s: &Stratum) -> String {
    if s.is_empty() {
        return "{national}".into();
    }
    let parts: Vec<String> = s.iter().map(|(k, v)| format!("{k}={v}")).collect();
    format!("{{{}}}", parts.join(", "))
}

impl StratifiedDataset {
    pub fn new(
        records: Vec<WonderRecord>,
        dimensions: Vec<String>,
        provenance: impl Into<String>,
    ) -> Result<Self, IngestError> {
        let expected: BTreeSet<&String> = dimensions.iter().collect();
        let mut seen = BTreeSet::new();
        for r in &records {
            let keys: BTreeSet<&String> = r.stratum.keys().collect();
            if keys != expected {
                return Err(IngestError::Schema(format!(
                    "record {} has stratum keys {:?}, expected {:?}",
                    r.year_month(),
                    keys,
                    expected
                )));
            }
            if !seen.insert((r.year, r.month, r.stratum.clone())) {
                return Err(IngestError::Duplicate {
                    month: r.year_month(),
                    stratum: stratum_label(&r.stratum),
                });
            }
        }
        Ok(Self {
            records,
            dimensions,
            provenance: provenance.into(),
        })
    }

    pub fn suppressed_cells(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.deaths == Deaths::Suppressed)
            .count()
    }

    /// Distinct category combinations over `dims`, sorted.
    pub fn strata(&self, dims: &[String]) -> Vec<Stratum> {
        let set: BTreeSet<Stratum> = self
            .records
            .iter()
            .map(|r| {
                dims.iter()
                    .filter_map(|d| r.stratum.get(d).map(|v| (d.clone(), v.clone())))
                    .collect()
            })
            .collect();
        set.into_iter().collect()
    }

    /// Serializes back into the WONDER export layout.
    pub fn to_export(&self) -> String {
        let mut out = String::new();
        let mut header = vec![NOTES.to_string(), MONTH.to_string(), MONTH_CODE.to_string()];
        header.extend(self.dimensions.iter().cloned());
        header.push(DEATHS.to_string());
        out.push_str(&header.iter().map(|h| format!("\"{h}\"")).collect::<Vec<_>>().join("\t"));
        out.push('\n');
        for r in &self.records {
            let mut row = vec![
                String::new(),
                format!("\"{}\"", month_label(r.year, r.month)),
                format!("\"{:04}/{:02}\"", r.year, r.month),
            ];
            for d in &self.dimensions {
                row.push(format!("\"{}\"", r.stratum[d]));
            }
            row.push(r.deaths.to_string());
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
        out
    }
}

fn month_label(year: i32, month: u32) -> String {
    const NAMES: [&str; 12] = [
        "Jan.", "Feb.", "Mar.", "Apr.", "May", "Jun.", "Jul.", "Aug.", "Sep.", "Oct.", "Nov.", "Dec.",
    ];
    format!("{}, {year}", NAMES[month as usize - 1])
}

fn unquote(cell: &str) -> &str {
    let c = cell.trim();
    c.strip_prefix('"')
        .and_then(|c| c.strip_suffix('"'))
        .unwrap_or(c)
}

fn find_column(header: &[String], name: &str) -> Option<usize> {
    let lname = name.to_lowercase();
    header
        .iter()
        .position(|h| h.to_lowercase() == lname)
        .or_else(|| header.iter().position(|h| h.to_lowercase().contains(&lname)))
}

/// Parses a WONDER tab-delimited export.
///
/// `dimensions` names the stratification columns to read (for example
/// `["sex"]`); a column matches when its header equals the name
/// case-insensitively, or failing that, contains it. Rows with a nonempty
/// `Notes` cell are totals or footnotes and are skipped.
pub fn parse_wonder_export(
    text: &str,
    dimensions: &[String],
) -> Result<StratifiedDataset, IngestError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| IngestError::Schema("export is empty".into()))?;
    let header: Vec<String> = header_line.split('\t').map(|c| unquote(c).to_string()).collect();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| IngestError::Schema(format!("missing required column `{name}`")))
    };
    let month_col = col(MONTH_CODE)?;
    let deaths_col = col(DEATHS)?;
    let notes_col = header.iter().position(|h| h.eq_ignore_ascii_case(NOTES));
    let dim_cols = dimensions
        .iter()
        .map(|d| {
            find_column(&header, d)
                .ok_or_else(|| IngestError::Schema(format!("missing dimension column `{d}`")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut records = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let cells: Vec<&str> = line.split('\t').map(unquote).collect();
        let cell = |i: usize| cells.get(i).copied().unwrap_or("");
        if notes_col.is_some_and(|n| !cell(n).is_empty()) {
            continue;
        }
        let parse_err = |message: String| IngestError::Parse {
            line: lineno,
            message,
        };
        let ym = YearMonth::parse_month_code(cell(month_col))
            .map_err(|_| parse_err(format!("malformed month code `{}`", cell(month_col))))?;
        let deaths = match cell(deaths_col) {
            SUPPRESSED_TOKEN => Deaths::Suppressed,
            raw => Deaths::Count(
                raw.replace(',', "")
                    .parse()
                    .map_err(|_| parse_err(format!("invalid deaths value `{raw}`")))?,
            ),
        };
        let stratum = dimensions
            .iter()
            .zip(&dim_cols)
            .map(|(d, &c)| (d.clone(), cell(c).to_string()))
            .collect();
        records.push(WonderRecord {
            year: ym.year,
            month: ym.month,
            stratum,
            deaths,
        });
    }
    StratifiedDataset::new(records, dimensions.to_vec(), "CDC WONDER tab-delimited export")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuppressionMode {
    #[default]
    Fail,
    Zero,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SuppressionPolicy {
    pub mode: SuppressionMode,
}

pub fn resolve_suppression(
    dataset: &StratifiedDataset,
    policy: SuppressionPolicy,
) -> Result<StratifiedDataset, IngestError> {
    let replacement = match policy.mode {
        SuppressionMode::Fail => {
            let cells: Vec<String> = dataset
                .records
                .iter()
                .filter(|r| r.deaths == Deaths::Suppressed)
                .map(|r| format!("{} {}", r.year_month(), stratum_label(&r.stratum)))
                .collect();
            if !cells.is_empty() {
                return Err(IngestError::Suppressed { cells });
            }
            return Ok(dataset.clone());
        }
        SuppressionMode::Zero => 0,
        SuppressionMode::Midpoint => SUPPRESSED_MIDPOINT,
    };
    let mut out = dataset.clone();
    for r in &mut out.records {
        if r.deaths == Deaths::Suppressed {
            r.deaths = Deaths::Count(replacement);
        }
    }
    Ok(out)
}

/// Category selection per dimension; dimensions absent from the map are
/// aggregated over.
pub type StratumFilter = BTreeMap<String, String>;

/// Sums all matching records per calendar month.
pub fn to_series(
    dataset: &StratifiedDataset,
    filter: Option<&StratumFilter>,
) -> Result<MonthlySeries, IngestError> {
    let mut totals: BTreeMap<YearMonth, f64> = BTreeMap::new();
    for r in &dataset.records {
        if let Some(f) = filter {
            if !f.iter().all(|(k, v)| r.stratum.get(k) == Some(v)) {
                continue;
            }
        }
        let n = match r.deaths {
            Deaths::Count(n) => n as f64,
            Deaths::Suppressed => {
                return Err(IngestError::Suppressed {
                    cells: vec![format!("{} {}", r.year_month(), stratum_label(&r.stratum))],
                })
            }
        };
        *totals.entry(r.year_month()).or_insert(0.0) += n;
    }
    let (&start, _) = totals.iter().next().ok_or(IngestError::Empty)?;
    let mut expected = start;
    let mut values = Vec::with_capacity(totals.len());
    for (&ym, &v) in &totals {
        if ym != expected {
            return Err(IngestError::Gap { missing: expected });
        }
        values.push(v);
        expected = expected.succ();
    }
    Ok(MonthlySeries::new(start, values).expect("counts are finite and nonnegative"))
}

/// Parameters of a trend-plus-seasonality fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_months: usize,
    pub base_level: f64,
    pub linear_slope: f64,
    pub seasonal_amplitudes: [f64; 12],
    pub noise_sd: f64,
    #[serde(default = "default_start")]
    pub start: YearMonth,
}

fn default_start() -> YearMonth {
    YearMonth::new(2015, 1).expect("valid")
}

impl SyntheticSpec {
    /// A fixture shaped like national monthly overdose deaths from 2015:
    /// roughly 4,000 deaths a month rising by about 20 a month, with a
    /// mild summer peak.
    pub fn national_like(n_months: usize) -> Self {
        Self {
            n_months,
            base_level: 4000.0,
            linear_slope: 20.0,
            seasonal_amplitudes: [
                -120.0, -160.0, -40.0, 0.0, 60.0, 90.0, 140.0, 110.0, 40.0, 0.0, -40.0, -80.0,
            ],
            noise_sd: 60.0,
            start: default_start(),
        }
    }
}

/// `values[i] = max(0, base + slope*i + amplitude[i mod 12] + noise_i)`.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<MonthlySeries, IngestError> {
    if spec.n_months < 24 {
        return Err(IngestError::TooShort(spec.n_months));
    }
    if !(spec.noise_sd >= 0.0) {
        return Err(IngestError::InvalidSpec(format!("noise_sd must be >= 0, got {}", spec.noise_sd)));
    }
    let mut rng = seeded(seed);
    let values = (0..spec.n_months)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = spec.base_level
                + spec.linear_slope * i as f64
                + spec.seasonal_amplitudes[i % 12]
                + spec.noise_sd * z;
            v.max(0.0)
        })
        .collect();
    Ok(MonthlySeries::new(spec.start, values).expect("values clamped to nonnegative"))
}

/// Adds `amount` to every month from `from` onwards (a regime change).
pub fn apply_level_shift(series: &MonthlySeries, from: YearMonth, amount: f64) -> MonthlySeries {
    let values = series
        .months()
        .zip(series.values())
        .map(|(ym, &v)| if ym >= from { (v + amount).max(0.0) } else { v })
        .collect();
    MonthlySeries::new(series.start(), values).expect("values clamped to nonnegative")
}

/// `year,month,deaths` CSV.
pub fn series_to_csv(series: &MonthlySeries) -> String {
    let mut out = String::from("year,month,deaths\n");
    for (ym, v) in series.months().zip(series.values()) {
        out.push_str(&format!("{},{},{}\n", ym.year, ym.month, v));
    }
    out
}

pub fn series_from_csv(text: &str) -> Result<MonthlySeries, IngestError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let err = |m: &str| IngestError::Parse {
            line: i + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 3 {
            return Err(err("expected year,month,deaths"));
        }
        let year = f[0].trim().parse().map_err(|_| err("bad year"))?;
        let month = f[1].trim().parse().map_err(|_| err("bad month"))?;
        let ym = YearMonth::new(year, month).ok_or_else(|| err("month out of range"))?;
        let v: f64 = f[2].trim().parse().map_err(|_| err("bad deaths"))?;
        entries.push((ym, v));
    }
    let start = entries.first().ok_or(IngestError::Empty)?.0;
    for (i, (ym, _)) in entries.iter().enumerate() {
        let expected = start.add_months(i as i64);
        if *ym != expected {
            return Err(IngestError::Gap { missing: expected });
        }
    }
    MonthlySeries::new(start, entries.into_iter().map(|e| e.1).collect())
        .map_err(|e| IngestError::Parse {
            line: 0,
            message: e.to_string(),
        })
}
