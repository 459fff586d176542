use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_values, forecast_sarima, SarimaError, SarimaFitOptions, SarimaModel, SarimaOrder};
use crate::evalkit::rmse;
use crate::series::TuningSplit;

/// Candidate values per order component. Defaults to `{0,1,2}` everywhere.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SarimaGrid {
    pub p: Vec<usize>,
    pub d: Vec<usize>,
    pub q: Vec<usize>,
    #[serde(rename = "P")]
    pub seasonal_p: Vec<usize>,
    #[serde(rename = "D")]
    pub seasonal_d: Vec<usize>,
    #[serde(rename = "Q")]
    pub seasonal_q: Vec<usize>,
}

impl Default for SarimaGrid {
    fn default() -> Self {
        let all = vec![0, 1, 2];
        Self {
            p: all.clone(),
            d: all.clone(),
            q: all.clone(),
            seasonal_p: all.clone(),
            seasonal_d: all.clone(),
            seasonal_q: all,
        }
    }
}

impl SarimaGrid {
    pub fn single(order: SarimaOrder) -> Self {
        Self {
            p: vec![order.p],
            d: vec![order.d],
            q: vec![order.q],
            seasonal_p: vec![order.seasonal_p],
            seasonal_d: vec![order.seasonal_d],
            seasonal_q: vec![order.seasonal_q],
        }
    }

    /// Every combination, in lexicographic `(p,d,q,P,D,Q)` order.
    pub fn orders(&self) -> Vec<SarimaOrder> {
        let mut out = Vec::new();
        for &p in &self.p {
            for &d in &self.d {
                for &q in &self.q {
                    for &sp in &self.seasonal_p {
                        for &sd in &self.seasonal_d {
                            for &sq in &self.seasonal_q {
                                out.push(SarimaOrder::new(p, d, q, sp, sd, sq));
                            }
                        }
                    }
                }
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub order: SarimaOrder,
    pub val_rmse: Option<f64>,
    /// `ok`, or the failure reason.
    pub status: String,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best: SarimaOrder,
    pub model: SarimaModel,
    /// Ranked successes first, then failures in order.
    pub leaderboard: Vec<LeaderboardEntry>,
}

impl GridSearchResult {
    /// `p,d,q,P,D,Q,val_rmse,status`.
    pub fn leaderboard_csv(&self) -> String {
        let mut out = String::from("p,d,q,P,D,Q,val_rmse,status\n");
        for e in &self.leaderboard {
            let o = e.order;
            let rmse = e.val_rmse.map(|r| format!("{r:.6}")).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                o.p, o.d, o.q, o.seasonal_p, o.seasonal_d, o.seasonal_q, rmse, e.status
            ));
        }
        out
    }
}

/// Exhaustive search over all 729 orders.
pub fn grid_search_sarima(split: &TuningSplit) -> Result<GridSearchResult, SarimaError> {
    grid_search_sarima_with(split, &SarimaGrid::default(), &SarimaFitOptions::default())
}

/// Fits every order on `split.train`, forecasts the validation span and
/// ranks by validation RMSE (ties: smaller total order, then lexicographic).
pub fn grid_search_sarima_with(
    split: &TuningSplit,
    grid: &SarimaGrid,
    opts: &SarimaFitOptions,
) -> Result<GridSearchResult, SarimaError> {
    let orders = grid.orders();
    let h = split.validation.len();
    let outcomes: Vec<(SarimaOrder, Result<(SarimaModel, f64), String>)> = orders
        .par_iter()
        .map(|&order| {
            let res = fit_values(split.train.values(), split.train.start(), order, opts)
                .map_err(|e| failure_label(&e))
                .and_then(|m| {
                    let f = forecast_sarima(&m, h).map_err(|e| failure_label(&e))?;
                    let r = rmse(split.validation.values(), &f.points).map_err(|e| e.to_string())?;
                    if r.is_finite() {
                        Ok((m, r))
                    } else {
                        Err("nonfinite".to_string())
                    }
                });
            (order, res)
        })
        .collect();

    let mut ranked: Vec<(SarimaOrder, SarimaModel, f64)> = Vec::new();
    let mut failures = Vec::new();
    for (order, res) in outcomes {
        match res {
            Ok((m, r)) => ranked.push((order, m, r)),
            Err(status) => failures.push((order, status)),
        }
    }
    ranked.sort_by(|a, b| {
        a.2.total_cmp(&b.2)
            .then(a.0.total().cmp(&b.0.total()))
            .then(a.0.cmp(&b.0))
    });
    if ranked.is_empty() {
        return Err(SarimaError::Exhausted {
            tried: orders.len(),
            census: failures,
        });
    }
    let mut leaderboard: Vec<LeaderboardEntry> = ranked
        .iter()
        .map(|(o, _, r)| LeaderboardEntry {
            order: *o,
            val_rmse: Some(*r),
            status: "ok".into(),
        })
        .collect();
    leaderboard.extend(failures.into_iter().map(|(order, status)| LeaderboardEntry {
        order,
        val_rmse: None,
        status,
    }));
    let (best, model, _) = ranked.swap_remove(0);
    Ok(GridSearchResult {
        best,
        model,
        leaderboard,
    })
}

fn failure_label(e: &SarimaError) -> String {
    match e {
        SarimaError::InsufficientData { .. } => "insufficient_data".into(),
        SarimaError::Convergence { .. } => "no_convergence".into(),
        other => format!("error: {other}").replace(',', ";"),
    }
}
