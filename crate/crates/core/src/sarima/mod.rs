//! Seasonal ARIMA fitted by conditional sum of squares.
//!
//! The model for a series `y` is
//!
//! ```text
//! phi(B) Phi(B^12) (1-B)^d (1-B^12)^D (y_t - mu) = theta(B) Theta(B^12) e_t
//! ```
//!
//! with `phi(B) = 1 - sum phi_i B^i`, `theta(B) = 1 + sum theta_i B^i` and
//! `mu` present only when `d = D = 0`. Coefficients are estimated by
//! minimizing the conditional sum of squared one-step innovations with a
//! multi-start Nelder-Mead search; candidates whose AR or MA factors have a
//! root on or inside the unit circle are pushed away by a penalty.
//! Forecast intervals come from the psi-weights of the integrated model.

mod grid;
pub mod poly;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::YearMonth;
use crate::optim::NelderMead;
use crate::projection::{ProjectionResult, Z_975};
use crate::rng::seeded;
use crate::series::MonthlySeries;

pub use grid::{grid_search_sarima, grid_search_sarima_with, GridSearchResult, LeaderboardEntry, SarimaGrid};

pub const SEASONAL_PERIOD: usize = 12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SarimaError {
    #[error("invalid order {0}: all orders must lie in 0..=2")]
    Order(SarimaOrder),
    #[error("insufficient data for {order}: need more than {needed} observations, got {got}")]
    InsufficientData {
        order: SarimaOrder,
        needed: usize,
        got: usize,
    },
    #[error("optimizer did not converge for {order} (best CSS {:.6})", best.css)]
    Convergence {
        order: SarimaOrder,
        best: Box<SarimaModel>,
    },
    #[error("forecast horizon must be at least 1")]
    Horizon,
    #[error("coefficient vector has {got} entries, order {order} needs {expected}")]
    Coefficients {
        order: SarimaOrder,
        expected: usize,
        got: usize,
    },
    #[error("every one of the {tried} candidate orders failed to fit")]
    Exhausted {
        tried: usize,
        census: Vec<(SarimaOrder, String)>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SarimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    #[serde(rename = "P")]
    pub seasonal_p: usize,
    #[serde(rename = "D")]
    pub seasonal_d: usize,
    #[serde(rename = "Q")]
    pub seasonal_q: usize,
}

impl SarimaOrder {
    pub const fn new(p: usize, d: usize, q: usize, sp: usize, sd: usize, sq: usize) -> Self {
        Self {
            p,
            d,
            q,
            seasonal_p: sp,
            seasonal_d: sd,
            seasonal_q: sq,
        }
    }

    pub fn validate(&self) -> Result<(), SarimaError> {
        let all = [self.p, self.d, self.q, self.seasonal_p, self.seasonal_d, self.seasonal_q];
        if all.iter().any(|&o| o > 2) {
            return Err(SarimaError::Order(*self));
        }
        Ok(())
    }

    /// `p + d + q + P + D + Q`, the tie-break key in grid search.
    pub fn total(&self) -> usize {
        self.p + self.d + self.q + self.seasonal_p + self.seasonal_d + self.seasonal_q
    }

    pub fn n_coefficients(&self) -> usize {
        self.p + self.q + self.seasonal_p + self.seasonal_q
    }

    pub fn has_mean(&self) -> bool {
        self.d == 0 && self.seasonal_d == 0
    }

    /// Observations lost to differencing.
    pub fn lost(&self) -> usize {
        self.d + SEASONAL_PERIOD * self.seasonal_d
    }

    /// Minimum length is one more than this.
    pub fn min_len_exclusive(&self) -> usize {
        let ar = self.p + SEASONAL_PERIOD * self.seasonal_p;
        let ma = self.q + SEASONAL_PERIOD * self.seasonal_q;
        self.lost() + ar.max(ma) + 10
    }
}

impl std::fmt::Display for SarimaOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "({},{},{})({},{},{},{})",
            self.p, self.d, self.q, self.seasonal_p, self.seasonal_d, self.seasonal_q, SEASONAL_PERIOD
        )
    }
}

/// Coefficients in the order `phi, theta, Phi, Theta`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Coefficients {
    pub phi: Vec<f64>,
    pub theta: Vec<f64>,
    pub seasonal_phi: Vec<f64>,
    pub seasonal_theta: Vec<f64>,
}

impl Coefficients {
    fn from_flat(order: &SarimaOrder, x: &[f64]) -> Self {
        let (phi, rest) = x.split_at(order.p);
        let (theta, rest) = rest.split_at(order.q);
        let (sphi, stheta) = rest.split_at(order.seasonal_p);
        Self {
            phi: phi.to_vec(),
            theta: theta.to_vec(),
            seasonal_phi: sphi.to_vec(),
            seasonal_theta: stheta.to_vec(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        [&self.phi[..], &self.theta, &self.seasonal_phi, &self.seasonal_theta].concat()
    }

    /// `phi(B) Phi(B^12)`.
    pub fn ar_poly(&self) -> Vec<f64> {
        poly::mul(
            &poly::lagged(&self.phi, 1, -1.0),
            &poly::lagged(&self.seasonal_phi, SEASONAL_PERIOD, -1.0),
        )
    }

    /// `theta(B) Theta(B^12)`.
    pub fn ma_poly(&self) -> Vec<f64> {
        poly::mul(
            &poly::lagged(&self.theta, 1, 1.0),
            &poly::lagged(&self.seasonal_theta, SEASONAL_PERIOD, 1.0),
        )
    }

    /// Sum of violations across the four factors; `None` if every factor
    /// is stationary (AR) or invertible (MA).
    fn violation(&self) -> Option<f64> {
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let parts = [
            poly::stationarity_violation(&self.phi),
            poly::stationarity_violation(&self.seasonal_phi),
            poly::stationarity_violation(&neg(&self.theta)),
            poly::stationarity_violation(&neg(&self.seasonal_theta)),
        ];
        parts
            .iter()
            .flatten()
            .copied()
            .reduce(|a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaModel {
    pub order: SarimaOrder,
    pub coefficients: Coefficients,
    /// Mean of the series; only present when `d = D = 0`.
    pub mean: Option<f64>,
    /// Innovation variance in squared series units.
    pub sigma2: f64,
    /// Conditional sum of squares in series units.
    pub css: f64,
    /// Number of innovations entering the CSS.
    pub n_effective: usize,
    /// Training observations, the first at `start`.
    pub history: Vec<f64>,
    pub start: YearMonth,
    /// One-step innovations aligned with `history` (zero before the
    /// conditioning point).
    pub residuals: Vec<f64>,
    /// Index into `history` of the first innovation entering the CSS.
    pub first_residual: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaFitOptions {
    /// Simplex searches per fit: one from zero, the rest from seeded jitter.
    pub starts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SarimaFitOptions {
    fn default() -> Self {
        Self {
            starts: 3,
            max_iter: 5000,
            seed: 0x5A41_4D41,
        }
    }
}

struct Css<'a> {
    order: &'a SarimaOrder,
    /// Differenced, centered and scaled series.
    u: Vec<f64>,
    scale: f64,
    t0: usize,
}

impl Css<'_> {
    /// Innovations on `u` (zero before `t0`) and their sum of squares.
    fn innovations(&self, c: &Coefficients) -> (Vec<f64>, f64) {
        let ar = poly::sparse_tail(&c.ar_poly());
        let ma = poly::sparse_tail(&c.ma_poly());
        let mut e = vec![0.0; self.u.len()];
        let mut css = 0.0;
        for t in self.t0..self.u.len() {
            let mut v = self.u[t];
            for &(k, a) in &ar {
                v += a * self.u[t - k];
            }
            for &(k, m) in &ma {
                if k <= t {
                    v -= m * e[t - k];
                }
            }
            e[t] = v;
            css += v * v;
        }
        (e, css)
    }

    fn objective(&self, x: &[f64], css_zero: f64) -> f64 {
        let c = Coefficients::from_flat(self.order, x);
        if let Some(v) = c.violation() {
            return (css_zero + 1.0) * 1e6 * (1.0 + v);
        }
        self.innovations(&c).1
    }
}

/// Fits on a monthly death series.
pub fn fit_sarima(series: &MonthlySeries, order: SarimaOrder) -> Result<SarimaModel, SarimaError> {
    fit_values(series.values(), series.start(), order, &SarimaFitOptions::default())
}

/// Fits on raw values (which may be negative, e.g. simulated processes).
pub fn fit_values(
    y: &[f64],
    start: YearMonth,
    order: SarimaOrder,
    opts: &SarimaFitOptions,
) -> Result<SarimaModel, SarimaError> {
    order.validate()?;
    let needed = order.min_len_exclusive();
    if y.len() <= needed {
        return Err(SarimaError::InsufficientData {
            order,
            needed,
            got: y.len(),
        });
    }
    let (w, _) = crate::series::difference(y, order.d, order.seasonal_d, SEASONAL_PERIOD)
        .expect("length checked above");
    let mean = order.has_mean().then(|| w.iter().sum::<f64>() / w.len() as f64);
    let centered: Vec<f64> = w.iter().map(|v| v - mean.unwrap_or(0.0)).collect();
    let sd = (centered.iter().map(|v| v * v).sum::<f64>() / centered.len() as f64).sqrt();
    let scale = if sd > 0.0 { sd } else { 1.0 };
    let t0 = order.p + SEASONAL_PERIOD * order.seasonal_p;
    let problem = Css {
        order: &order,
        u: centered.iter().map(|v| v / scale).collect(),
        scale,
        t0,
    };

    let k = order.n_coefficients();
    let zero = vec![0.0; k];
    let css_zero = problem.innovations(&Coefficients::from_flat(&order, &zero)).1;
    let nm = NelderMead::default().with_max_iter(opts.max_iter);
    let steps = vec![0.1; k];
    let mut rng = seeded(opts.seed);
    let mut best: Option<(bool, crate::optim::Minimum)> = None;
    for s in 0..opts.starts.max(1) {
        let x0: Vec<f64> = if s == 0 {
            zero.clone()
        } else {
            (0..k).map(|_| rng.random_range(-0.3..0.3)).collect()
        };
        let (converged, m) = match nm.minimize(|x| problem.objective(x, css_zero), &x0, &steps) {
            Ok(m) => (true, m),
            Err(m) => (false, m),
        };
        let better = match &best {
            None => true,
            // converged searches win over unconverged ones, then lower CSS
            Some((bc, bm)) => (converged, -m.value) > (*bc, -bm.value),
        };
        if better {
            best = Some((converged, m));
        }
        if k == 0 {
            break;
        }
    }
    let (converged, m) = best.expect("at least one start");
    let coefficients = Coefficients::from_flat(&order, &m.x);
    let (e, css_scaled) = problem.innovations(&coefficients);
    let n_effective = problem.u.len() - t0;
    let css = css_scaled * problem.scale * problem.scale;
    let sigma2 = (css / n_effective as f64).max(1e-12);
    let offset = order.lost();
    let mut residuals = vec![0.0; y.len()];
    for (t, v) in e.iter().enumerate() {
        residuals[t + offset] = v * problem.scale;
    }
    let model = SarimaModel {
        order,
        coefficients,
        mean,
        sigma2,
        css,
        n_effective,
        history: y.to_vec(),
        start,
        residuals,
        first_residual: offset + t0,
    };
    if converged {
        Ok(model)
    } else {
        Err(SarimaError::Convergence {
            order,
            best: Box::new(model),
        })
    }
}

impl SarimaModel {
    /// Builds a model with known coefficients, computing innovations on
    /// `history`. Used for forecasting from a specified process.
    pub fn with_coefficients(
        order: SarimaOrder,
        coefficients: Coefficients,
        mean: Option<f64>,
        sigma2: f64,
        history: Vec<f64>,
        start: YearMonth,
    ) -> Result<Self, SarimaError> {
        order.validate()?;
        let expected = order.n_coefficients();
        let got = coefficients.flat().len();
        if got != expected || coefficients.phi.len() != order.p || coefficients.seasonal_theta.len() != order.seasonal_q {
            return Err(SarimaError::Coefficients { order, expected, got });
        }
        if history.len() <= order.lost() {
            return Err(SarimaError::InsufficientData {
                order,
                needed: order.lost(),
                got: history.len(),
            });
        }
        let (w, _) = crate::series::difference(&history, order.d, order.seasonal_d, SEASONAL_PERIOD)
            .expect("length checked above");
        let mean = if order.has_mean() { Some(mean.unwrap_or(0.0)) } else { None };
        let t0 = (order.p + SEASONAL_PERIOD * order.seasonal_p).min(w.len());
        let problem = Css {
            order: &order,
            u: w.iter().map(|v| v - mean.unwrap_or(0.0)).collect(),
            scale: 1.0,
            t0,
        };
        let (e, css) = problem.innovations(&coefficients);
        let mut residuals = vec![0.0; history.len()];
        for (t, v) in e.iter().enumerate() {
            residuals[t + order.lost()] = *v;
        }
        Ok(Self {
            order,
            coefficients,
            mean,
            sigma2,
            css,
            n_effective: w.len() - t0,
            history,
            start,
            residuals,
            first_residual: order.lost() + t0,
        })
    }

    /// Full autoregressive operator on `y` including differencing.
    pub fn integrated_ar(&self) -> Vec<f64> {
        poly::mul(
            &self.coefficients.ar_poly(),
            &poly::differencing(self.order.d, self.order.seasonal_d, SEASONAL_PERIOD),
        )
    }

    pub fn psi_weights(&self, n: usize) -> Vec<f64> {
        poly::psi_weights(&self.integrated_ar(), &self.coefficients.ma_poly(), n)
    }

    /// Month following the last training observation.
    pub fn forecast_start(&self) -> YearMonth {
        self.start.add_months(self.history.len() as i64)
    }

    /// Point forecasts for `h` steps with future innovations set to zero.
    pub fn point_forecast(&self, h: usize) -> Vec<f64> {
        let ar = poly::sparse_tail(&self.integrated_ar());
        let ma = poly::sparse_tail(&self.coefficients.ma_poly());
        let mu = self.mean.unwrap_or(0.0);
        let n = self.history.len();
        let mut y: Vec<f64> = self.history.iter().map(|v| v - mu).collect();
        let mut e = self.residuals.clone();
        for t in n..n + h {
            let mut v = 0.0;
            for &(k, a) in &ar {
                v -= a * y[t - k];
            }
            for &(k, m) in &ma {
                v += m * e[t - k];
            }
            y.push(v);
            e.push(0.0);
        }
        y[n..].iter().map(|v| v + mu).collect()
    }

    /// In-sample one-step predictions `y_t - e_t` from `first_residual` on.
    pub fn fitted(&self) -> Vec<f64> {
        self.history[self.first_residual..]
            .iter()
            .zip(&self.residuals[self.first_residual..])
            .map(|(y, e)| y - e)
            .collect()
    }

    /// Analytic half-width at 95% for the one-step in-sample predictions.
    pub fn one_step_half_width(&self) -> f64 {
        Z_975 * self.sigma2.sqrt()
    }
}

/// Forecasts `h` months ahead with 95% analytic intervals. The half-width
/// at step `k` is `z * sqrt(sigma2 * sum_{j<k} psi_j^2)`.
pub fn forecast_sarima(model: &SarimaModel, h: usize) -> Result<ProjectionResult, SarimaError> {
    if h == 0 {
        return Err(SarimaError::Horizon);
    }
    let points = model.point_forecast(h);
    let psi = model.psi_weights(h);
    let mut cum = 0.0;
    let mut lower = Vec::with_capacity(h);
    let mut upper = Vec::with_capacity(h);
    for (p, w) in points.iter().zip(&psi) {
        cum += w * w;
        let hw = Z_975 * (model.sigma2 * cum).sqrt();
        lower.push(p - hw);
        upper.push(p + hw);
    }
    Ok(ProjectionResult::new(model.forecast_start(), points, lower, upper, 0.95)
        .expect("symmetric finite intervals"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn start() -> YearMonth {
        YearMonth::new(2000, 1).unwrap()
    }

    fn ar1_path(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        let mut y = Vec::with_capacity(n);
        let mut prev = 0.0;
        for i in 0..n + 100 {
            let e: f64 = StandardNormal.sample(&mut rng);
            prev = phi * prev + e;
            if i >= 100 {
                y.push(prev);
            }
        }
        y
    }

    #[test]
    fn white_noise_variance_matches_moments() {
        let mut rng = seeded(9);
        let y: Vec<f64> = (0..300).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); 50.0 + 3.0 * z }).collect();
        let m = fit_values(&y, start(), SarimaOrder::new(0, 0, 0, 0, 0, 0), &Default::default()).unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        assert!(m.coefficients.flat().is_empty());
        assert!((m.sigma2 / var - 1.0).abs() < 0.1);
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let order = SarimaOrder::new(1, 0, 0, 0, 0, 0);
        let phis: Vec<f64> = (0..5)
            .map(|s| fit_values(&ar1_path(0.6, 500, s), start(), order, &Default::default()).unwrap().coefficients.phi[0])
            .collect();
        let mean = phis.iter().sum::<f64>() / phis.len() as f64;
        assert!((0.5..=0.7).contains(&mean), "{phis:?}");
    }

    #[test]
    fn css_never_worse_than_zero_start() {
        let y = ar1_path(0.6, 120, 3);
        for order in [SarimaOrder::new(1, 0, 1, 0, 0, 0), SarimaOrder::new(2, 1, 1, 1, 0, 1)] {
            let m = fit_values(&y, start(), order, &Default::default()).unwrap();
            let zero = SarimaModel::with_coefficients(
                order,
                Coefficients::from_flat(&order, &vec![0.0; order.n_coefficients()]),
                m.mean,
                1.0,
                y.clone(),
                start(),
            )
            .unwrap();
            assert!(m.css <= zero.css + 1e-9, "{order}: {} > {}", m.css, zero.css);
        }
    }

    #[test]
    fn white_noise_forecast_half_width() {
        let y = vec![0.0; 40];
        let m = SarimaModel::with_coefficients(SarimaOrder::new(0, 0, 0, 0, 0, 0), Coefficients::default(), Some(0.0), 1.0, y, start())
            .unwrap();
        let f = forecast_sarima(&m, 3).unwrap();
        assert_eq!(f.points, vec![0.0; 3]);
        for (l, u) in f.lower.iter().zip(&f.upper) {
            assert!((u - 1.959964).abs() < 1e-12 && (l + 1.959964).abs() < 1e-12);
        }
        assert_eq!(forecast_sarima(&m, 0), Err(SarimaError::Horizon));
    }

    #[test]
    fn ar1_two_step_half_width_closed_form() {
        let order = SarimaOrder::new(1, 0, 0, 0, 0, 0);
        let c = Coefficients { phi: vec![0.5], ..Default::default() };
        let m = SarimaModel::with_coefficients(order, c, Some(0.0), 1.0, vec![0.3; 20], start()).unwrap();
        let f = forecast_sarima(&m, 2).unwrap();
        let hw = f.upper[1] - f.points[1];
        assert!((hw - 1.959964 * 1.25f64.sqrt()).abs() < 1e-9);
        for (j, p) in m.psi_weights(25).iter().enumerate() {
            assert!((p - 0.5f64.powi(j as i32)).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_variance_forecast_matches_hand_recursion() {
        // (1,1,0)(0,0,0): y_t = y_{t-1} + 0.5 (y_{t-1} - y_{t-2})
        let order = SarimaOrder::new(1, 1, 0, 0, 0, 0);
        let y = vec![10.0, 12.0, 13.0, 15.0, 16.0];
        let c = Coefficients { phi: vec![0.5], ..Default::default() };
        let m = SarimaModel::with_coefficients(order, c, None, 0.0, y.clone(), start()).unwrap();
        let mut hand = y.clone();
        for _ in 0..4 {
            let n = hand.len();
            hand.push(hand[n - 1] + 0.5 * (hand[n - 1] - hand[n - 2]));
        }
        assert_eq!(m.point_forecast(4), hand[5..].to_vec());
    }

    #[test]
    fn intervals_widen_monotonically() {
        let y = ar1_path(0.6, 200, 4).iter().map(|v| v + 100.0).collect::<Vec<_>>();
        let m = fit_values(&y, start(), SarimaOrder::new(1, 0, 1, 1, 1, 1), &Default::default()).unwrap();
        let f = forecast_sarima(&m, 24).unwrap();
        for k in 1..24 {
            assert!(f.upper[k] - f.lower[k] >= f.upper[k - 1] - f.lower[k - 1] - 1e-12);
        }
    }

    #[test]
    fn rejects_short_series_and_bad_orders() {
        let y = vec![1.0; 30];
        assert!(matches!(
            fit_values(&y, start(), SarimaOrder::new(1, 0, 0, 1, 1, 1), &Default::default()),
            Err(SarimaError::InsufficientData { .. })
        ));
        assert!(matches!(
            fit_values(&y, start(), SarimaOrder::new(3, 0, 0, 0, 0, 0), &Default::default()),
            Err(SarimaError::Order(_))
        ));
    }
}
