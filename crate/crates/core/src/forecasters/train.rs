use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{Architecture, ModelConfig, TrainSettings};
use super::nets::Net;
use super::ForecastError;
use crate::calendar::YearMonth;
use crate::neural::{AdamState, Checkpoint, Graph, Matrix, NeuralError, ParamStore};
use crate::rng::seeded;
use crate::sarima::{fit_sarima, SarimaError, SarimaModel};
use crate::series::{make_windows, MonthlySeries, Scaler};

/// A trained network with everything needed to roll it forward.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedNet {
    pub architecture: Architecture,
    pub settings: TrainSettings,
    pub net: Net,
    pub params: ParamStore,
    pub scaler: Scaler,
    /// Mean training loss per epoch (scaled units).
    pub loss_curve: Vec<f64>,
    pub seed: u64,
    /// Last `lookback` training observations, in death counts.
    pub tail: Vec<f64>,
    /// Month after the last training observation.
    pub next_month: YearMonth,
}

/// Trains a network of arbitrary shape on `series`.
pub fn train_net(
    arch: &Architecture,
    settings: &TrainSettings,
    series: &MonthlySeries,
    seed: u64,
) -> Result<TrainedNet, ForecastError> {
    let values = series.values();
    let l = settings.lookback;
    if settings.batch_size == 0 || settings.epochs == 0 {
        return Err(ForecastError::Config("batch size and epochs must be positive".into()));
    }
    let scaler = Scaler::fit_lenient(values)?;
    let scaled = scaler.apply_all(values);
    let windows = make_windows(&scaled, l).map_err(|_| ForecastError::InsufficientData {
        needed: l + 1,
        got: values.len(),
    })?;

    let mut rng = seeded(seed);
    let (net, mut params) = Net::build(arch, l, &mut rng)?;
    let mut adam = AdamState::new(&params, settings.adam);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut loss_curve = Vec::with_capacity(settings.epochs);
    for epoch in 0..settings.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(settings.batch_size) {
            let mut x = Matrix::zeros(chunk.len(), l);
            let mut y = Vec::with_capacity(chunk.len());
            for (r, &i) in chunk.iter().enumerate() {
                x.row_mut(r).copy_from_slice(&windows.pairs[i].0);
                y.push(windows.pairs[i].1);
            }
            let grads = {
                let mut g = Graph::new(&params);
                let loss = net.loss(&mut g, &x, &y);
                let v = g.scalar(loss);
                if !v.is_finite() {
                    return Err(ForecastError::Divergence { epoch });
                }
                total += v * chunk.len() as f64;
                g.backward(loss)
            };
            adam.step(&mut params, &grads).map_err(|e| match e {
                NeuralError::NonFinite(_) => ForecastError::Divergence { epoch },
                other => other.into(),
            })?;
        }
        loss_curve.push(total / windows.len() as f64);
    }
    Ok(TrainedNet {
        architecture: *arch,
        settings: *settings,
        net,
        params,
        scaler,
        loss_curve,
        seed,
        tail: values[values.len() - l..].to_vec(),
        next_month: series.end().succ(),
    })
}

impl TrainedNet {
    /// One-step predictions for raw (unscaled) windows, in death counts,
    /// floored at zero.
    pub fn predict_batch(&self, windows: &[Vec<f64>]) -> Result<Vec<f64>, ForecastError> {
        let l = self.settings.lookback;
        let mut x = Matrix::zeros(windows.len(), l);
        for (r, w) in windows.iter().enumerate() {
            if w.len() != l {
                return Err(ForecastError::Shape(format!("window has {} values, lookback is {l}", w.len())));
            }
            for (c, v) in w.iter().enumerate() {
                x.set(r, c, self.scaler.apply(*v));
            }
        }
        let mut g = Graph::new(&self.params);
        let p = self.net.predict(&mut g, &x);
        Ok(g.value(p).data().iter().map(|v| self.scaler.invert(*v).max(0.0)).collect())
    }

    /// Feeds each prediction back as input for `h` steps.
    pub fn rollout(&self, context: &[f64], h: usize) -> Result<Vec<f64>, ForecastError> {
        let l = self.settings.lookback;
        if context.len() != l {
            return Err(ForecastError::Shape(format!(
                "context has {} months, lookback is {l}",
                context.len()
            )));
        }
        if h == 0 {
            return Err(ForecastError::Horizon);
        }
        let mut window: Vec<f64> = context.iter().map(|v| self.scaler.apply(*v)).collect();
        let mut path = Vec::with_capacity(h);
        for _ in 0..h {
            let mut g = Graph::new(&self.params);
            let p = self.net.predict(&mut g, &Matrix::row_vector(window.clone()));
            let next = g.value(p).get(0, 0);
            path.push(self.scaler.invert(next).max(0.0));
            window.remove(0);
            window.push(next);
        }
        Ok(path)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.params.to_checkpoint()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Fitted {
    Neural(Box<TrainedNet>),
    Sarima(Box<SarimaModel>),
}

/// A fitted model of any family.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub fitted: Fitted,
    pub seed: u64,
}

/// Trains `config` on `series`. SARIMA ignores the seed.
pub fn train(config: &ModelConfig, series: &MonthlySeries, seed: u64) -> Result<TrainedModel, ForecastError> {
    config.validate()?;
    let fitted = match config {
        ModelConfig::Sarima { order } => Fitted::Sarima(Box::new(fit_sarima(series, *order)?)),
        _ => {
            let arch = config.architecture().expect("neural family");
            let settings = config.settings().expect("neural family");
            Fitted::Neural(Box::new(train_net(&arch, &settings, series, seed)?))
        }
    };
    Ok(TrainedModel {
        config: *config,
        fitted,
        seed,
    })
}

impl TrainedModel {
    /// Per-epoch training loss; empty for SARIMA.
    pub fn loss_curve(&self) -> &[f64] {
        match &self.fitted {
            Fitted::Neural(n) => &n.loss_curve,
            Fitted::Sarima(_) => &[],
        }
    }

    /// Autoregressive rollout from an explicit context window. SARIMA
    /// models forecast from their own training history instead; see
    /// [`TrainedModel::forecast`].
    pub fn rollout(&self, context: &[f64], h: usize) -> Result<Vec<f64>, ForecastError> {
        match &self.fitted {
            Fitted::Neural(n) => n.rollout(context, h),
            Fitted::Sarima(_) => Err(ForecastError::Unsupported(
                "SARIMA forecasts continue from the training history".into(),
            )),
        }
    }

    /// Point path for the `h` months following the training window,
    /// floored at zero.
    pub fn forecast(&self, h: usize) -> Result<Vec<f64>, ForecastError> {
        if h == 0 {
            return Err(ForecastError::Horizon);
        }
        match &self.fitted {
            Fitted::Neural(n) => n.rollout(&n.tail, h),
            Fitted::Sarima(m) => Ok(m.point_forecast(h).into_iter().map(|v| v.max(0.0)).collect()),
        }
    }

    /// First month of [`TrainedModel::forecast`].
    pub fn forecast_start(&self) -> YearMonth {
        match &self.fitted {
            Fitted::Neural(n) => n.next_month,
            Fitted::Sarima(m) => m.forecast_start(),
        }
    }

    pub fn checkpoint_json(&self) -> String {
        match &self.fitted {
            Fitted::Neural(n) => n.checkpoint().to_json(),
            Fitted::Sarima(m) => serde_json::to_string(&SarimaCheckpoint::from(m.as_ref())).expect("serializable"),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct SarimaCheckpoint {
    order: crate::sarima::SarimaOrder,
    coefficients: crate::sarima::Coefficients,
    mean: Option<f64>,
    sigma2: f64,
}

impl From<&SarimaModel> for SarimaCheckpoint {
    fn from(m: &SarimaModel) -> Self {
        Self {
            order: m.order,
            coefficients: m.coefficients.clone(),
            mean: m.mean,
            sigma2: m.sigma2,
        }
    }
}

/// Validation rollout: predictions over `validation` and absolute
/// residuals in death counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Validation {
    pub predictions: Vec<f64>,
    pub residuals: Vec<f64>,
}

/// Rolls the model across the validation span that follows its training
/// window.
pub fn validate(model: &TrainedModel, validation: &MonthlySeries) -> Result<Validation, ForecastError> {
    if validation.start() != model.forecast_start() {
        return Err(ForecastError::Shape(format!(
            "validation starts {}, model forecasts from {}",
            validation.start(),
            model.forecast_start()
        )));
    }
    let predictions = model.forecast(validation.len())?;
    let residuals = validation
        .values()
        .iter()
        .zip(&predictions)
        .map(|(y, p)| (y - p).abs())
        .collect();
    Ok(Validation { predictions, residuals })
}

impl From<SarimaError> for ForecastError {
    fn from(e: SarimaError) -> Self {
        ForecastError::Sarima(Box::new(e))
    }
}
