//! Trainable forecaster families, seeded training loops and
//! autoregressive rollouts.

pub mod config;
pub mod nets;
mod train;

use thiserror::Error;

use crate::neural::NeuralError;
use crate::sarima::SarimaError;
use crate::series::SeriesError;

pub use config::{Architecture, Family, ModelConfig, TrainSettings};
pub use nets::Net;
pub use train::{train, train_net, validate, Fitted, TrainedModel, TrainedNet, Validation};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ForecastError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("insufficient data: need at least {needed} months, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("shape error: {0}")]
    Shape(String),
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error(transparent)]
    Sarima(Box<SarimaError>),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}
