use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ForecastError;
use crate::neural::AdamConfig;
use crate::sarima::SarimaOrder;

pub const LOOKBACKS: [usize; 6] = [3, 5, 7, 9, 11, 12];
pub const BATCH_SIZES: [usize; 3] = [8, 16, 32];
pub const EPOCHS: [usize; 2] = [50, 100];
pub const HIDDEN_SIZES: [usize; 2] = [64, 128];
pub const D_MODEL: usize = 64;
pub const HEADS: [usize; 2] = [1, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Sarima,
    Lstm,
    Seq2seq,
    Seq2seqAttn,
    Transformer,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Sarima,
        Family::Lstm,
        Family::Seq2seq,
        Family::Seq2seqAttn,
        Family::Transformer,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Family::Sarima => "sarima",
            Family::Lstm => "lstm",
            Family::Seq2seq => "seq2seq",
            Family::Seq2seqAttn => "seq2seq_attn",
            Family::Transformer => "transformer",
        }
    }

    pub fn is_neural(&self) -> bool {
        *self != Family::Sarima
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = ForecastError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| ForecastError::Config(format!("unknown model family {s:?}")))
    }
}

/// Hyperparameters for one of the five families, restricted to the
/// enumerated tuning grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelConfig {
    Sarima {
        order: SarimaOrder,
    },
    Lstm {
        lookback: usize,
        batch_size: usize,
        epochs: usize,
        hidden: usize,
    },
    Seq2seq {
        lookback: usize,
        batch_size: usize,
        epochs: usize,
        encoder_hidden: usize,
        decoder_hidden: usize,
    },
    Seq2seqAttn {
        lookback: usize,
        batch_size: usize,
        epochs: usize,
        encoder_hidden: usize,
        decoder_hidden: usize,
    },
    Transformer {
        lookback: usize,
        batch_size: usize,
        epochs: usize,
        d_model: usize,
        heads: usize,
    },
}

impl ModelConfig {
    /// The selected settings for each family on the national series.
    pub fn default_for(family: Family) -> Self {
        match family {
            Family::Sarima => ModelConfig::Sarima {
                order: SarimaOrder::new(1, 0, 0, 1, 1, 1),
            },
            Family::Lstm => ModelConfig::Lstm {
                lookback: 5,
                batch_size: 8,
                epochs: 50,
                hidden: 64,
            },
            Family::Seq2seq => ModelConfig::Seq2seq {
                lookback: 7,
                batch_size: 16,
                epochs: 100,
                encoder_hidden: 64,
                decoder_hidden: 64,
            },
            Family::Seq2seqAttn => ModelConfig::Seq2seqAttn {
                lookback: 5,
                batch_size: 16,
                epochs: 50,
                encoder_hidden: 128,
                decoder_hidden: 64,
            },
            Family::Transformer => ModelConfig::Transformer {
                lookback: 7,
                batch_size: 32,
                epochs: 100,
                d_model: 64,
                heads: 2,
            },
        }
    }

    pub fn family(&self) -> Family {
        match self {
            ModelConfig::Sarima { .. } => Family::Sarima,
            ModelConfig::Lstm { .. } => Family::Lstm,
            ModelConfig::Seq2seq { .. } => Family::Seq2seq,
            ModelConfig::Seq2seqAttn { .. } => Family::Seq2seqAttn,
            ModelConfig::Transformer { .. } => Family::Transformer,
        }
    }

    /// `(lookback, batch_size, epochs)` for neural families.
    pub fn schedule(&self) -> Option<(usize, usize, usize)> {
        match *self {
            ModelConfig::Sarima { .. } => None,
            ModelConfig::Lstm { lookback, batch_size, epochs, .. }
            | ModelConfig::Seq2seq { lookback, batch_size, epochs, .. }
            | ModelConfig::Seq2seqAttn { lookback, batch_size, epochs, .. }
            | ModelConfig::Transformer { lookback, batch_size, epochs, .. } => Some((lookback, batch_size, epochs)),
        }
    }

    pub fn lookback(&self) -> Option<usize> {
        self.schedule().map(|s| s.0)
    }

    pub fn validate(&self) -> Result<(), ForecastError> {
        fn one_of(what: &str, v: usize, allowed: &[usize]) -> Result<(), ForecastError> {
            if allowed.contains(&v) {
                Ok(())
            } else {
                Err(ForecastError::Config(format!("{what} = {v} is not one of {allowed:?}")))
            }
        }
        if let Some((l, b, e)) = self.schedule() {
            one_of("lookback", l, &LOOKBACKS)?;
            one_of("batch_size", b, &BATCH_SIZES)?;
            one_of("epochs", e, &EPOCHS)?;
        }
        match *self {
            ModelConfig::Sarima { order } => order.validate().map_err(|e| ForecastError::Config(e.to_string())),
            ModelConfig::Lstm { hidden, .. } => one_of("hidden", hidden, &HIDDEN_SIZES),
            ModelConfig::Seq2seq {
                encoder_hidden,
                decoder_hidden,
                ..
            }
            | ModelConfig::Seq2seqAttn {
                encoder_hidden,
                decoder_hidden,
                ..
            } => {
                one_of("encoder_hidden", encoder_hidden, &HIDDEN_SIZES)?;
                one_of("decoder_hidden", decoder_hidden, &HIDDEN_SIZES)
            }
            ModelConfig::Transformer { d_model, heads, .. } => {
                one_of("d_model", d_model, &[D_MODEL])?;
                one_of("heads", heads, &HEADS)
            }
        }
    }

    /// Network shape for neural families.
    pub fn architecture(&self) -> Option<Architecture> {
        match *self {
            ModelConfig::Sarima { .. } => None,
            ModelConfig::Lstm { hidden, .. } => Some(Architecture::Lstm { hidden, layers: 2 }),
            ModelConfig::Seq2seq {
                encoder_hidden,
                decoder_hidden,
                ..
            } => Some(Architecture::Seq2seq {
                encoder_hidden,
                decoder_hidden,
                attention: false,
            }),
            ModelConfig::Seq2seqAttn {
                encoder_hidden,
                decoder_hidden,
                ..
            } => Some(Architecture::Seq2seq {
                encoder_hidden,
                decoder_hidden,
                attention: true,
            }),
            ModelConfig::Transformer { d_model, heads, .. } => Some(Architecture::Transformer {
                d_model,
                heads,
                ff: 4 * d_model,
            }),
        }
    }

    pub fn settings(&self) -> Option<TrainSettings> {
        self.schedule().map(|(lookback, batch_size, epochs)| TrainSettings {
            lookback,
            batch_size,
            epochs,
            adam: AdamConfig::default(),
        })
    }

    /// Compact human-readable label, e.g. `lstm L=5 B=8 E=50 H=64`.
    pub fn label(&self) -> String {
        match *self {
            ModelConfig::Sarima { order } => format!("sarima {order}"),
            ModelConfig::Lstm {
                lookback,
                batch_size,
                epochs,
                hidden,
            } => format!("lstm L={lookback} B={batch_size} E={epochs} H={hidden}"),
            ModelConfig::Seq2seq {
                lookback,
                batch_size,
                epochs,
                encoder_hidden,
                decoder_hidden,
            }
            | ModelConfig::Seq2seqAttn {
                lookback,
                batch_size,
                epochs,
                encoder_hidden,
                decoder_hidden,
            } => format!(
                "{} L={lookback} B={batch_size} E={epochs} H={encoder_hidden}/{decoder_hidden}",
                self.family()
            ),
            ModelConfig::Transformer {
                lookback,
                batch_size,
                epochs,
                d_model,
                heads,
            } => format!("transformer L={lookback} B={batch_size} E={epochs} d={d_model} heads={heads}"),
        }
    }
}

/// Network shape with unrestricted dimensions. [`ModelConfig`] maps onto
/// this; small shapes are useful for gradient checks and quick examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Architecture {
    Lstm {
        hidden: usize,
        layers: usize,
    },
    Seq2seq {
        encoder_hidden: usize,
        decoder_hidden: usize,
        attention: bool,
    },
    Transformer {
        d_model: usize,
        heads: usize,
        ff: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub lookback: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam: AdamConfig,
}
