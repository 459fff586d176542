//! A small numerical kernel for the neural forecasters: dense matrices,
//! tape-based reverse-mode gradients, recurrent and attention layers,
//! Adam, and finite-difference gradient verification. Everything is
//! 64-bit and deterministic; rows of a matrix are batch samples.

mod adam;
pub mod gradcheck;
mod graph;
pub mod layers;
mod matrix;
mod params;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use gradcheck::{grad_check, relative_error, GradCheckReport};
pub use graph::{Graph, Var};
pub use layers::{
    bahdanau_attention, causal_mask, gru_cell, lstm_cell, positional_encoding, self_attention, Bahdanau, GruCell,
    LayerNorm, Linear, LstmCell, SelfAttention,
};
pub use matrix::Matrix;
pub use params::{Checkpoint, CheckpointEntry, ParamId, ParamStore};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NeuralError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("non-finite gradient for parameter {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}
