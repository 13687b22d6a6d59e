//! Dense-network substrate shared by the encoders, decoders and the
//! discriminator: fully connected layers, inverted dropout, explicit
//! forward/backward passes, RMSProp, and finite-difference checking.

mod checkpoint;
mod gradcheck;
mod net;
mod optim;

use thiserror::Error;

pub(crate) use checkpoint::{expect_magic, read_u32, write_u32};
pub use checkpoint::{NET_MAGIC, NET_VERSION};
pub use gradcheck::{grad_check, grad_check_chain, ScalarLoss, SquaredError};
pub use net::{sigmoid, Activation, DenseLayer, DenseNet, GradTape, Gradients, LayerGradient};
pub use optim::{rmsprop_update, RmsPropConfig, RmsPropState};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input shape mismatch: expected width {expected}, got {actual}")]
    InputShape { expected: usize, actual: usize },
    #[error("layer {index} expects input width {expected} but the previous layer emits {actual}")]
    LayerChain {
        index: usize,
        expected: usize,
        actual: usize,
    },
    #[error("gradient tape was not recorded by this network in its current state")]
    TapeMismatch,
    #[error("output gradient has shape {actual:?}, forward output was {expected:?}")]
    GradShape {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("non-finite parameter after update")]
    NonFiniteParameter,
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
