//! Unsupervised adversarial domain adaptation for cross-lingual speech
//! emotion recognition over fixed-length acoustic feature vectors.
//!
//! Source and target autoencoders learn latent codes by reconstruction; a
//! discriminator then drives the source encoder toward the target latent
//! distribution without reading any target label; an RBF-kernel SVM with
//! Platt-calibrated posteriors classifies binary valence, and the `eval`
//! module runs speaker-independent experiments over feature corpora.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversarial;
pub mod autoencoder;
pub mod cli;
pub mod corpus;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod svm;
