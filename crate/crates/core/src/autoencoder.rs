//! Source and target autoencoders. Each pairs a two-layer encoder
//! (`feature_dim → hidden → latent`) with a mirrored decoder and is trained
//! on mean squared reconstruction error. The encoders are the feature maps
//! that produce latent codes for the classifier.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{self, Activation, DenseNet, NnError, RmsPropConfig, RmsPropState};

#[derive(Debug, Error)]
pub enum AutoencoderError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("empty batch")]
    EmptyBatch,
    #[error("need at least {need} training rows (one batch), got {have}")]
    NotEnoughData { have: usize, need: usize },
    #[error("non-finite reconstruction loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("encoder emits {encoder_out} values but decoder expects {decoder_in}")]
    LatentMismatch {
        encoder_out: usize,
        decoder_in: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Source,
    Target,
}

/// A latent code tagged with the domain whose encoder produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentCode {
    pub values: Vec<f64>,
    pub domain: Domain,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AutoencoderConfig {
    pub feature_dim: usize,
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            feature_dim: 88,
            latent_dim: 512,
            hidden_dim: 512,
            dropout_rate: 0.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: RmsPropConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            optimizer: RmsPropConfig::default().with_learning_rate(1e-3),
        }
    }
}

/// Reconstruction losses recorded while training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Inference-mode loss on the training data before the first update.
    pub initial_loss: f64,
    /// Inference-mode loss on the training data after each epoch.
    pub epoch_losses: Vec<f64>,
}

impl TrainHistory {
    pub fn final_loss(&self) -> f64 {
        self.epoch_losses
            .last()
            .copied()
            .unwrap_or(self.initial_loss)
    }
}

#[derive(Clone, Debug)]
pub struct Autoencoder {
    encoder: DenseNet,
    decoder: DenseNet,
}

const AE_MAGIC: &[u8; 4] = b"SAAE";
const AE_VERSION: u32 = 1;

impl Autoencoder {
    pub fn new<R: Rng + ?Sized>(
        cfg: &AutoencoderConfig,
        rng: &mut R,
    ) -> Result<Self, AutoencoderError> {
        if cfg.feature_dim == 0 || cfg.latent_dim == 0 || cfg.hidden_dim == 0 {
            return Err(AutoencoderError::InvalidConfig(
                "feature, hidden and latent widths must be positive".into(),
            ));
        }
        let dropout: BTreeSet<usize> = [0].into();
        let encoder = DenseNet::glorot(
            &[cfg.feature_dim, cfg.hidden_dim, cfg.latent_dim],
            &[Activation::Relu, Activation::Linear],
            cfg.dropout_rate,
            dropout.clone(),
            rng,
        )?;
        let decoder = DenseNet::glorot(
            &[cfg.latent_dim, cfg.hidden_dim, cfg.feature_dim],
            &[Activation::Relu, Activation::Linear],
            cfg.dropout_rate,
            dropout,
            rng,
        )?;
        Ok(Self { encoder, decoder })
    }

    pub fn from_parts(encoder: DenseNet, decoder: DenseNet) -> Result<Self, AutoencoderError> {
        if encoder.out_dim() != decoder.in_dim() {
            return Err(AutoencoderError::LatentMismatch {
                encoder_out: encoder.out_dim(),
                decoder_in: decoder.in_dim(),
            });
        }
        if decoder.out_dim() != encoder.in_dim() {
            return Err(AutoencoderError::InvalidConfig(format!(
                "decoder reconstructs {} features, encoder reads {}",
                decoder.out_dim(),
                encoder.in_dim()
            )));
        }
        Ok(Self { encoder, decoder })
    }

    pub fn feature_dim(&self) -> usize {
        self.encoder.in_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.out_dim()
    }

    pub fn encoder(&self) -> &DenseNet {
        &self.encoder
    }

    pub fn decoder(&self) -> &DenseNet {
        &self.decoder
    }

    /// Swaps in a new encoder with the same input and latent widths.
    pub fn with_encoder(self, encoder: DenseNet) -> Result<Self, AutoencoderError> {
        if encoder.in_dim() != self.encoder.in_dim() || encoder.out_dim() != self.encoder.out_dim()
        {
            return Err(AutoencoderError::InvalidConfig(format!(
                "replacement encoder maps {} → {}, expected {} → {}",
                encoder.in_dim(),
                encoder.out_dim(),
                self.encoder.in_dim(),
                self.encoder.out_dim()
            )));
        }
        Ok(Self {
            encoder,
            decoder: self.decoder,
        })
    }

    /// Encodes one segment in inference mode.
    pub fn encode(&self, x: &[f64], domain: Domain) -> Result<LatentCode, AutoencoderError> {
        let view =
            ArrayView2::from_shape((1, x.len()), x).expect("a slice always forms a 1 × n view");
        let z = self.encoder.predict(view)?;
        Ok(LatentCode {
            values: z.row(0).to_vec(),
            domain,
        })
    }

    pub fn encode_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, AutoencoderError> {
        Ok(self.encoder.predict(x)?)
    }

    pub fn decode_batch(&self, z: ArrayView2<f64>) -> Result<Array2<f64>, AutoencoderError> {
        Ok(self.decoder.predict(z)?)
    }

    pub fn reconstruct_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, AutoencoderError> {
        let z = self.encode_batch(x)?;
        self.decode_batch(z.view())
    }

    /// Mean over rows of the per-row mean squared reconstruction error.
    pub fn reconstruction_loss(&self, batch: ArrayView2<f64>) -> Result<f64, AutoencoderError> {
        if batch.nrows() == 0 {
            return Err(AutoencoderError::EmptyBatch);
        }
        let recon = self.reconstruct_batch(batch)?;
        Ok(mse(&recon, batch))
    }

    /// SHA-256 over both networks' parameters.
    pub fn fingerprint(&self) -> String {
        format!(
            "{}:{}",
            self.encoder.fingerprint(),
            self.decoder.fingerprint()
        )
    }

    /// `"SAAE"`, version `u32`, feature_dim `u32`, latent_dim `u32`, then the
    /// encoder and decoder as network checkpoints.
    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<(), AutoencoderError> {
        w.write_all(AE_MAGIC).map_err(NnError::from)?;
        nn::write_u32(w, AE_VERSION)?;
        nn::write_u32(w, self.feature_dim() as u32)?;
        nn::write_u32(w, self.latent_dim() as u32)?;
        self.encoder.write_checkpoint(w)?;
        self.decoder.write_checkpoint(w)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Self, AutoencoderError> {
        nn::expect_magic(r, AE_MAGIC, AE_VERSION)?;
        let feature_dim = nn::read_u32(r)? as usize;
        let latent_dim = nn::read_u32(r)? as usize;
        let encoder = DenseNet::read_checkpoint(r)?;
        let decoder = DenseNet::read_checkpoint(r)?;
        let ae = Self::from_parts(encoder, decoder)?;
        if ae.feature_dim() != feature_dim || ae.latent_dim() != latent_dim {
            return Err(NnError::Checkpoint(format!(
                "header declares {feature_dim} → {latent_dim}, networks are {} → {}",
                ae.feature_dim(),
                ae.latent_dim()
            ))
            .into());
        }
        Ok(ae)
    }
}

fn mse(recon: &Array2<f64>, target: ArrayView2<f64>) -> f64 {
    let n = (recon.nrows() * recon.ncols()) as f64;
    recon
        .iter()
        .zip(target.iter())
        .map(|(r, x)| (r - x) * (r - x))
        .sum::<f64>()
        / n
}

/// Gathers rows `idx` of `data` into a new matrix.
pub(crate) fn gather_rows(data: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    data.select(Axis(0), idx)
}

/// Trains encoder and decoder jointly on reconstruction error with
/// shuffled mini-batches. Rows of `data` are segments.
pub fn train_autoencoder<R: Rng + ?Sized>(
    mut ae: Autoencoder,
    data: ArrayView2<f64>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(Autoencoder, TrainHistory), AutoencoderError> {
    if cfg.batch_size == 0 {
        return Err(AutoencoderError::InvalidConfig(
            "batch size must be positive".into(),
        ));
    }
    if data.nrows() < cfg.batch_size {
        return Err(AutoencoderError::NotEnoughData {
            have: data.nrows(),
            need: cfg.batch_size,
        });
    }
    if data.ncols() != ae.feature_dim() {
        return Err(NnError::InputShape {
            expected: ae.feature_dim(),
            actual: data.ncols(),
        }
        .into());
    }
    let mut enc_opt = RmsPropState::for_net(&ae.encoder, cfg.optimizer)?;
    let mut dec_opt = RmsPropState::for_net(&ae.decoder, cfg.optimizer)?;
    let initial_loss = ae.reconstruction_loss(data)?;
    let mut history = TrainHistory {
        initial_loss,
        epoch_losses: Vec::with_capacity(cfg.epochs),
    };
    let mut order: Vec<usize> = (0..data.nrows()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for (batch_idx, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = gather_rows(data, idx);
            let (z, enc_tape) = ae.encoder.forward_batch(x.view(), true, rng)?;
            let (recon, dec_tape) = ae.decoder.forward_batch(z.view(), true, rng)?;
            let loss = mse(&recon, x.view());
            if !loss.is_finite() {
                return Err(AutoencoderError::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            let scale = 2.0 / (x.nrows() * x.ncols()) as f64;
            let grad_out = (&recon - &x) * scale;
            let dec_grads = ae.decoder.backward(&dec_tape, grad_out.view())?;
            let enc_grads = ae.encoder.backward(&enc_tape, dec_grads.input.view())?;
            dec_opt.step(&mut ae.decoder, &dec_grads)?;
            enc_opt.step(&mut ae.encoder, &enc_grads)?;
        }
        let epoch_loss = ae.reconstruction_loss(data)?;
        if !epoch_loss.is_finite() {
            return Err(AutoencoderError::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(cfg.batch_size),
            });
        }
        history.epoch_losses.push(epoch_loss);
    }
    Ok((ae, history))
}
