//! Adversarial adaptation of the source encoder.
//!
//! A discriminator `D` scores latent codes with the probability that they
//! came from the target encoder. Training alternates between `D` updates
//! that minimise binary cross-entropy (target latents labelled 1, source
//! latents 0) and source-encoder updates that minimise
//! `mean log(1 - D(E_s(x_s)))`, pulling source latents toward the target
//! latent distribution. The target encoder and both decoders are never
//! touched, and no emotion label is an input.
//!
//! The output layer is a single sigmoid unit. A two-way softmax over logits
//! `(0, z)` gives the same probability `sigmoid(z)` for the target class,
//! so the two parameterisations are interchangeable.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autoencoder::{gather_rows, Autoencoder};
use crate::nn::{Activation, DenseNet, NnError, RmsPropConfig, RmsPropState};
use crate::rng::{derive_seed, seeded};

/// Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum AdversarialError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("empty {0} batch")]
    EmptyBatch(&'static str),
    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        what: &'static str,
        epoch: usize,
        batch: usize,
    },
    #[error("invalid adaptation setup: {0}")]
    InvalidConfig(String),
}

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn clamped(p: f64) -> bool {
    !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p)
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = xs.len() as f64;
    xs.sum::<f64>() / n
}

/// `-[mean_t log D(f_t) + mean_s log(1 - D(f_s))]`.
pub fn discriminator_loss(
    d_on_source: &[f64],
    d_on_target: &[f64],
) -> Result<f64, AdversarialError> {
    if d_on_source.is_empty() {
        return Err(AdversarialError::EmptyBatch("source"));
    }
    if d_on_target.is_empty() {
        return Err(AdversarialError::EmptyBatch("target"));
    }
    let t = mean(d_on_target.iter().map(|&p| clamp(p).ln()));
    let s = mean(d_on_source.iter().map(|&p| (1.0 - clamp(p)).ln()));
    Ok(-(t + s))
}

/// `mean_s log(1 - D(f_s))`; always `<= 0`.
pub fn adversarial_loss(d_on_source: &[f64]) -> Result<f64, AdversarialError> {
    if d_on_source.is_empty() {
        return Err(AdversarialError::EmptyBatch("source"));
    }
    Ok(mean(d_on_source.iter().map(|&p| (1.0 - clamp(p)).ln())))
}

/// `-mean_s log D(f_s)`, the non-saturating alternative.
pub fn non_saturating_loss(d_on_source: &[f64]) -> Result<f64, AdversarialError> {
    if d_on_source.is_empty() {
        return Err(AdversarialError::EmptyBatch("source"));
    }
    Ok(-mean(d_on_source.iter().map(|&p| clamp(p).ln())))
}

/// d(discriminator_loss)/dp for source and target probabilities.
pub fn discriminator_loss_grad(d_on_source: &[f64], d_on_target: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let ns = d_on_source.len() as f64;
    let nt = d_on_target.len() as f64;
    let gs = d_on_source
        .iter()
        .map(|&p| {
            if clamped(p) {
                0.0
            } else {
                1.0 / (ns * (1.0 - p))
            }
        })
        .collect();
    let gt = d_on_target
        .iter()
        .map(|&p| if clamped(p) { 0.0 } else { -1.0 / (nt * p) })
        .collect();
    (gs, gt)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorLoss {
    /// `mean log(1 - D(f_s))`
    #[default]
    Saturating,
    /// `-mean log D(f_s)`
    NonSaturating,
}

impl GeneratorLoss {
    pub fn value(self, d_on_source: &[f64]) -> Result<f64, AdversarialError> {
        match self {
            GeneratorLoss::Saturating => adversarial_loss(d_on_source),
            GeneratorLoss::NonSaturating => non_saturating_loss(d_on_source),
        }
    }

    /// d(loss)/dp for each source probability.
    pub fn grad(self, d_on_source: &[f64]) -> Vec<f64> {
        let n = d_on_source.len() as f64;
        d_on_source
            .iter()
            .map(|&p| {
                if clamped(p) {
                    0.0
                } else {
                    match self {
                        GeneratorLoss::Saturating => -1.0 / (n * (1.0 - p)),
                        GeneratorLoss::NonSaturating => -1.0 / (n * p),
                    }
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorConfig {
    pub hidden: Vec<usize>,
    pub dropout_rate: f64,
}

impl Default for DiscriminatorConfig {
    fn default() -> Self {
        Self {
            hidden: vec![512, 256],
            dropout_rate: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Discriminator {
    net: DenseNet,
}

impl Discriminator {
    /// `latent → hidden… (ReLU) → 1 (sigmoid)` with dropout after the first
    /// hidden layer.
    pub fn new<R: Rng + ?Sized>(
        latent_dim: usize,
        cfg: &DiscriminatorConfig,
        rng: &mut R,
    ) -> Result<Self, AdversarialError> {
        let mut dims = vec![latent_dim];
        dims.extend(&cfg.hidden);
        dims.push(1);
        let mut acts = vec![Activation::Relu; cfg.hidden.len()];
        acts.push(Activation::Sigmoid);
        let dropout = if cfg.hidden.len() >= 2 {
            [0].into()
        } else {
            Default::default()
        };
        let net = DenseNet::glorot(&dims, &acts, cfg.dropout_rate, dropout, rng)?;
        Ok(Self { net })
    }

    pub fn from_net(net: DenseNet) -> Result<Self, AdversarialError> {
        let last = net.layers().last().expect("nets are non-empty");
        if net.out_dim() != 1 || last.activation() != Activation::Sigmoid {
            return Err(AdversarialError::InvalidConfig(
                "discriminator must end in a single sigmoid unit".into(),
            ));
        }
        Ok(Self { net })
    }

    pub fn net(&self) -> &DenseNet {
        &self.net
    }

    /// Inference-mode probabilities that each row is a target latent.
    pub fn probabilities(&self, latents: ArrayView2<f64>) -> Result<Vec<f64>, AdversarialError> {
        Ok(self.net.predict(latents)?.column(0).to_vec())
    }

    /// Balanced accuracy of target-vs-source decisions at threshold 0.5.
    pub fn accuracy(
        &self,
        source_latents: ArrayView2<f64>,
        target_latents: ArrayView2<f64>,
    ) -> Result<f64, AdversarialError> {
        let s = self.probabilities(source_latents)?;
        let t = self.probabilities(target_latents)?;
        let acc_s = s.iter().filter(|&&p| p <= 0.5).count() as f64 / s.len() as f64;
        let acc_t = t.iter().filter(|&&p| p > 0.5).count() as f64 / t.len() as f64;
        Ok(0.5 * (acc_s + acc_t))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub d_steps_per_g_step: usize,
    pub discriminator_optimizer: RmsPropConfig,
    pub encoder_optimizer: RmsPropConfig,
    pub generator_loss: GeneratorLoss,
    pub discriminator: DiscriminatorConfig,
    /// Fraction of each domain held out for probing the discriminator.
    pub probe_fraction: f64,
    /// Upper bound on probe rows per domain.
    pub probe_max: usize,
    pub seed: u64,
}

impl Default for AdaptConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 32,
            d_steps_per_g_step: 1,
            discriminator_optimizer: RmsPropConfig::default(),
            encoder_optimizer: RmsPropConfig::default(),
            generator_loss: GeneratorLoss::Saturating,
            discriminator: DiscriminatorConfig::default(),
            probe_fraction: 0.2,
            probe_max: 512,
            seed: 0,
        }
    }
}

impl AdaptConfig {
    fn validate(&self) -> Result<(), AdversarialError> {
        if self.batch_size == 0 || self.d_steps_per_g_step == 0 {
            return Err(AdversarialError::InvalidConfig(
                "batch size and discriminator steps per generator step must be positive".into(),
            ));
        }
        if !(self.probe_fraction > 0.0 && self.probe_fraction < 1.0) || self.probe_max == 0 {
            return Err(AdversarialError::InvalidConfig(
                "probe fraction must lie in (0, 1) with a positive cap".into(),
            ));
        }
        self.discriminator_optimizer.validate()?;
        self.encoder_optimizer.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean discriminator loss over the epoch's discriminator steps.
    pub d_loss: f64,
    /// Mean `log(1 - D(E_s(x_s)))` over the epoch's encoder steps.
    pub adv_loss: f64,
    /// Balanced discriminator accuracy on the held-out probe rows.
    pub probe_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdaptHistory {
    pub records: Vec<EpochRecord>,
    pub warnings: Vec<String>,
}

impl AdaptHistory {
    pub fn final_probe_accuracy(&self) -> Option<f64> {
        self.records.last().map(|r| r.probe_accuracy)
    }

    /// `epoch,d_loss,adv_loss,probe_accuracy` with one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,d_loss,adv_loss,probe_accuracy\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch, r.d_loss, r.adv_loss, r.probe_accuracy
            ));
        }
        out
    }
}

pub struct Adaptation {
    /// The adapted source encoder.
    pub encoder: DenseNet,
    pub discriminator: Discriminator,
    pub history: AdaptHistory,
}

/// Rows split into a training pool and a held-out probe set.
struct Split {
    train: Array2<f64>,
    probe: Array2<f64>,
}

fn split_rows<R: Rng + ?Sized>(
    data: ArrayView2<f64>,
    cfg: &AdaptConfig,
    rng: &mut R,
    what: &'static str,
) -> Result<Split, AdversarialError> {
    let n = data.nrows();
    if n < 2 {
        return Err(AdversarialError::InvalidConfig(format!(
            "{what} needs at least 2 rows, got {n}"
        )));
    }
    let n_probe =
        ((n as f64 * cfg.probe_fraction).round() as usize).clamp(1, cfg.probe_max.min(n - 1));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (probe, train) = idx.split_at(n_probe);
    let mut train = train.to_vec();
    let mut probe = probe.to_vec();
    train.sort_unstable();
    probe.sort_unstable();
    Ok(Split {
        train: gather_rows(data, &train),
        probe: gather_rows(data, &probe),
    })
}

fn sample_batch<R: Rng + ?Sized>(pool: &Array2<f64>, size: usize, rng: &mut R) -> Array2<f64> {
    let idx: Vec<usize> = (0..size)
        .map(|_| rng.random_range(0..pool.nrows()))
        .collect();
    pool.select(Axis(0), &idx)
}

fn column(grad: Vec<f64>) -> Array2<f64> {
    let n = grad.len();
    Array2::from_shape_vec((n, 1), grad).expect("n values form an n × 1 column")
}

/// One discriminator update on frozen latents; returns the batch loss.
fn discriminator_step<R: Rng + ?Sized>(
    disc: &mut Discriminator,
    opt: &mut RmsPropState,
    source_latents: &Array2<f64>,
    target_latents: &Array2<f64>,
    rng: &mut R,
) -> Result<f64, AdversarialError> {
    let (ps, tape_s) = disc.net.forward_batch(source_latents.view(), true, rng)?;
    let (pt, tape_t) = disc.net.forward_batch(target_latents.view(), true, rng)?;
    let ps = ps.column(0).to_vec();
    let pt = pt.column(0).to_vec();
    let loss = discriminator_loss(&ps, &pt)?;
    let (gs, gt) = discriminator_loss_grad(&ps, &pt);
    let mut grads = disc.net.backward(&tape_s, column(gs).view())?;
    let grads_t = disc.net.backward(&tape_t, column(gt).view())?;
    for (a, b) in grads.layers.iter_mut().zip(grads_t.layers) {
        a.weights += &b.weights;
        a.biases += &b.biases;
    }
    opt.step(&mut disc.net, &grads)?;
    Ok(loss)
}

struct Pools {
    source: Split,
    target_train_latents: Array2<f64>,
    target_probe_latents: Array2<f64>,
}

fn prepare(
    source_encoder: &DenseNet,
    target_ae: &Autoencoder,
    source_data: ArrayView2<f64>,
    target_data: ArrayView2<f64>,
    cfg: &AdaptConfig,
) -> Result<Pools, AdversarialError> {
    cfg.validate()?;
    if source_encoder.out_dim() != target_ae.latent_dim() {
        return Err(AdversarialError::InvalidConfig(format!(
            "source latent width {} differs from target latent width {}",
            source_encoder.out_dim(),
            target_ae.latent_dim()
        )));
    }
    let mut split_rng = seeded(derive_seed(cfg.seed, "adapt/split"));
    let source = split_rows(source_data, cfg, &mut split_rng, "source")?;
    let target = split_rows(target_data, cfg, &mut split_rng, "target")?;
    // E_t is frozen for the whole phase, so its latents are computed once.
    let target_train_latents = target_ae.encoder().predict(target.train.view())?;
    let target_probe_latents = target_ae.encoder().predict(target.probe.view())?;
    Ok(Pools {
        source,
        target_train_latents,
        target_probe_latents,
    })
}

fn iterations_per_epoch(pools: &Pools, batch: usize) -> usize {
    pools
        .source
        .train
        .nrows()
        .max(pools.target_train_latents.nrows())
        .div_ceil(batch)
}

/// Updates the source encoder adversarially against the (frozen) target
/// encoder. Rows of `source_data` / `target_data` are standardized
/// segments; no labels are involved.
pub fn adapt_source_encoder(
    source_ae: &Autoencoder,
    target_ae: &Autoencoder,
    source_data: ArrayView2<f64>,
    target_data: ArrayView2<f64>,
    cfg: &AdaptConfig,
) -> Result<Adaptation, AdversarialError> {
    let mut encoder = source_ae.encoder().clone();
    let pools = prepare(&encoder, target_ae, source_data, target_data, cfg)?;
    let mut disc = Discriminator::new(
        encoder.out_dim(),
        &cfg.discriminator,
        &mut seeded(derive_seed(cfg.seed, "adapt/discriminator-init")),
    )?;
    let mut rng = seeded(derive_seed(cfg.seed, "adapt/loop"));
    let mut d_opt = RmsPropState::for_net(&disc.net, cfg.discriminator_optimizer)?;
    let mut e_opt = RmsPropState::for_net(&encoder, cfg.encoder_optimizer)?;
    let iters = iterations_per_epoch(&pools, cfg.batch_size);
    let mut history = AdaptHistory::default();

    for epoch in 0..cfg.epochs {
        let mut d_sum = 0.0;
        let mut adv_sum = 0.0;
        for it in 0..iters {
            for _ in 0..cfg.d_steps_per_g_step {
                let xs = sample_batch(&pools.source.train, cfg.batch_size, &mut rng);
                let fs = encoder.predict(xs.view())?;
                let ft = sample_batch(&pools.target_train_latents, cfg.batch_size, &mut rng);
                let loss = discriminator_step(&mut disc, &mut d_opt, &fs, &ft, &mut rng)?;
                if !loss.is_finite() {
                    return Err(AdversarialError::NonFiniteLoss {
                        what: "discriminator loss",
                        epoch,
                        batch: it,
                    });
                }
                d_sum += loss;
            }

            // encoder step: E_s in training mode, D frozen in inference mode
            let xs = sample_batch(&pools.source.train, cfg.batch_size, &mut rng);
            let (fs, enc_tape) = encoder.forward_batch(xs.view(), true, &mut rng)?;
            let (ps, d_tape) = disc.net.forward_batch(fs.view(), false, &mut rng)?;
            let ps = ps.column(0).to_vec();
            let adv = adversarial_loss(&ps)?;
            if !adv.is_finite() {
                return Err(AdversarialError::NonFiniteLoss {
                    what: "adversarial loss",
                    epoch,
                    batch: it,
                });
            }
            adv_sum += adv;
            let d_grads = disc
                .net
                .backward(&d_tape, column(cfg.generator_loss.grad(&ps)).view())?;
            let e_grads = encoder.backward(&enc_tape, d_grads.input.view())?;
            e_opt.step(&mut encoder, &e_grads)?;
        }
        let probe_source = encoder.predict(pools.source.probe.view())?;
        let probe_accuracy =
            disc.accuracy(probe_source.view(), pools.target_probe_latents.view())?;
        history.records.push(EpochRecord {
            epoch: epoch + 1,
            d_loss: d_sum / (iters * cfg.d_steps_per_g_step) as f64,
            adv_loss: adv_sum / iters as f64,
            probe_accuracy,
        });
    }

    if !history.records.is_empty() {
        let pinned = history
            .records
            .iter()
            .filter(|r| r.probe_accuracy >= 1.0)
            .count();
        if pinned as f64 > 0.25 * history.records.len() as f64 {
            history.warnings.push(format!(
                "possible collapse: discriminator probe accuracy pinned at 1.0 in {pinned} of {} epochs",
                history.records.len()
            ));
        }
    }

    Ok(Adaptation {
        encoder,
        discriminator: disc,
        history,
    })
}

/// Trains a fresh discriminator against frozen source and target encoders
/// for `cfg.epochs` and returns its final probe accuracy: how separable the
/// two latent distributions are before any adaptation.
pub fn probe_domain_gap(
    source_encoder: &DenseNet,
    target_ae: &Autoencoder,
    source_data: ArrayView2<f64>,
    target_data: ArrayView2<f64>,
    cfg: &AdaptConfig,
) -> Result<f64, AdversarialError> {
    let pools = prepare(source_encoder, target_ae, source_data, target_data, cfg)?;
    let mut disc = Discriminator::new(
        source_encoder.out_dim(),
        &cfg.discriminator,
        &mut seeded(derive_seed(cfg.seed, "adapt/discriminator-init")),
    )?;
    let mut rng = seeded(derive_seed(cfg.seed, "probe/loop"));
    let mut d_opt = RmsPropState::for_net(&disc.net, cfg.discriminator_optimizer)?;
    let source_train_latents = source_encoder.predict(pools.source.train.view())?;
    let probe_source = source_encoder.predict(pools.source.probe.view())?;
    let iters = iterations_per_epoch(&pools, cfg.batch_size);
    for _ in 0..cfg.epochs {
        for _ in 0..iters * cfg.d_steps_per_g_step {
            let fs = sample_batch(&source_train_latents, cfg.batch_size, &mut rng);
            let ft = sample_batch(&pools.target_train_latents, cfg.batch_size, &mut rng);
            discriminator_step(&mut disc, &mut d_opt, &fs, &ft, &mut rng)?;
        }
    }
    disc.accuracy(probe_source.view(), pools.target_probe_latents.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{grad_check_chain, ScalarLoss};
    use crate::rng::seeded;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn perfect_discriminator_has_near_zero_loss() {
        let l = discriminator_loss(&[1e-7, 1e-7], &[1.0 - 1e-7; 3]).unwrap();
        assert!(l.abs() < 1e-6, "{l}");
    }

    #[test]
    fn chance_discriminator_loss_is_two_ln2() {
        let l = discriminator_loss(&[0.5; 4], &[0.5; 7]).unwrap();
        assert!((l - 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((l - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn discriminator_loss_hand_value() {
        let s = [0.2, 0.4];
        let t = [0.9, 0.6, 0.7];
        let expected = -(((0.9f64).ln() + (0.6f64).ln() + (0.7f64).ln()) / 3.0
            + ((0.8f64).ln() + (0.6f64).ln()) / 2.0);
        assert!((discriminator_loss(&s, &t).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn adversarial_loss_values() {
        assert!((adversarial_loss(&[0.5]).unwrap() + std::f64::consts::LN_2).abs() < 1e-12);
        let near_zero = adversarial_loss(&[1e-7]).unwrap();
        assert!(near_zero <= 0.0 && near_zero > -2e-7);
        let three = adversarial_loss(&[0.2, 0.5, 0.8]).unwrap();
        let expected = ((0.8f64).ln() + (0.5f64).ln() + (0.2f64).ln()) / 3.0;
        assert!((three - expected).abs() < 1e-14);
        assert!((three + 0.84191).abs() < 1e-5);
    }

    #[test]
    fn empty_batches_rejected() {
        assert!(matches!(
            discriminator_loss(&[], &[0.5]),
            Err(AdversarialError::EmptyBatch("source"))
        ));
        assert!(matches!(
            discriminator_loss(&[0.5], &[]),
            Err(AdversarialError::EmptyBatch("target"))
        ));
        assert!(adversarial_loss(&[]).is_err());
    }

    #[test]
    fn clamping_keeps_losses_finite_and_signed() {
        let d = discriminator_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(d.is_finite() && d >= 0.0);
        let a = adversarial_loss(&[1.0, 0.0]).unwrap();
        assert!(a.is_finite() && a <= 0.0);
    }

    struct OnSource<'a>(&'a GeneratorLoss);
    impl ScalarLoss for OnSource<'_> {
        fn value(&self, out: ArrayView2<f64>) -> f64 {
            self.0.value(&out.column(0).to_vec()).unwrap()
        }
        fn gradient(&self, out: ArrayView2<f64>) -> Array2<f64> {
            column(self.0.grad(&out.column(0).to_vec()))
        }
    }

    fn random_rows(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = seeded(seed);
        Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn encoder_through_discriminator_gradients() {
        let mut rng = seeded(31);
        let enc = DenseNet::glorot(
            &[6, 8, 5],
            &[Activation::Relu, Activation::Linear],
            0.5,
            [0].into(),
            &mut rng,
        )
        .unwrap();
        let disc = Discriminator::new(
            5,
            &DiscriminatorConfig {
                hidden: vec![7, 4],
                dropout_rate: 0.5,
            },
            &mut rng,
        )
        .unwrap();
        let x = random_rows(3, 6, 32);
        for loss in [GeneratorLoss::Saturating, GeneratorLoss::NonSaturating] {
            let err = grad_check_chain(
                &[enc.clone(), disc.net.clone()],
                &OnSource(&loss),
                x.view(),
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "{loss:?}: {err}");
        }
    }

    #[test]
    fn generator_gradient_opposes_source_part_of_discriminator_gradient() {
        let mut rng = seeded(40);
        let disc = Discriminator::new(
            4,
            &DiscriminatorConfig {
                hidden: vec![6, 3],
                dropout_rate: 0.0,
            },
            &mut rng,
        )
        .unwrap();
        let fs = random_rows(5, 4, 41);
        let ft = random_rows(3, 4, 42);
        let (ps, tape_s) = disc.net.forward_batch(fs.view(), false, &mut rng).unwrap();
        let (pt, _) = disc.net.forward_batch(ft.view(), false, &mut rng).unwrap();
        let ps = ps.column(0).to_vec();
        let pt = pt.column(0).to_vec();
        let (gs, _) = discriminator_loss_grad(&ps, &pt);
        let d_part = disc.net.backward(&tape_s, column(gs).view()).unwrap();
        let adv = disc
            .net
            .backward(&tape_s, column(GeneratorLoss::Saturating.grad(&ps)).view())
            .unwrap();
        for (a, d) in adv.layers.iter().zip(&d_part.layers) {
            for (x, y) in a
                .weights
                .iter()
                .zip(d.weights.iter())
                .chain(a.biases.iter().zip(d.biases.iter()))
            {
                assert!((x + y).abs() <= 1e-12 * (1.0 + y.abs()), "{x} vs {y}");
            }
        }

        // numerically: perturbing a D parameter moves adv_loss and the source
        // term of discriminator_loss in opposite directions by equal amounts
        let h = 1e-6;
        let mut bumped = disc.net.clone();
        bumped.layers_mut()[0].biases[0] += h;
        let ps2 = bumped.predict(fs.view()).unwrap().column(0).to_vec();
        let pt2 = bumped.predict(ft.view()).unwrap().column(0).to_vec();
        let d_adv = (adversarial_loss(&ps2).unwrap() - adversarial_loss(&ps).unwrap()) / h;
        let d_src = ((discriminator_loss(&ps2, &pt2).unwrap()
            - discriminator_loss(&ps2, &pt2).unwrap())
            + (discriminator_loss(&ps2, &pt).unwrap() - discriminator_loss(&ps, &pt).unwrap()))
            / h;
        assert!((d_adv + d_src).abs() < 1e-6, "{d_adv} vs {d_src}");
    }

    fn tiny_ae(seed: u64) -> Autoencoder {
        let cfg = crate::autoencoder::AutoencoderConfig {
            feature_dim: 6,
            latent_dim: 8,
            hidden_dim: 8,
            dropout_rate: 0.5,
        };
        Autoencoder::new(&cfg, &mut seeded(seed)).unwrap()
    }

    fn tiny_cfg(epochs: usize) -> AdaptConfig {
        AdaptConfig {
            epochs,
            batch_size: 8,
            discriminator: DiscriminatorConfig {
                hidden: vec![8, 4],
                dropout_rate: 0.5,
            },
            seed: 5,
            ..AdaptConfig::default()
        }
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let s = tiny_ae(1);
        let t = tiny_ae(2);
        let out = adapt_source_encoder(
            &s,
            &t,
            random_rows(30, 6, 3).view(),
            random_rows(30, 6, 4).view(),
            &tiny_cfg(0),
        )
        .unwrap();
        assert!(out.encoder.same_params(s.encoder()));
        assert!(out.history.records.is_empty());
        assert_eq!(
            out.history.to_csv(),
            "epoch,d_loss,adv_loss,probe_accuracy\n"
        );
    }

    #[test]
    fn frozen_networks_untouched_and_history_complete() {
        let s = tiny_ae(1);
        let t = tiny_ae(2);
        let before = (t.fingerprint(), s.decoder().fingerprint());
        let out = adapt_source_encoder(
            &s,
            &t,
            random_rows(40, 6, 3).view(),
            random_rows(30, 6, 4).view(),
            &tiny_cfg(3),
        )
        .unwrap();
        assert_eq!((t.fingerprint(), s.decoder().fingerprint()), before);
        assert!(!out.encoder.same_params(s.encoder()));
        assert_eq!(out.history.records.len(), 3);
        for r in &out.history.records {
            assert!(r.d_loss >= 0.0 && r.adv_loss <= 0.0);
            assert!((0.0..=1.0).contains(&r.probe_accuracy));
        }
        assert_eq!(out.history.to_csv().lines().count(), 4);
    }

    #[test]
    fn adaptation_is_deterministic() {
        let s = tiny_ae(1);
        let t = tiny_ae(2);
        let xs = random_rows(40, 6, 3);
        let xt = random_rows(30, 6, 4);
        let a = adapt_source_encoder(&s, &t, xs.view(), xt.view(), &tiny_cfg(2)).unwrap();
        let b = adapt_source_encoder(&s, &t, xs.view(), xt.view(), &tiny_cfg(2)).unwrap();
        assert!(a.encoder.same_params(&b.encoder));
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn latent_width_mismatch_rejected() {
        let s = tiny_ae(1);
        let cfg = crate::autoencoder::AutoencoderConfig {
            feature_dim: 6,
            latent_dim: 5,
            hidden_dim: 8,
            dropout_rate: 0.5,
        };
        let t = Autoencoder::new(&cfg, &mut seeded(9)).unwrap();
        assert!(matches!(
            adapt_source_encoder(
                &s,
                &t,
                random_rows(20, 6, 3).view(),
                random_rows(20, 6, 4).view(),
                &tiny_cfg(1)
            ),
            Err(AdversarialError::InvalidConfig(_))
        ));
    }
}
