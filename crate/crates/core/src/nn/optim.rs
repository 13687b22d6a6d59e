use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{DenseNet, Gradients, NnError};

/// RMSProp hyper-parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RmsPropConfig {
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for RmsPropConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl RmsPropConfig {
    pub fn with_learning_rate(self, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..self
        }
    }

    /// A zero learning rate is accepted and freezes the parameters.
    pub fn validate(&self) -> Result<(), NnError> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(NnError::InvalidConfig(format!(
                "decay {} outside (0, 1)",
                self.decay
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(NnError::InvalidConfig(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// One RMSProp update over flat parameter, gradient and cache slices:
///
/// ```text
/// cache <- decay * cache + (1 - decay) * grad^2
/// param <- param - lr * grad / (sqrt(cache) + eps)
/// ```
///
/// Nothing is modified when any gradient is non-finite.
pub fn rmsprop_update(
    params: &mut [f64],
    grads: &[f64],
    cache: &mut [f64],
    cfg: &RmsPropConfig,
) -> Result<(), NnError> {
    if params.len() != grads.len() || params.len() != cache.len() {
        return Err(NnError::InvalidConfig(format!(
            "shape mismatch: {} params, {} grads, {} cache entries",
            params.len(),
            grads.len(),
            cache.len()
        )));
    }
    if grads.iter().any(|g| !g.is_finite()) {
        return Err(NnError::NonFiniteGradient { layer: 0 });
    }
    apply(params.iter_mut(), grads.iter(), cache.iter_mut(), cfg);
    Ok(())
}

fn apply<'a>(
    params: impl Iterator<Item = &'a mut f64>,
    grads: impl Iterator<Item = &'a f64>,
    cache: impl Iterator<Item = &'a mut f64>,
    cfg: &RmsPropConfig,
) {
    for ((p, &g), c) in params.zip(grads).zip(cache) {
        *c = cfg.decay * *c + (1.0 - cfg.decay) * g * g;
        *p -= cfg.learning_rate * g / (c.sqrt() + cfg.epsilon);
    }
}

/// Squared-gradient running averages for every parameter of one net.
#[derive(Clone, Debug)]
pub struct RmsPropState {
    config: RmsPropConfig,
    cache: Vec<(Array2<f64>, Array1<f64>)>,
}

impl RmsPropState {
    pub fn for_net(net: &DenseNet, config: RmsPropConfig) -> Result<Self, NnError> {
        config.validate()?;
        let cache = net
            .layers()
            .iter()
            .map(|l| (Array2::zeros(l.weights.dim()), Array1::zeros(l.out_dim())))
            .collect();
        Ok(Self { config, cache })
    }

    pub fn config(&self) -> &RmsPropConfig {
        &self.config
    }

    pub fn cache(&self) -> &[(Array2<f64>, Array1<f64>)] {
        &self.cache
    }

    /// Applies one update to `net`. Non-finite gradients are rejected
    /// before any parameter changes.
    pub fn step(&mut self, net: &mut DenseNet, grads: &Gradients) -> Result<(), NnError> {
        if grads.layers.len() != self.cache.len() || net.layers().len() != self.cache.len() {
            return Err(NnError::InvalidConfig(
                "gradient layout does not match optimizer state".into(),
            ));
        }
        for (i, (g, (cw, _))) in grads.layers.iter().zip(&self.cache).enumerate() {
            if g.weights.dim() != cw.dim() {
                return Err(NnError::InvalidConfig(format!(
                    "layer {i}: gradient shape {:?} vs parameters {:?}",
                    g.weights.dim(),
                    cw.dim()
                )));
            }
            if !g
                .weights
                .iter()
                .chain(g.biases.iter())
                .all(|v| v.is_finite())
            {
                return Err(NnError::NonFiniteGradient { layer: i });
            }
        }
        let cfg = self.config;
        for ((layer, g), (cw, cb)) in net
            .layers_mut()
            .iter_mut()
            .zip(&grads.layers)
            .zip(self.cache.iter_mut())
        {
            apply(
                layer.weights.iter_mut(),
                g.weights.iter(),
                cw.iter_mut(),
                &cfg,
            );
            apply(
                layer.biases.iter_mut(),
                g.biases.iter(),
                cb.iter_mut(),
                &cfg,
            );
        }
        if net.layers().iter().any(|l| {
            !l.weights
                .iter()
                .chain(l.biases.iter())
                .all(|v| v.is_finite())
        }) {
            return Err(NnError::NonFiniteParameter);
        }
        Ok(())
    }
}
