use ndarray::{Array2, ArrayView2};

use super::{DenseNet, NnError};

/// A scalar loss over a batch of network outputs.
pub trait ScalarLoss {
    fn value(&self, output: ArrayView2<f64>) -> f64;
    fn gradient(&self, output: ArrayView2<f64>) -> Array2<f64>;

    /// `value(plus) - value(minus)`. Overriding it with a form that does not
    /// subtract two large totals keeps finite differences accurate for
    /// parameters with tiny gradients.
    fn difference(&self, plus: ArrayView2<f64>, minus: ArrayView2<f64>) -> f64 {
        self.value(plus) - self.value(minus)
    }
}

/// `0.5 * sum((output - target)^2)`.
#[derive(Clone, Debug)]
pub struct SquaredError {
    pub target: Array2<f64>,
}

impl ScalarLoss for SquaredError {
    fn value(&self, output: ArrayView2<f64>) -> f64 {
        0.5 * output
            .iter()
            .zip(self.target.iter())
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>()
    }

    fn gradient(&self, output: ArrayView2<f64>) -> Array2<f64> {
        &output - &self.target
    }

    fn difference(&self, plus: ArrayView2<f64>, minus: ArrayView2<f64>) -> f64 {
        plus.iter()
            .zip(minus.iter())
            .zip(self.target.iter())
            .map(|((p, m), t)| 0.5 * (p - m) * (p + m - 2.0 * t))
            .sum()
    }
}

fn chain_forward(nets: &[DenseNet], input: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
    let mut x = input.to_owned();
    for net in nets {
        x = net.predict(x.view())?;
    }
    Ok(x)
}

/// Max relative error between back-propagated and central-difference
/// gradients over every parameter of `net`, with dropout disabled.
pub fn grad_check(
    net: &DenseNet,
    loss: &dyn ScalarLoss,
    input: &[f64],
    h: f64,
) -> Result<f64, NnError> {
    let x =
        ArrayView2::from_shape((1, input.len()), input).expect("a slice always forms a 1 × n view");
    grad_check_chain(std::slice::from_ref(net), loss, x, h)
}

/// Gradient check for a composition `nets[n-1] ∘ … ∘ nets[0]` evaluated on
/// a batch, covering the parameters of every net in the chain.
pub fn grad_check_chain(
    nets: &[DenseNet],
    loss: &dyn ScalarLoss,
    input: ArrayView2<f64>,
    h: f64,
) -> Result<f64, NnError> {
    if nets.is_empty() {
        return Err(NnError::InvalidConfig("empty chain".into()));
    }
    // analytic pass, inference mode
    let mut rng = crate::rng::seeded(0);
    let mut tapes = Vec::with_capacity(nets.len());
    let mut x = input.to_owned();
    for net in nets {
        let (out, tape) = net.forward_batch(x.view(), false, &mut rng)?;
        tapes.push(tape);
        x = out;
    }
    let mut upstream = loss.gradient(x.view());
    let mut analytic = vec![Vec::new(); nets.len()];
    for (k, net) in nets.iter().enumerate().rev() {
        let g = net.backward(&tapes[k], upstream.view())?;
        analytic[k] = g
            .layers
            .iter()
            .flat_map(|l| {
                l.weights
                    .iter()
                    .chain(l.biases.iter())
                    .copied()
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<f64>>();
        upstream = g.input;
    }

    let mut worst = 0.0f64;
    let mut work: Vec<DenseNet> = nets.to_vec();
    for k in 0..work.len() {
        let mut flat = 0usize;
        for li in 0..work[k].layers().len() {
            let (rows, cols) = work[k].layers()[li].weights.dim();
            let n_bias = work[k].layers()[li].biases.len();
            for idx in 0..rows * cols + n_bias {
                let numeric = {
                    let orig = read(&work[k], li, idx);
                    write(&mut work[k], li, idx, orig + h);
                    let plus = chain_forward(&work, input)?;
                    write(&mut work[k], li, idx, orig - h);
                    let minus = chain_forward(&work, input)?;
                    write(&mut work[k], li, idx, orig);
                    loss.difference(plus.view(), minus.view()) / (2.0 * h)
                };
                let a = analytic[k][flat];
                let denom = a.abs().max(numeric.abs()).max(1e-12);
                worst = worst.max((a - numeric).abs() / denom);
                flat += 1;
            }
        }
    }
    Ok(worst)
}

fn read(net: &DenseNet, layer: usize, idx: usize) -> f64 {
    let l = &net.layers()[layer];
    let n_w = l.weights.len();
    if idx < n_w {
        let cols = l.weights.ncols();
        l.weights[[idx / cols, idx % cols]]
    } else {
        l.biases[idx - n_w]
    }
}

fn write(net: &mut DenseNet, layer: usize, idx: usize, value: f64) {
    let l = &mut net.layers_mut()[layer];
    let n_w = l.weights.len();
    if idx < n_w {
        let cols = l.weights.ncols();
        l.weights[[idx / cols, idx % cols]] = value;
    } else {
        l.biases[idx - n_w] = value;
    }
}
