use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use ser_adapt::nn::{grad_check_chain, Activation, DenseNet, ScalarLoss, SquaredError};
use ser_adapt::rng::seeded;

fn activation(i: u8) -> Activation {
    [Activation::Relu, Activation::Sigmoid, Activation::Linear][i as usize % 3]
}

fn random_net(dims: &[usize], acts: &[u8], seed: u64) -> (DenseNet, Array2<f64>, Array2<f64>) {
    let mut rng = seeded(seed);
    let acts: Vec<Activation> = acts.iter().map(|&a| activation(a)).collect();
    let dropout_after = (0..acts.len() - 1).collect();
    let net = DenseNet::glorot(dims, &acts, 0.5, dropout_after, &mut rng).unwrap();
    let input = Array2::from_shape_fn((2, dims[0]), |_| rng.sample::<f64, _>(StandardNormal));
    let target = Array2::from_shape_fn((2, dims[dims.len() - 1]), |_| {
        rng.sample::<f64, _>(StandardNormal)
    });
    (net, input, target)
}

fn shapes() -> impl Strategy<Value = (Vec<usize>, Vec<u8>)> {
    (1usize..=3).prop_flat_map(|depth| {
        (
            prop::collection::vec(1usize..=96, depth + 1),
            prop::collection::vec(0u8..3, depth),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn backprop_matches_central_differences((dims, acts) in shapes(), seed in any::<u64>()) {
        // bound the parameter count so each case stays fast
        prop_assume!(dims.windows(2).map(|w| w[0] * w[1]).sum::<usize>() <= 6000);
        let (net, input, target) = random_net(&dims, &acts, seed);
        let err = grad_check_chain(std::slice::from_ref(&net), &SquaredError { target }, input.view(), 1e-5).unwrap();
        prop_assert!(err < 1e-4, "{:?} {:?}: {}", dims, acts, err);
    }

    #[test]
    fn squared_error_difference_matches_values(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let mut draw = || Array2::from_shape_fn((3, 4), |_| rng.sample::<f64, _>(StandardNormal));
        let (a, b, t) = (draw(), draw(), draw());
        let loss = SquaredError { target: t };
        let direct = loss.value(a.view()) - loss.value(b.view());
        prop_assert!((loss.difference(a.view(), b.view()) - direct).abs() < 1e-12);
    }
}
