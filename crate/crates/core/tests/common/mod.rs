#![allow(dead_code)]

use memsc::nn::{cross_entropy, LayerSpec, Network, Tensor};
use memsc::rng::{Label, RngState, Role};
use rand::Rng;

/// Small conv/BN/pool/dense stack on 6x6 input.
pub const REDUCED_LAYERS: [LayerSpec; 8] = [
    LayerSpec::Conv { filters: 3, kernel: 3 },
    LayerSpec::BatchNorm,
    LayerSpec::Relu,
    LayerSpec::MaxPool { size: 2 },
    LayerSpec::Linear { outputs: 6 },
    LayerSpec::BatchNorm,
    LayerSpec::Relu,
    LayerSpec::Linear { outputs: 10 },
];

/// Worst relative error between backward and central differences with
/// `h = 1e-4`, over every parameter of the reduced network. Gradients below
/// `floor` in magnitude are compared against `floor`.
pub fn reduced_gradient_error(seed: u64, floor: f64) -> f64 {
    let mut r = RngState::new(seed, Label::role(Role::Init));
    let mut net = Network::<f64>::new([1, 6, 6], &REDUCED_LAYERS, &mut r).unwrap();
    let batch = 5;
    let x: Vec<f64> = (0..batch * 36).map(|_| r.random_range(0.0..1.0)).collect();
    let x = Tensor::new(vec![batch, 1, 6, 6], x).unwrap();
    let labels: Vec<u8> = (0..batch).map(|i| (i * 3 % 10) as u8).collect();

    let (logits, cache) = net.forward(&x, true).unwrap();
    let (_, dlogits) = cross_entropy(&logits, &labels).unwrap();
    let analytic = net.backward(&cache, &dlogits).unwrap();

    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for (t, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let mut loss_at = |delta: f64| {
                let orig = net.params_mut()[t][i];
                net.params_mut()[t][i] = orig + delta;
                let (lg, _) = net.forward(&x, true).unwrap();
                net.params_mut()[t][i] = orig;
                cross_entropy(&lg, &labels).unwrap().0
            };
            let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst = worst.max(err);
        }
    }
    worst
}

/// MNIST directory: `MEMSC_MNIST_DIR` or `data/mnist` at the repository root.
pub fn mnist_dir() -> std::path::PathBuf {
    std::env::var_os("MEMSC_MNIST_DIR")
        .map(Into::into)
        .unwrap_or_else(|| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}
