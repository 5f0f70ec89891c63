use rand::Rng;

use super::layers::{init_uniform, relu_backward, relu_forward, BatchNorm, BatchNormCache, Conv2d, Linear, MaxPool};
use super::tensor::{Scalar, Tensor};
use crate::error::{contract, Result};

/// Layer description used to build a [`Network`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    /// Stride 1, no padding.
    Conv { filters: usize, kernel: usize },
    BatchNorm,
    Relu,
    /// Window and stride both `size`.
    MaxPool { size: usize },
    Linear { outputs: usize },
}

/// The character-recognition CNN: two conv/pool stages and two dense layers,
/// every conv and the first dense layer followed by batch norm and ReLU.
pub const MNIST_CNN_LAYERS: [LayerSpec; 12] = [
    LayerSpec::Conv { filters: 10, kernel: 5 },
    LayerSpec::BatchNorm,
    LayerSpec::Relu,
    LayerSpec::MaxPool { size: 2 },
    LayerSpec::Conv { filters: 20, kernel: 5 },
    LayerSpec::BatchNorm,
    LayerSpec::Relu,
    LayerSpec::MaxPool { size: 2 },
    LayerSpec::Linear { outputs: 50 },
    LayerSpec::BatchNorm,
    LayerSpec::Relu,
    LayerSpec::Linear { outputs: 10 },
];

#[derive(Clone, Debug)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    BatchNorm(BatchNorm<T>),
    Relu,
    MaxPool(MaxPool),
    Linear(Linear<T>),
}

/// Per-layer state saved by [`Network::forward`] for [`Network::backward`].
#[derive(Clone, Debug)]
pub enum LayerCache<T> {
    Conv { cols: Vec<T> },
    BatchNorm(BatchNormCache<T>),
    Relu { output: Tensor<T> },
    MaxPool { argmax: Vec<usize>, in_shape: Vec<usize> },
    Linear { input: Tensor<T> },
}

#[derive(Clone, Debug, Default)]
pub struct ForwardCache<T> {
    layers: Vec<LayerCache<T>>,
}

impl<T> ForwardCache<T> {
    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

/// Sequential network with named parameter tensors.
#[derive(Clone, Debug)]
pub struct Network<T> {
    input: [usize; 3],
    layers: Vec<Layer<T>>,
    shapes: Vec<Vec<usize>>,
}

impl<T: Scalar> Network<T> {
    /// Build from layer specs for `[channels, height, width]` input.
    pub fn new<R: Rng + ?Sized>(input: [usize; 3], specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut shape: Vec<usize> = input.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        let mut shapes = Vec::with_capacity(specs.len());
        for spec in specs {
            let layer = match *spec {
                LayerSpec::Conv { filters, kernel } => {
                    let [c, h, w] = match shape[..] {
                        [c, h, w] => [c, h, w],
                        _ => return Err(contract(format!("conv needs a [c, h, w] input, got {shape:?}"))),
                    };
                    if kernel == 0 || kernel > h || kernel > w {
                        return Err(contract(format!("kernel {kernel} does not fit {h}x{w}")));
                    }
                    let fan_in = c * kernel * kernel;
                    let conv = Conv2d {
                        in_channels: c,
                        out_channels: filters,
                        kernel,
                        in_h: h,
                        in_w: w,
                        weight: init_uniform(filters * fan_in, fan_in, rng),
                        bias: init_uniform(filters, fan_in, rng),
                    };
                    let (oh, ow) = conv.out_hw();
                    shape = vec![filters, oh, ow];
                    Layer::Conv(conv)
                }
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNorm::new(shape[0])),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool { size } => {
                    if shape.len() != 3 || size == 0 || shape[1] < size || shape[2] < size {
                        return Err(contract(format!("pool {size} does not fit {shape:?}")));
                    }
                    shape = vec![shape[0], shape[1] / size, shape[2] / size];
                    Layer::MaxPool(MaxPool { size })
                }
                LayerSpec::Linear { outputs } => {
                    let fan_in: usize = shape.iter().product();
                    shape = vec![outputs];
                    Layer::Linear(Linear {
                        in_features: fan_in,
                        out_features: outputs,
                        weight: init_uniform(outputs * fan_in, fan_in, rng),
                        bias: init_uniform(outputs, fan_in, rng),
                    })
                }
            };
            layers.push(layer);
            shapes.push(shape.clone());
        }
        Ok(Self { input, layers, shapes })
    }

    /// The MNIST network for 1x28x28 images.
    pub fn mnist_cnn<R: Rng + ?Sized>(rng: &mut R) -> Result<Self> {
        Self::new([1, 28, 28], &MNIST_CNN_LAYERS, rng)
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input
    }

    /// Per-sample output shape of every layer.
    pub fn layer_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Set the running-statistics momentum of every batch-norm layer.
    pub fn set_bn_momentum(&mut self, momentum: f64) {
        for l in &mut self.layers {
            if let Layer::BatchNorm(b) = l {
                b.momentum = momentum;
            }
        }
    }

    pub fn num_classes(&self) -> usize {
        self.shapes.last().map(|s| s.iter().product()).unwrap_or(0)
    }

    /// Trainable tensors in a fixed order: weight then bias (or gamma then
    /// beta) for each layer that has parameters.
    pub fn params(&self) -> Vec<&[T]> {
        let mut out: Vec<&[T]> = Vec::new();
        for l in &self.layers {
            match l {
                Layer::Conv(c) => out.extend([&c.weight[..], &c.bias[..]]),
                Layer::BatchNorm(b) => out.extend([&b.gamma[..], &b.beta[..]]),
                Layer::Linear(f) => out.extend([&f.weight[..], &f.bias[..]]),
                Layer::Relu | Layer::MaxPool(_) => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out: Vec<&mut Vec<T>> = Vec::new();
        for l in &mut self.layers {
            match l {
                Layer::Conv(c) => out.extend([&mut c.weight, &mut c.bias]),
                Layer::BatchNorm(b) => out.extend([&mut b.gamma, &mut b.beta]),
                Layer::Linear(f) => out.extend([&mut f.weight, &mut f.bias]),
                Layer::Relu | Layer::MaxPool(_) => {}
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Forward pass over a `[batch, c, h, w]` tensor, returning logits
    /// `[batch, classes]`. Batch norm uses batch statistics (and updates its
    /// running estimates) when `training`, running statistics otherwise.
    pub fn forward(&mut self, batch: &Tensor<T>, training: bool) -> Result<(Tensor<T>, ForwardCache<T>)> {
        let s = batch.shape();
        if s.len() != 4 || s[1..] != self.input[..] || s[0] == 0 {
            return Err(contract(format!(
                "expected a [B, {}, {}, {}] batch, got {s:?}",
                self.input[0], self.input[1], self.input[2]
            )));
        }
        let mut x = batch.clone();
        let mut caches = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let (y, cache) = match layer {
                Layer::Conv(c) => {
                    let (y, cols) = c.forward(&x);
                    (y, LayerCache::Conv { cols })
                }
                Layer::BatchNorm(bn) => {
                    let (y, c) = bn.forward(&x, training);
                    (y, LayerCache::BatchNorm(c))
                }
                Layer::Relu => {
                    let y = relu_forward(&x);
                    (y.clone(), LayerCache::Relu { output: y })
                }
                Layer::MaxPool(p) => {
                    let (y, argmax) = p.forward(&x);
                    let in_shape = x.shape().to_vec();
                    (y, LayerCache::MaxPool { argmax, in_shape })
                }
                Layer::Linear(f) => {
                    let b = x.batch();
                    let flat = x.reshape(vec![b, f.in_features])?;
                    let y = f.forward(&flat)?;
                    (y, LayerCache::Linear { input: flat })
                }
            };
            caches.push(cache);
            x = y;
        }
        Ok((x, ForwardCache { layers: caches }))
    }

    /// Gradients of every trainable tensor, in [`Network::params`] order.
    pub fn backward(&self, cache: &ForwardCache<T>, dlogits: &Tensor<T>) -> Result<Vec<Vec<T>>> {
        if cache.layers.len() != self.layers.len() {
            return Err(contract("backward needs the cache of a forward pass through this network"));
        }
        let mut grads: Vec<Vec<T>> = Vec::new();
        let mut dy = dlogits.clone();
        for (i, (layer, c)) in self.layers.iter().zip(&cache.layers).enumerate().rev() {
            dy = match (layer, c) {
                (Layer::Conv(conv), LayerCache::Conv { cols }) => {
                    // The input image needs no gradient.
                    let (dx, dw, db) = conv.backward(cols, &dy, i > 0);
                    grads.push(db);
                    grads.push(dw);
                    match dx {
                        Some(dx) => dx,
                        None => Tensor::zeros(vec![dy.batch(), conv.in_channels, conv.in_h, conv.in_w]),
                    }
                }
                (Layer::BatchNorm(bn), LayerCache::BatchNorm(bc)) => {
                    let (dx, dg, db) = bn.backward(bc, &dy);
                    grads.push(db);
                    grads.push(dg);
                    dx
                }
                (Layer::Relu, LayerCache::Relu { output }) => {
                    let dy = dy.reshape(output.shape().to_vec())?;
                    relu_backward(output, &dy)
                }
                (Layer::MaxPool(p), LayerCache::MaxPool { argmax, in_shape }) => {
                    let dy = dy.reshape(vec![in_shape[0], in_shape[1], in_shape[2] / p.size, in_shape[3] / p.size])?;
                    p.backward(argmax, in_shape, &dy)
                }
                (Layer::Linear(f), LayerCache::Linear { input }) => {
                    let (dx, dw, db) = f.backward(input, &dy);
                    grads.push(db);
                    grads.push(dw);
                    // Restore the spatial shape of the layer's input.
                    let shape = if i == 0 {
                        let mut s = vec![dx.batch()];
                        s.extend_from_slice(&self.input);
                        s
                    } else {
                        let mut s = vec![dx.batch()];
                        s.extend_from_slice(&self.shapes[i - 1]);
                        s
                    };
                    dx.reshape(shape)?
                }
                _ => return Err(contract(format!("cache entry {i} does not match its layer"))),
            };
        }
        grads.reverse();
        Ok(grads)
    }
}
