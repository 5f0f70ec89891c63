//! Layer kernels: forward pass, cached state, and backward pass.
//!
//! Activations are laid out `[batch, channels, height, width]` for spatial
//! layers and `[batch, features]` after the first fully connected layer.

use rand::Rng;

use super::tensor::{gemm, Scalar, Tensor};
use crate::error::{contract, Result};

/// Stride-1, unpadded 2-D convolution.
#[derive(Clone, Debug)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub in_h: usize,
    pub in_w: usize,
    /// `[out, in * k * k]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn out_hw(&self) -> (usize, usize) {
        (self.in_h + 1 - self.kernel, self.in_w + 1 - self.kernel)
    }

    fn patch(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn im2col(&self, x: &[T], cols: &mut [T]) {
        let (oh, ow) = self.out_hw();
        let k = self.kernel;
        let plane = self.in_h * self.in_w;
        for c in 0..self.in_channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                    for i in 0..oh {
                        let src = c * plane + (i + ki) * self.in_w + kj;
                        dst[i * ow..(i + 1) * ow].copy_from_slice(&x[src..src + ow]);
                    }
                }
            }
        }
    }

    fn col2im(&self, cols: &[T], dx: &mut [T]) {
        let (oh, ow) = self.out_hw();
        let k = self.kernel;
        let plane = self.in_h * self.in_w;
        for c in 0..self.in_channels {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (c * k + ki) * k + kj;
                    let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                    for i in 0..oh {
                        let base = c * plane + (i + ki) * self.in_w + kj;
                        for (d, &s) in dx[base..base + ow].iter_mut().zip(&src[i * ow..(i + 1) * ow]) {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &Tensor<T>) -> (Tensor<T>, Vec<T>) {
        let b = x.batch();
        let (oh, ow) = self.out_hw();
        let hw = oh * ow;
        let patch = self.patch();
        let in_size = self.in_channels * self.in_h * self.in_w;
        let mut cols = vec![T::zero(); b * patch * hw];
        let mut out = vec![T::zero(); b * self.out_channels * hw];
        for n in 0..b {
            let col = &mut cols[n * patch * hw..(n + 1) * patch * hw];
            self.im2col(&x.values()[n * in_size..(n + 1) * in_size], col);
            let o = &mut out[n * self.out_channels * hw..(n + 1) * self.out_channels * hw];
            for (c, chunk) in o.chunks_mut(hw).enumerate() {
                chunk.iter_mut().for_each(|v| *v = self.bias[c]);
            }
            gemm(self.out_channels, patch, hw, &self.weight, false, col, false, o, true);
        }
        let t = Tensor::new(vec![b, self.out_channels, oh, ow], out).expect("conv output shape");
        (t, cols)
    }

    /// Returns `(dx, dweight, dbias)`; `dx` is skipped when not needed.
    pub fn backward(
        &self,
        cols: &[T],
        dy: &Tensor<T>,
        need_dx: bool,
    ) -> (Option<Tensor<T>>, Vec<T>, Vec<T>) {
        let b = dy.batch();
        let (oh, ow) = self.out_hw();
        let hw = oh * ow;
        let patch = self.patch();
        let in_size = self.in_channels * self.in_h * self.in_w;
        let mut dw = vec![T::zero(); self.weight.len()];
        let mut db = vec![T::zero(); self.out_channels];
        let mut dx = need_dx.then(|| vec![T::zero(); b * in_size]);
        let mut dcols = vec![T::zero(); patch * hw];
        for n in 0..b {
            let g = &dy.values()[n * self.out_channels * hw..(n + 1) * self.out_channels * hw];
            let col = &cols[n * patch * hw..(n + 1) * patch * hw];
            gemm(self.out_channels, hw, patch, g, false, col, true, &mut dw, true);
            for (c, chunk) in g.chunks(hw).enumerate() {
                db[c] = db[c] + chunk.iter().copied().sum::<T>();
            }
            if let Some(dx) = dx.as_mut() {
                gemm(patch, self.out_channels, hw, &self.weight, true, g, false, &mut dcols, false);
                self.col2im(&dcols, &mut dx[n * in_size..(n + 1) * in_size]);
            }
        }
        let dx = dx.map(|v| {
            Tensor::new(vec![b, self.in_channels, self.in_h, self.in_w], v).expect("conv dx shape")
        });
        (dx, dw, db)
    }
}

/// Batch normalization over channels (and spatial positions, if any).
#[derive(Clone, Debug)]
pub struct BatchNorm<T> {
    pub channels: usize,
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub eps: f64,
    /// Weight of the current batch in the running statistics.
    pub momentum: f64,
}

/// State kept from a batch-norm forward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub x_hat: Vec<T>,
    pub inv_std: Vec<T>,
    pub training: bool,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            channels,
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    /// `(batch, spatial)` for an activation tensor.
    fn dims(&self, x: &Tensor<T>) -> (usize, usize) {
        let b = x.batch();
        (b, x.len() / (b * self.channels))
    }

    pub fn forward(&mut self, x: &Tensor<T>, training: bool) -> (Tensor<T>, BatchNormCache<T>) {
        let (b, s) = self.dims(x);
        let c_n = self.channels;
        let m = (b * s) as f64;
        let eps = T::of(self.eps);
        let xs = x.values();
        let mut x_hat = vec![T::zero(); xs.len()];
        let mut out = vec![T::zero(); xs.len()];
        let mut inv_std = vec![T::zero(); c_n];
        let idx = move |n: usize, c: usize| (n * c_n + c) * s;
        for c in 0..c_n {
            let (mean, var) = if training {
                // Accumulate in f64 so f32 batches keep a tight mean.
                let mut sum = 0.0;
                let mut sq = 0.0;
                for n in 0..b {
                    for &v in &xs[idx(n, c)..idx(n, c) + s] {
                        let v = v.to_f64().unwrap();
                        sum += v;
                        sq += v * v;
                    }
                }
                let mean = sum / m;
                let var = (sq / m - mean * mean).max(0.0);
                let unbiased = if m > 1.0 { var * m / (m - 1.0) } else { var };
                let mo = T::of(self.momentum);
                self.running_mean[c] = (T::one() - mo) * self.running_mean[c] + mo * T::of(mean);
                self.running_var[c] = (T::one() - mo) * self.running_var[c] + mo * T::of(unbiased);
                (T::of(mean), T::of(var))
            } else {
                (self.running_mean[c], self.running_var[c])
            };
            let is = T::one() / (var + eps).sqrt();
            inv_std[c] = is;
            for n in 0..b {
                let r = idx(n, c)..idx(n, c) + s;
                for ((h, o), &v) in x_hat[r.clone()].iter_mut().zip(&mut out[r.clone()]).zip(&xs[r]) {
                    *h = (v - mean) * is;
                    *o = self.gamma[c] * *h + self.beta[c];
                }
            }
        }
        let y = Tensor::new(x.shape().to_vec(), out).expect("bn output shape");
        (
            y,
            BatchNormCache {
                x_hat,
                inv_std,
                training,
            },
        )
    }

    /// Returns `(dx, dgamma, dbeta)`.
    pub fn backward(&self, cache: &BatchNormCache<T>, dy: &Tensor<T>) -> (Tensor<T>, Vec<T>, Vec<T>) {
        let (b, s) = self.dims(dy);
        let c_n = self.channels;
        let m = T::of((b * s) as f64);
        let dys = dy.values();
        let mut dx = vec![T::zero(); dys.len()];
        let mut dgamma = vec![T::zero(); c_n];
        let mut dbeta = vec![T::zero(); c_n];
        let idx = move |n: usize, c: usize| (n * c_n + c) * s;
        for c in 0..c_n {
            let mut sum_dy = T::zero();
            let mut sum_dy_xh = T::zero();
            for n in 0..b {
                let r = idx(n, c)..idx(n, c) + s;
                for (&g, &h) in dys[r.clone()].iter().zip(&cache.x_hat[r]) {
                    sum_dy = sum_dy + g;
                    sum_dy_xh = sum_dy_xh + g * h;
                }
            }
            dgamma[c] = sum_dy_xh;
            dbeta[c] = sum_dy;
            let scale = self.gamma[c] * cache.inv_std[c];
            for n in 0..b {
                let r = idx(n, c)..idx(n, c) + s;
                for ((d, &g), &h) in dx[r.clone()].iter_mut().zip(&dys[r.clone()]).zip(&cache.x_hat[r]) {
                    *d = if cache.training {
                        scale / m * (m * g - sum_dy - h * sum_dy_xh)
                    } else {
                        scale * g
                    };
                }
            }
        }
        (
            Tensor::new(dy.shape().to_vec(), dx).expect("bn dx shape"),
            dgamma,
            dbeta,
        )
    }
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let v = x.values().iter().map(|&v| v.max(T::zero())).collect();
    Tensor::new(x.shape().to_vec(), v).expect("relu shape")
}

/// Gradient through ReLU given the layer's output.
pub fn relu_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let v = y
        .values()
        .iter()
        .zip(dy.values())
        .map(|(&o, &g)| if o > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(dy.shape().to_vec(), v).expect("relu shape")
}

/// Max pooling with a square window and stride equal to the window.
#[derive(Clone, Copy, Debug)]
pub struct MaxPool {
    pub size: usize,
}

impl MaxPool {
    /// Returns the pooled tensor and the flat input index of every maximum.
    pub fn forward<T: Scalar>(&self, x: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
        let [b, c, h, w] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
        let k = self.size;
        let (oh, ow) = (h / k, w / k);
        let xs = x.values();
        let mut out = Vec::with_capacity(b * c * oh * ow);
        let mut arg = Vec::with_capacity(out.capacity());
        for plane in 0..b * c {
            let base = plane * h * w;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = base + i * k * w + j * k;
                    for di in 0..k {
                        for dj in 0..k {
                            let p = base + (i * k + di) * w + j * k + dj;
                            if xs[p] > xs[best] {
                                best = p;
                            }
                        }
                    }
                    out.push(xs[best]);
                    arg.push(best);
                }
            }
        }
        (
            Tensor::new(vec![b, c, oh, ow], out).expect("pool shape"),
            arg,
        )
    }

    pub fn backward<T: Scalar>(&self, argmax: &[usize], in_shape: &[usize], dy: &Tensor<T>) -> Tensor<T> {
        let mut dx = Tensor::zeros(in_shape.to_vec());
        let d = dx.values_mut();
        for (&a, &g) in argmax.iter().zip(dy.values()) {
            d[a] = d[a] + g;
        }
        dx
    }
}

/// Fully connected layer, `y = x W^T + b`.
#[derive(Clone, Debug)]
pub struct Linear<T> {
    pub in_features: usize,
    pub out_features: usize,
    /// `[out, in]`
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let b = x.batch();
        if x.len() != b * self.in_features {
            return Err(contract(format!(
                "linear layer expects {} features, input shape {:?}",
                self.in_features,
                x.shape()
            )));
        }
        let mut out = Vec::with_capacity(b * self.out_features);
        for _ in 0..b {
            out.extend_from_slice(&self.bias);
        }
        gemm(b, self.in_features, self.out_features, x.values(), false, &self.weight, true, &mut out, true);
        Tensor::new(vec![b, self.out_features], out)
    }

    /// Returns `(dx, dweight, dbias)`; `dx` has the flattened input shape.
    pub fn backward(&self, x: &Tensor<T>, dy: &Tensor<T>) -> (Tensor<T>, Vec<T>, Vec<T>) {
        let b = dy.batch();
        let mut dw = vec![T::zero(); self.weight.len()];
        gemm(self.out_features, b, self.in_features, dy.values(), true, x.values(), false, &mut dw, false);
        let mut db = vec![T::zero(); self.out_features];
        for row in dy.values().chunks(self.out_features) {
            for (d, &g) in db.iter_mut().zip(row) {
                *d = *d + g;
            }
        }
        let mut dx = vec![T::zero(); b * self.in_features];
        gemm(b, self.out_features, self.in_features, dy.values(), false, &self.weight, false, &mut dx, false);
        (
            Tensor::new(x.shape().to_vec(), dx).expect("linear dx shape"),
            dw,
            db,
        )
    }
}

/// Uniform `[-s, s]` with `s = sqrt(1 / fan_in)`, clamped to `[-1, 1]`.
pub fn init_uniform<T: Scalar, R: Rng + ?Sized>(n: usize, fan_in: usize, rng: &mut R) -> Vec<T> {
    let s = (1.0 / fan_in as f64).sqrt();
    (0..n)
        .map(|_| T::of(rng.random_range(-s..=s).clamp(-1.0, 1.0)))
        .collect()
}
