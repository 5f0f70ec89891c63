use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::rng::{Label, RngState, Role};

/// Single-channel images with class labels 0..=9.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// `count * rows * cols` pixels in `[0, 1]`.
    pixels: Vec<f32>,
    labels: Vec<u8>,
    rows: usize,
    cols: usize,
}

impl Dataset {
    pub fn new(pixels: Vec<f32>, labels: Vec<u8>, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || pixels.len() != labels.len() * rows * cols {
            return Err(Error::Consistency(format!(
                "{} pixels do not make {} images of {rows}x{cols}",
                pixels.len(),
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l > 9) {
            return Err(Error::Consistency(format!("label {l} outside 0..=9")));
        }
        Ok(Self {
            pixels,
            labels,
            rows,
            cols,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let sz = self.rows * self.cols;
        &self.pixels[i * sz..(i + 1) * sz]
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// First `n` samples (or all of them).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            pixels: self.pixels[..n * self.rows * self.cols].to_vec(),
            labels: self.labels[..n].to_vec(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// Images at `indices` as a `[B, 1, rows, cols]` tensor, with labels.
    pub fn batch<T: Scalar>(&self, indices: &[usize]) -> (Tensor<T>, Vec<u8>) {
        let mut vals = Vec::with_capacity(indices.len() * self.rows * self.cols);
        for &i in indices {
            vals.extend(self.image(i).iter().map(|&p| T::of(p as f64)));
        }
        let t = Tensor::new(vec![indices.len(), 1, self.rows, self.cols], vals).expect("batch shape");
        (t, indices.iter().map(|&i| self.labels[i]).collect())
    }

    /// Seeded 10-class set of 28x28 Gaussian blobs, for running without the
    /// MNIST files. Class `c` puts a blob on a ring around the centre at
    /// angle `2 pi c / 10`; position, width and pixel noise are jittered.
    pub fn synthetic(count: usize, seed: u64) -> Self {
        let (rows, cols) = (28usize, 28usize);
        let mut rng = RngState::new(seed, Label::role(Role::Other));
        let jitter = Normal::new(0.0, 1.2).unwrap();
        let noise = Normal::new(0.0, 0.08).unwrap();
        let mut pixels = Vec::with_capacity(count * rows * cols);
        let mut labels = Vec::with_capacity(count);
        for i in 0..count {
            let c = (i % 10) as u8;
            let angle = std::f64::consts::TAU * c as f64 / 10.0;
            let cy = 13.5 + 7.0 * angle.sin() + jitter.sample(&mut rng);
            let cx = 13.5 + 7.0 * angle.cos() + jitter.sample(&mut rng);
            let sigma = rng.random_range(2.0..3.5);
            for y in 0..rows {
                for x in 0..cols {
                    let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                    let v = (-d2 / (2.0 * sigma * sigma)).exp() + noise.sample(&mut rng);
                    pixels.push(v.clamp(0.0, 1.0) as f32);
                }
            }
            labels.push(c);
        }
        Self {
            pixels,
            labels,
            rows,
            cols,
        }
    }
}
