//! Tensor math and the convolutional network trained through the
//! stochastic optimizer.

mod dataset;
pub mod idx;
pub mod layers;
mod loss;
mod network;
mod tensor;
mod train;

pub use dataset::Dataset;
pub use idx::load_idx;
pub use loss::{accuracy, argmax, cross_entropy};
pub use network::{ForwardCache, Layer, LayerCache, LayerSpec, Network, MNIST_CNN_LAYERS};
pub use tensor::{gemm, Scalar, Tensor};
pub use train::{evaluate, train, MetricRecord, MetricsLog, ProtocolConfig};
