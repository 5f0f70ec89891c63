//! Simulator of a hybrid CMOS–memristor stochastic-computing processor that
//! performs deep-learning parameter updates on stochastic bit streams.
//!
//! * [`sc`]: stochastic numbers, XNOR/AND multiplication, MUX scaled
//!   addition, negation, Bernoulli and LFSR generators.
//! * [`device`]: CBRAM switching probability, its inverse, and the
//!   exponential switching-time law.
//! * [`crossbar`]: tile planning, in-array stream generation, and the area
//!   and power model.
//! * [`optimizer`]: SGD and momentum updates over streams, with a
//!   floating-point baseline and a binomial fast path.
//! * [`nn`]: tensors, the convolutional network, and the training loop.
//! * [`experiment`]: configuration, sweeps, CSV and cost-report output.
//!
//! ```
//! use memsc::rng::{Label, RngState, Role};
//! use memsc::sc::{decode, encode, xnor_mul, Priori};
//!
//! let a = encode(0.5, 16384, Priori::Bipolar, &mut RngState::new(1, Label::role(Role::Theta)))?;
//! let b = encode(-0.4, 16384, Priori::Bipolar, &mut RngState::new(1, Label::role(Role::Gradient)))?;
//! let product = decode(&xnor_mul(&a, &b)?);
//! assert!((product - (-0.2)).abs() < 0.05);
//! # Ok::<(), memsc::Error>(())
//! ```

pub mod config;
pub mod crossbar;
pub mod device;
mod error;
pub mod experiment;
pub mod nn;
pub mod optimizer;
pub mod rng;
pub mod sc;
pub mod stats;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/stochastic-numbers.md")]
    mod stochastic_numbers {}
    #[doc = include_str!("../../../book/src/device.md")]
    mod device {}
    #[doc = include_str!("../../../book/src/crossbar.md")]
    mod crossbar {}
    #[doc = include_str!("../../../book/src/optimizer.md")]
    mod optimizer {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
