//! Layer kinds of the segmentation networks, each with a forward pass and a
//! hand-derived backward pass.
//!
//! Every layer caches what it needs during `forward` and consumes it in
//! `backward`. Parameter gradients accumulate (`+=`) into [`Param::grad`];
//! callers clear them with [`zero_grads`] between steps.

mod activation;
mod blocks;
mod conv;
mod fc;
mod gradcheck;
mod pool;
mod stochastic;

pub use activation::{Relu, Tanh01};
pub use blocks::{Activation, BlockConfig, ConvRelu, DenseBlock, MergeBlock, ResidualBlock};
pub use conv::Conv2d;
pub use fc::FullyConnected;
pub use gradcheck::{gradient_check, relative_error, GradCheck};
pub use pool::{MaxPool2, Upsample2};
pub use stochastic::{Dropout, GaussianNoise};

use crate::error::Result;
use crate::tensor::{sample_uniform, Rng, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable tensor with its accumulated gradient and momentum buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
    pub velocity: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Param {
        Param {
            grad: value.zeros_like(),
            velocity: value.zeros_like(),
            value,
        }
    }
}

/// Weight initialization schemes. Biases always start at zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Init {
    /// `U(-sqrt(6/fan_in), sqrt(6/fan_in))`, for layers feeding a ReLU.
    HeUniform,
    /// `U(-sqrt(6/(fan_in+fan_out)), ..)`, for the final squashing layer.
    GlorotUniform,
    Zeros,
}

impl Init {
    pub(crate) fn sample(self, rng: &mut Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Result<Tensor> {
        match self {
            Init::HeUniform => sample_uniform(rng, shape, (6.0 / fan_in as f64).sqrt()),
            Init::GlorotUniform => {
                sample_uniform(rng, shape, (6.0 / (fan_in + fan_out) as f64).sqrt())
            }
            Init::Zeros => Tensor::zeros(shape),
        }
    }
}

pub trait Layer {
    fn name(&self) -> String;

    fn forward(&mut self, input: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor>;

    /// Given dLoss/dOutput of the most recent forward, returns dLoss/dInput
    /// and accumulates parameter gradients.
    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor>;

    fn params(&self) -> Vec<&Param> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        Vec::new()
    }

    /// False when a forward in `mode` draws fresh randomness.
    fn is_deterministic(&self, _mode: Mode) -> bool {
        true
    }
}

pub fn zero_grads(params: &mut [&mut Param]) {
    for p in params.iter_mut() {
        p.grad.fill(0.0);
    }
}

pub(crate) fn count(params: &[&Param]) -> usize {
    params.iter().map(|p| p.value.len()).sum()
}
