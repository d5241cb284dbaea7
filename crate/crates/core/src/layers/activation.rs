use super::{Layer, Mode};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// `max(0, x)`. The subgradient at exactly zero is zero.
#[derive(Clone, Debug, Default)]
pub struct Relu {
    cached_input: Option<Tensor>,
}

impl Relu {
    pub fn new() -> Relu {
        Relu::default()
    }
}

impl Layer for Relu {
    fn name(&self) -> String {
        "relu".into()
    }

    fn forward(&mut self, input: &Tensor, _mode: Mode, _rng: &mut Rng) -> Result<Tensor> {
        self.cached_input = Some(input.clone());
        Ok(input.map(|x| if x > 0.0 { x } else { 0.0 }))
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let input = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::State("relu backward without forward".into()))?;
        if input.shape() != grad_output.shape() {
            return Err(Error::shape("relu backward", format!("{:?}", grad_output.shape())));
        }
        let data = input
            .data()
            .iter()
            .zip(grad_output.data())
            .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
            .collect();
        Tensor::from_vec(input.shape(), data)
    }
}

/// Hyperbolic tangent rescaled to `(0, 1)`: `(tanh(x) + 1) / 2`.
#[derive(Clone, Debug, Default)]
pub struct Tanh01 {
    cached_tanh: Option<Tensor>,
}

impl Tanh01 {
    pub fn new() -> Tanh01 {
        Tanh01::default()
    }
}

impl Layer for Tanh01 {
    fn name(&self) -> String {
        "tanh01".into()
    }

    fn forward(&mut self, input: &Tensor, _mode: Mode, _rng: &mut Rng) -> Result<Tensor> {
        let t = input.map(f64::tanh);
        let out = t.map(|v| 0.5 * (v + 1.0));
        self.cached_tanh = Some(t);
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let t = self
            .cached_tanh
            .as_ref()
            .ok_or_else(|| Error::State("tanh01 backward without forward".into()))?;
        if t.shape() != grad_output.shape() {
            return Err(Error::shape("tanh01 backward", format!("{:?}", grad_output.shape())));
        }
        let data = t
            .data()
            .iter()
            .zip(grad_output.data())
            .map(|(&v, &g)| g * 0.5 * (1.0 - v * v))
            .collect();
        Tensor::from_vec(t.shape(), data)
    }
}
