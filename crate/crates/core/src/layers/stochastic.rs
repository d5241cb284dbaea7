use super::{Layer, Mode};
use crate::error::{Error, Result};
use crate::tensor::{sample_gaussian, Rng, Tensor};

/// Elementwise inverted dropout: in training each element is zeroed with
/// probability `rate` and survivors are scaled by `1 / (1 - rate)`. Eval mode
/// is the identity.
#[derive(Clone, Debug)]
pub struct Dropout {
    rate: f64,
    frozen: bool,
    /// Per-element scale of the last train-mode forward; `None` after eval.
    mask: Option<Tensor>,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Dropout> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!("dropout rate must be in [0, 1), got {rate}")));
        }
        Ok(Dropout {
            rate,
            frozen: false,
            mask: None,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    fn draw(&self, shape: &[usize], rng: &mut Rng) -> Result<Tensor> {
        let keep = 1.0 / (1.0 - self.rate);
        let mut mask = Tensor::zeros(shape)?;
        if self.rate == 0.0 {
            mask.fill(1.0);
            return Ok(mask);
        }
        for m in mask.data_mut() {
            *m = if rng.uniform() < self.rate { 0.0 } else { keep };
        }
        Ok(mask)
    }

    /// Draws a mask for inputs of `shape` and reuses it on every train-mode
    /// forward until [`Dropout::unfreeze`].
    pub fn freeze(&mut self, shape: &[usize], rng: &mut Rng) -> Result<()> {
        self.mask = Some(self.draw(shape, rng)?);
        self.frozen = true;
        Ok(())
    }

    pub fn unfreeze(&mut self) {
        self.frozen = false;
    }
}

impl Layer for Dropout {
    fn name(&self) -> String {
        format!("dropout({})", self.rate)
    }

    fn forward(&mut self, input: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        match mode {
            Mode::Eval => {
                if !self.frozen {
                    self.mask = None;
                }
                Ok(input.clone())
            }
            Mode::Train => {
                if !self.frozen {
                    self.mask = Some(self.draw(input.shape(), rng)?);
                }
                let mask = self.mask.as_ref().expect("mask drawn above");
                input.mul(mask)
            }
        }
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        match &self.mask {
            Some(mask) => grad_output.mul(mask),
            None => Ok(grad_output.clone()),
        }
    }

    fn is_deterministic(&self, mode: Mode) -> bool {
        mode == Mode::Eval || self.frozen || self.rate == 0.0
    }
}

/// Additive `N(0, sigma^2)` noise in training; identity in eval. The noise does
/// not depend on the input, so the backward pass is the identity.
#[derive(Clone, Debug)]
pub struct GaussianNoise {
    sigma: f64,
    frozen: Option<Tensor>,
}

impl GaussianNoise {
    pub fn new(sigma: f64) -> Result<GaussianNoise> {
        if !(sigma >= 0.0) {
            return Err(Error::Parameter(format!("noise sigma must be non-negative, got {sigma}")));
        }
        Ok(GaussianNoise { sigma, frozen: None })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn freeze(&mut self, shape: &[usize], rng: &mut Rng) -> Result<()> {
        self.frozen = Some(sample_gaussian(rng, shape, 0.0, self.sigma)?);
        Ok(())
    }

    pub fn unfreeze(&mut self) {
        self.frozen = None;
    }
}

impl Layer for GaussianNoise {
    fn name(&self) -> String {
        format!("gaussian_noise({})", self.sigma)
    }

    fn forward(&mut self, input: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        match (mode, &self.frozen) {
            (Mode::Eval, _) => Ok(input.clone()),
            (Mode::Train, Some(noise)) => input.add(noise),
            (Mode::Train, None) if self.sigma == 0.0 => Ok(input.clone()),
            (Mode::Train, None) => input.add(&sample_gaussian(rng, input.shape(), 0.0, self.sigma)?),
        }
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        Ok(grad_output.clone())
    }

    fn is_deterministic(&self, mode: Mode) -> bool {
        mode == Mode::Eval || self.frozen.is_some() || self.sigma == 0.0
    }
}
