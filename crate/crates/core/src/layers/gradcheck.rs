use super::{zero_grads, Layer, Mode};
use crate::error::{Error, Result};
use crate::tensor::{sample_uniform, Rng, Tensor};

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Which value produced `max_rel_error`, e.g. `param 0 [13]` or `input [2]`.
    pub worst: String,
    pub checked: usize,
}

impl GradCheck {
    pub(crate) fn new() -> GradCheck {
        GradCheck {
            max_rel_error: 0.0,
            worst: String::from("-"),
            checked: 0,
        }
    }

    pub(crate) fn record(&mut self, analytic: f64, numeric: f64, what: impl FnOnce() -> String) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        if err > self.max_rel_error || err.is_nan() {
            self.max_rel_error = err;
            self.worst = what();
        }
    }
}

const PROBE_SEED: u64 = 0x5eed;

/// Compares a layer's analytic gradients (input and every parameter) with
/// central differences of the probe loss `sum(r * layer(x))`, `r` a fixed
/// uniform tensor.
///
/// Stochastic layers must be frozen (or run in eval mode) first.
pub fn gradient_check(layer: &mut dyn Layer, input: &Tensor, epsilon: f64, mode: Mode) -> Result<GradCheck> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Parameter(format!("epsilon must be in [1e-7, 1e-3], got {epsilon}")));
    }
    if !layer.is_deterministic(mode) {
        return Err(Error::Contract(format!(
            "{} draws fresh randomness in {mode:?} mode; freeze it before checking",
            layer.name()
        )));
    }

    let y = layer.forward(input, mode, &mut Rng::new(0))?;
    let probe = sample_uniform(&mut Rng::new(PROBE_SEED), y.shape(), 1.0)?;
    zero_grads(&mut layer.params_mut());
    let grad_input = layer.backward(&probe)?;
    let param_grads: Vec<Tensor> = layer.params().iter().map(|p| p.grad.clone()).collect();

    let loss = |layer: &mut dyn Layer, x: &Tensor| -> Result<f64> {
        let y = layer.forward(x, mode, &mut Rng::new(0))?;
        Ok(y.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum())
    };

    let mut report = GradCheck::new();
    let mut x = input.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + epsilon;
        let plus = loss(layer, &x)?;
        x.data_mut()[i] = orig - epsilon;
        let minus = loss(layer, &x)?;
        x.data_mut()[i] = orig;
        report.record(grad_input.data()[i], (plus - minus) / (2.0 * epsilon), || format!("input [{i}]"));
    }

    for (p, analytic) in param_grads.iter().enumerate() {
        for j in 0..analytic.len() {
            let orig = layer.params()[p].value.data()[j];
            layer.params_mut()[p].value.data_mut()[j] = orig + epsilon;
            let plus = loss(layer, input)?;
            layer.params_mut()[p].value.data_mut()[j] = orig - epsilon;
            let minus = loss(layer, input)?;
            layer.params_mut()[p].value.data_mut()[j] = orig;
            report.record(analytic.data()[j], (plus - minus) / (2.0 * epsilon), || {
                format!("param {p} [{j}]")
            });
        }
    }
    Ok(report)
}
