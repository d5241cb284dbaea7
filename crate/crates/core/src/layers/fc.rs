use super::{Init, Layer, Mode, Param};
use crate::error::{Error, Result};
use crate::tensor::{gemm, gemm_at, gemm_bt, Rng, Tensor};

/// Fully connected layer, `out = x * W^T + b`.
///
/// Accepts any tensor whose leading axis is the batch; trailing axes are
/// flattened to width `K`. The input gradient comes back in the input's shape.
#[derive(Clone, Debug)]
pub struct FullyConnected {
    pub weight: Param,
    pub bias: Param,
    in_features: usize,
    out_features: usize,
    cached_input: Option<Tensor>,
}

impl FullyConnected {
    pub fn new(in_features: usize, out_features: usize, init: Init, rng: &mut Rng) -> Result<FullyConnected> {
        let weight = init.sample(rng, &[out_features, in_features], in_features, out_features)?;
        FullyConnected::from_params(weight, Tensor::zeros(&[out_features])?)
    }

    pub fn from_params(weight: Tensor, bias: Tensor) -> Result<FullyConnected> {
        let (out_features, in_features) = match weight.shape()[..] {
            [o, i] => (o, i),
            _ => {
                return Err(Error::shape(
                    "fully_connected",
                    format!("weight must be [out, in], got {:?}", weight.shape()),
                ))
            }
        };
        if bias.shape() != [out_features] {
            return Err(Error::shape(
                "fully_connected",
                format!("bias {:?} does not match {out_features} outputs", bias.shape()),
            ));
        }
        Ok(FullyConnected {
            weight: Param::new(weight),
            bias: Param::new(bias),
            in_features,
            out_features,
            cached_input: None,
        })
    }

    pub fn in_features(&self) -> usize {
        self.in_features
    }

    pub fn out_features(&self) -> usize {
        self.out_features
    }

    pub fn param_count(in_features: usize, out_features: usize) -> usize {
        (in_features + 1) * out_features
    }
}

impl Layer for FullyConnected {
    fn name(&self) -> String {
        format!("fully_connected({}->{})", self.in_features, self.out_features)
    }

    fn forward(&mut self, input: &Tensor, _mode: Mode, _rng: &mut Rng) -> Result<Tensor> {
        let n = input.shape()[0];
        let k = input.len() / n;
        if k != self.in_features {
            return Err(Error::shape(
                "fully_connected",
                format!("expected width {}, got {k}", self.in_features),
            ));
        }
        let mut out = Tensor::zeros(&[n, self.out_features])?;
        for row in out.data_mut().chunks_mut(self.out_features) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm_bt(n, k, self.out_features, input.data(), self.weight.value.data(), out.data_mut());
        self.cached_input = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let input = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::State("fully_connected backward without forward".into()))?;
        let n = input.shape()[0];
        let k = self.in_features;
        let o = self.out_features;
        if grad_output.shape() != [n, o] {
            return Err(Error::shape(
                "fully_connected backward",
                format!("upstream gradient {:?}", grad_output.shape()),
            ));
        }
        let dy = grad_output.data();
        gemm_at(o, n, k, dy, input.data(), self.weight.grad.data_mut());
        for row in dy.chunks(o) {
            for (g, &d) in self.bias.grad.data_mut().iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut grad_input = input.zeros_like();
        gemm(n, o, k, dy, self.weight.value.data(), grad_input.data_mut());
        Ok(grad_input)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}
