use rayon::prelude::*;

use super::{Init, Layer, Mode, Param};
use crate::error::{Error, Result};
use crate::tensor::{gemm, gemm_at, gemm_bt, Rng, Tensor};

const K: usize = 3;

/// 3x3 convolution, stride 1, zero padding 1 ("same").
///
/// `out[n,o,y,x] = bias[o] + sum_{c,dy,dx} w[o,c,dy,dx] * in[n,c,y+dy-1,x+dx-1]`
#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    in_channels: usize,
    out_channels: usize,
    cached_input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(in_channels: usize, out_channels: usize, init: Init, rng: &mut Rng) -> Result<Conv2d> {
        let shape = [out_channels, in_channels, K, K];
        let weight = init.sample(rng, &shape, in_channels * K * K, out_channels * K * K)?;
        Conv2d::from_params(weight, Tensor::zeros(&[out_channels])?)
    }

    pub fn from_params(weight: Tensor, bias: Tensor) -> Result<Conv2d> {
        let (out_channels, in_channels) = match weight.shape()[..] {
            [o, i, K, K] => (o, i),
            _ => {
                return Err(Error::shape(
                    "conv2d",
                    format!("kernel must be [out, in, 3, 3], got {:?}", weight.shape()),
                ))
            }
        };
        if bias.shape() != [out_channels] {
            return Err(Error::shape(
                "conv2d",
                format!("bias {:?} does not match {out_channels} filters", bias.shape()),
            ));
        }
        Ok(Conv2d {
            weight: Param::new(weight),
            bias: Param::new(bias),
            in_channels,
            out_channels,
            cached_input: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn param_count(in_channels: usize, out_channels: usize) -> usize {
        (in_channels * K * K + 1) * out_channels
    }
}

/// Unfolds one `[C, H, W]` image into `[C*9, H*W]` patch columns.
fn im2col(input: &[f64], c: usize, h: usize, w: usize, col: &mut [f64]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &input[ch * hw..(ch + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &mut col[((ch * K + ky) * K + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    for x in 0..w {
                        let sx = x as isize + kx as isize - 1;
                        row[y * w + x] = if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                            plane[sy as usize * w + sx as usize]
                        } else {
                            0.0
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back onto the image.
fn col2im(col: &[f64], c: usize, h: usize, w: usize, out: &mut [f64]) {
    let hw = h * w;
    for ch in 0..c {
        let plane = &mut out[ch * hw..(ch + 1) * hw];
        for ky in 0..K {
            for kx in 0..K {
                let row = &col[((ch * K + ky) * K + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for x in 0..w {
                        let sx = x as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            plane[sy as usize * w + sx as usize] += row[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

impl Layer for Conv2d {
    fn name(&self) -> String {
        format!("conv2d({}->{})", self.in_channels, self.out_channels)
    }

    fn forward(&mut self, input: &Tensor, _mode: Mode, _rng: &mut Rng) -> Result<Tensor> {
        let (n, c, h, w) = input.dims4()?;
        if c != self.in_channels {
            return Err(Error::shape(
                "conv2d",
                format!("expected {} input channels, got {c}", self.in_channels),
            ));
        }
        let hw = h * w;
        let ck = c * K * K;
        let oc = self.out_channels;
        let mut out = Tensor::zeros(&[n, oc, h, w])?;
        let (weight, bias) = (self.weight.value.data(), self.bias.value.data());
        out.data_mut()
            .par_chunks_mut(oc * hw)
            .zip(input.data().par_chunks(c * hw))
            .for_each(|(out_b, in_b)| {
                let mut col = vec![0.0; ck * hw];
                im2col(in_b, c, h, w, &mut col);
                for (o, row) in out_b.chunks_mut(hw).enumerate() {
                    row.fill(bias[o]);
                }
                gemm(oc, ck, hw, weight, &col, out_b);
            });
        self.cached_input = Some(input.clone());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let input = self
            .cached_input
            .as_ref()
            .ok_or_else(|| Error::State("conv2d backward without forward".into()))?;
        let (n, c, h, w) = input.dims4()?;
        if grad_output.shape() != [n, self.out_channels, h, w] {
            return Err(Error::shape(
                "conv2d backward",
                format!("upstream gradient {:?}", grad_output.shape()),
            ));
        }
        let hw = h * w;
        let ck = c * K * K;
        let oc = self.out_channels;
        let mut grad_input = input.zeros_like();
        let weight = self.weight.value.data();
        // Per-sample parameter gradients, summed below in batch order so the
        // result does not depend on thread scheduling.
        let partial: Vec<(Vec<f64>, Vec<f64>)> = grad_input
            .data_mut()
            .par_chunks_mut(c * hw)
            .zip(input.data().par_chunks(c * hw))
            .zip(grad_output.data().par_chunks(oc * hw))
            .map(|((gin_b, in_b), dy)| {
                let mut col = vec![0.0; ck * hw];
                im2col(in_b, c, h, w, &mut col);
                let mut dw = vec![0.0; oc * ck];
                gemm_bt(oc, hw, ck, dy, &col, &mut dw);
                let db = dy.chunks(hw).map(|row| row.iter().sum::<f64>()).collect();
                col.fill(0.0);
                gemm_at(ck, oc, hw, weight, dy, &mut col);
                col2im(&col, c, h, w, gin_b);
                (dw, db)
            })
            .collect();
        for (dw, db) in partial {
            for (g, d) in self.weight.grad.data_mut().iter_mut().zip(dw) {
                *g += d;
            }
            for (g, d) in self.bias.grad.data_mut().iter_mut().zip(db) {
                *g += d;
            }
        }
        Ok(grad_input)
    }

    fn params(&self) -> Vec<&Param> {
        vec![&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.weight, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_2x2() -> Tensor {
        Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()
    }

    fn run(weight: Vec<f64>, bias: f64, input: &Tensor) -> Tensor {
        let mut conv = Conv2d::from_params(
            Tensor::from_vec(&[1, 1, 3, 3], weight).unwrap(),
            Tensor::from_vec(&[1], vec![bias]).unwrap(),
        )
        .unwrap();
        conv.forward(input, Mode::Eval, &mut Rng::new(0)).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let mut delta = vec![0.0; 9];
        delta[4] = 1.0;
        assert_eq!(run(delta, 0.0, &image_2x2()).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn all_ones_kernel() {
        // Every 3x3 window over the zero-padded 2x2 image covers all four pixels.
        assert_eq!(run(vec![1.0; 9], 0.0, &image_2x2()).data(), &[10.0; 4]);
    }

    #[test]
    fn bias_only() {
        assert_eq!(run(vec![0.0; 9], 5.0, &image_2x2()).data(), &[5.0; 4]);
    }

    #[test]
    fn brute_force_matches() {
        let mut rng = Rng::new(5);
        let mut conv = Conv2d::new(2, 3, Init::HeUniform, &mut rng).unwrap();
        conv.bias.value = crate::tensor::sample_uniform(&mut rng, &[3], 1.0).unwrap();
        let x = crate::tensor::sample_uniform(&mut rng, &[2, 2, 4, 5], 1.0).unwrap();
        let y = conv.forward(&x, Mode::Eval, &mut rng).unwrap();
        let wt = conv.weight.value.data();
        for n in 0..2 {
            for o in 0..3 {
                for yy in 0..4isize {
                    for xx in 0..5isize {
                        let mut acc = conv.bias.value.data()[o];
                        for c in 0..2 {
                            for dy in 0..3isize {
                                for dx in 0..3isize {
                                    let (sy, sx) = (yy + dy - 1, xx + dx - 1);
                                    if (0..4).contains(&sy) && (0..5).contains(&sx) {
                                        acc += wt[((o * 2 + c) * 3 + dy as usize) * 3 + dx as usize]
                                            * x.data()[((n * 2 + c) * 4 + sy as usize) * 5 + sx as usize];
                                    }
                                }
                            }
                        }
                        let got = y.data()[((n * 3 + o) * 4 + yy as usize) * 5 + xx as usize];
                        assert!((got - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn channel_mismatch() {
        let mut conv = Conv2d::new(2, 1, Init::HeUniform, &mut Rng::new(0)).unwrap();
        let x = Tensor::zeros(&[1, 3, 2, 2]).unwrap();
        assert!(matches!(
            conv.forward(&x, Mode::Eval, &mut Rng::new(0)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn param_count_fixture() {
        assert_eq!(Conv2d::param_count(2, 4), 76);
        let conv = Conv2d::new(2, 4, Init::HeUniform, &mut Rng::new(0)).unwrap();
        assert_eq!(super::super::count(&conv.params()), 76);
    }
}
