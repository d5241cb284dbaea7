use super::{Layer, Mode};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// 2x2 max pooling, stride 2. Ties go to the first element of the window in
/// row-major order.
#[derive(Clone, Debug, Default)]
pub struct MaxPool2 {
    input_shape: Option<Vec<usize>>,
    argmax: Vec<usize>,
}

impl MaxPool2 {
    pub fn new() -> MaxPool2 {
        MaxPool2::default()
    }

    /// Flat input index of each output element's winner, from the last forward.
    pub fn argmax(&self) -> &[usize] {
        &self.argmax
    }

    /// Position (0..4, row-major) of each winner inside its window.
    pub fn window_positions(&self) -> Vec<usize> {
        let Some(w) = self.input_shape.as_ref().map(|s| s[3]) else {
            return Vec::new();
        };
        // Windows start on even rows and columns.
        self.argmax
            .iter()
            .map(|&i| ((i / w) % 2) * 2 + (i % w) % 2)
            .collect()
    }
}

impl Layer for MaxPool2 {
    fn name(&self) -> String {
        "maxpool2".into()
    }

    fn forward(&mut self, input: &Tensor, _mode: Mode, _rng: &mut Rng) -> Result<Tensor> {
        let (n, c, h, w) = input.dims4()?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(
                "maxpool2",
                format!("spatial extents must be even, got {h}x{w}"),
            ));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = Tensor::zeros(&[n, c, oh, ow])?;
        self.argmax.clear();
        self.argmax.reserve(out.len());
        let src = input.data();
        let dst = out.data_mut();
        for plane in 0..n * c {
            let base = plane * h * w;
            for y in 0..oh {
                for x in 0..ow {
                    let mut best = base + 2 * y * w + 2 * x;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = base + (2 * y + dy) * w + 2 * x + dx;
                        if src[i] > src[best] {
                            best = i;
                        }
                    }
                    dst[(plane * oh + y) * ow + x] = src[best];
                    self.argmax.push(best);
                }
            }
        }
        self.input_shape = Some(input.shape().to_vec());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let shape = self
            .input_shape
            .as_ref()
            .ok_or_else(|| Error::State("maxpool2 backward without forward".into()))?;
        if grad_output.len() != self.argmax.len() {
            return Err(Error::shape(
                "maxpool2 backward",
                format!("upstream gradient {:?}", grad_output.shape()),
            ));
        }
        let mut grad = Tensor::zeros(shape)?;
        let g = grad.data_mut();
        for (&i, &dy) in self.argmax.iter().zip(grad_output.data()) {
            g[i] += dy;
        }
        Ok(grad)
    }
}

/// Nearest-neighbour 2x upsampling: each pixel becomes a 2x2 block.
#[derive(Clone, Debug, Default)]
pub struct Upsample2 {
    input_shape: Option<Vec<usize>>,
}

impl Upsample2 {
    pub fn new() -> Upsample2 {
        Upsample2::default()
    }
}

impl Layer for Upsample2 {
    fn name(&self) -> String {
        "upsample2".into()
    }

    fn forward(&mut self, input: &Tensor, _mode: Mode, _rng: &mut Rng) -> Result<Tensor> {
        let (n, c, h, w) = input.dims4()?;
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = Tensor::zeros(&[n, c, oh, ow])?;
        let src = input.data();
        let dst = out.data_mut();
        for plane in 0..n * c {
            for y in 0..oh {
                for x in 0..ow {
                    dst[(plane * oh + y) * ow + x] = src[(plane * h + y / 2) * w + x / 2];
                }
            }
        }
        self.input_shape = Some(input.shape().to_vec());
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let shape = self
            .input_shape
            .as_ref()
            .ok_or_else(|| Error::State("upsample2 backward without forward".into()))?;
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if grad_output.shape() != [n, c, 2 * h, 2 * w] {
            return Err(Error::shape(
                "upsample2 backward",
                format!("upstream gradient {:?}", grad_output.shape()),
            ));
        }
        let mut grad = Tensor::zeros(shape)?;
        let (oh, ow) = (2 * h, 2 * w);
        let src = grad_output.data();
        let dst = grad.data_mut();
        for plane in 0..n * c {
            for y in 0..oh {
                for x in 0..ow {
                    dst[(plane * h + y / 2) * w + x / 2] += src[(plane * oh + y) * ow + x];
                }
            }
        }
        Ok(grad)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: Vec<f64>) -> Tensor {
        Tensor::from_vec(shape, v).unwrap()
    }

    #[test]
    fn maxpool_window_max() {
        let mut pool = MaxPool2::new();
        let y = pool
            .forward(&t(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]), Mode::Eval, &mut Rng::new(0))
            .unwrap();
        assert_eq!(y.data(), &[4.0]);
    }

    #[test]
    fn maxpool_ties_go_to_first() {
        let mut pool = MaxPool2::new();
        let y = pool
            .forward(&Tensor::full(&[1, 2, 4, 4], 3.0).unwrap(), Mode::Eval, &mut Rng::new(0))
            .unwrap();
        assert!(y.data().iter().all(|&v| v == 3.0));
        assert!(pool.window_positions().iter().all(|&p| p == 0));

        let mut pool = MaxPool2::new();
        pool.forward(&Tensor::full(&[1, 1, 2, 2], 4.0).unwrap(), Mode::Eval, &mut Rng::new(0))
            .unwrap();
        let g = pool.backward(&t(&[1, 1, 1, 1], vec![1.0])).unwrap();
        assert_eq!(g.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_rejects_odd() {
        let mut pool = MaxPool2::new();
        assert!(pool
            .forward(&Tensor::zeros(&[1, 1, 3, 4]).unwrap(), Mode::Eval, &mut Rng::new(0))
            .is_err());
    }

    #[test]
    fn upsample_replicates() {
        let mut up = Upsample2::new();
        let y = up
            .forward(&t(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]), Mode::Eval, &mut Rng::new(0))
            .unwrap();
        assert_eq!(y.shape(), &[1, 1, 4, 4]);
        assert_eq!(
            y.data(),
            &[1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.]
        );
        let g = up.backward(&Tensor::full(&[1, 1, 4, 4], 1.0).unwrap()).unwrap();
        assert_eq!(g.data(), &[4.0; 4]);

        let c = up
            .forward(&Tensor::full(&[1, 3, 2, 3], 0.7).unwrap(), Mode::Eval, &mut Rng::new(0))
            .unwrap();
        assert_eq!(c.shape(), &[1, 3, 4, 6]);
        assert!(c.data().iter().all(|&v| v == 0.7));
    }

    #[test]
    fn pool_and_upsample_shapes_invert() {
        let x = Tensor::zeros(&[2, 3, 8, 6]).unwrap();
        let pooled = MaxPool2::new().forward(&x, Mode::Eval, &mut Rng::new(0)).unwrap();
        assert_eq!(pooled.shape(), &[2, 3, 4, 3]);
        let back = Upsample2::new().forward(&pooled, Mode::Eval, &mut Rng::new(0)).unwrap();
        assert_eq!(back.shape(), x.shape());
    }
}
