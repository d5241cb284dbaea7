use super::config::{ModelConfig, Variant};
use super::plan::{self, bottleneck_volume, decoder_shapes, dense_cfg, encoder_shapes, BlockSpec, Plan, SkipEdge};
use crate::error::{Error, Result};
use crate::layers::{
    count, zero_grads, GradCheck, Activation, BlockConfig, Conv2d, ConvRelu, DenseBlock, Dropout,
    FullyConnected, GaussianNoise, Init, Layer, MaxPool2, MergeBlock, Mode, Param, Relu, ResidualBlock, Tanh01,
    Upsample2,
};
use crate::loss::{batch_jaccard_loss, batch_jaccard_loss_grad};
use crate::tensor::{concat_channels, split_channels, Rng, Tensor};

#[derive(Clone, Debug)]
enum StageBody {
    Plain(Vec<ConvRelu>),
    Dense(DenseBlock),
}

impl StageBody {
    fn plain(in_c: usize, out_c: usize, rng: &mut Rng) -> Result<StageBody> {
        Ok(StageBody::Plain(vec![
            ConvRelu::new(in_c, out_c, rng)?,
            ConvRelu::new(out_c, out_c, rng)?,
        ]))
    }

    fn forward(&mut self, x: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        match self {
            StageBody::Plain(convs) => {
                let mut y = x.clone();
                for c in convs.iter_mut() {
                    y = c.forward(&y, mode, rng)?;
                }
                Ok(y)
            }
            StageBody::Dense(block) => block.forward(x, mode, rng),
        }
    }

    fn backward(&mut self, g: &Tensor) -> Result<Tensor> {
        match self {
            StageBody::Plain(convs) => {
                let mut g = g.clone();
                for c in convs.iter_mut().rev() {
                    g = c.backward(&g)?;
                }
                Ok(g)
            }
            StageBody::Dense(block) => block.backward(g),
        }
    }

    fn params(&self) -> Vec<&Param> {
        match self {
            StageBody::Plain(convs) => convs.iter().flat_map(|c| c.params()).collect(),
            StageBody::Dense(block) => block.params(),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            StageBody::Plain(convs) => convs.iter_mut().flat_map(|c| c.params_mut()).collect(),
            StageBody::Dense(block) => block.params_mut(),
        }
    }

    fn param_names(&self, prefix: &str, out: &mut Vec<String>) {
        let (kind, n) = match self {
            StageBody::Plain(convs) => ("conv", convs.len()),
            StageBody::Dense(block) => ("dense.conv", block.convs.len()),
        };
        for i in 0..n {
            out.push(format!("{prefix}.{kind}{i}.weight"));
            out.push(format!("{prefix}.{kind}{i}.bias"));
        }
    }
}

#[derive(Clone, Debug)]
struct Encoder {
    noise: Option<GaussianNoise>,
    body: StageBody,
    dropout: Option<Dropout>,
    pool: MaxPool2,
}

#[derive(Clone, Debug)]
struct Decoder {
    up: Upsample2,
    up_channels: usize,
    skip_channels: usize,
    body: StageBody,
    dropout: Option<Dropout>,
}

#[derive(Clone, Debug)]
struct Bottleneck {
    fc_in: FullyConnected,
    relu_in: Relu,
    dropout: Dropout,
    fc_out: FullyConnected,
    relu_out: Relu,
}

#[derive(Clone, Debug)]
enum Head {
    /// Final 1-channel convolution and rescaled tanh.
    Conv { conv: Conv2d, act: Tanh01 },
    /// Merge over the last dense block's conv outputs, residual tail, and an
    /// output merge over every residual block's output.
    Refine {
        dropped_channels: usize,
        merge: MergeBlock,
        residuals: Vec<ResidualBlock>,
        output: MergeBlock,
    },
}

/// A built network: parameters, per-layer activation caches, and the
/// forward/backward passes over the whole graph.
///
/// Parameters are registered encoder stages first (shallowest to deepest),
/// then the two bottleneck FC layers, decoder stages (deepest first) and the
/// output head. The order depends only on the [`ModelConfig`].
#[derive(Clone, Debug)]
pub struct Network {
    config: ModelConfig,
    encoders: Vec<Encoder>,
    bottleneck: Bottleneck,
    decoders: Vec<Decoder>,
    head: Head,
    cached_batch: Option<usize>,
}

/// Builds a plain U-Net (`unet` or `unet_large`) with weights drawn from `seed`.
pub fn build_unet(cfg: &ModelConfig, seed: u64) -> Result<Network> {
    if cfg.variant.is_dense() {
        return Err(Error::Config(format!(
            "build_unet called with variant {}",
            cfg.variant.as_str()
        )));
    }
    Network::build(cfg, seed)
}

pub fn build_dense_residual_unet(cfg: &ModelConfig, seed: u64) -> Result<Network> {
    if cfg.variant != Variant::DenseResidualUnet {
        return Err(Error::Config(format!(
            "build_dense_residual_unet called with variant {}",
            cfg.variant.as_str()
        )));
    }
    Network::build(cfg, seed)
}

impl Network {
    /// Builds whichever topology `cfg.variant` names.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Network> {
        Network::build(cfg, seed)
    }

    fn build(cfg: &ModelConfig, seed: u64) -> Result<Network> {
        cfg.validate()?;
        let mut rng = Rng::new(seed);
        let dense = cfg.variant.is_dense();
        let stages = cfg.stages();

        let mut encoders = Vec::with_capacity(stages);
        for (s, shape) in encoder_shapes(cfg).iter().enumerate() {
            let body = if dense {
                StageBody::Dense(DenseBlock::new(
                    shape.in_channels,
                    dense_cfg(cfg, s),
                    cfg.dense_include_input,
                    &mut rng,
                )?)
            } else {
                StageBody::plain(shape.in_channels, shape.out_channels, &mut rng)?
            };
            encoders.push(Encoder {
                noise: dense.then(|| GaussianNoise::new(cfg.noise_std)).transpose()?,
                body,
                dropout: (dense && s + 1 == stages).then(|| Dropout::new(cfg.dropout)).transpose()?,
                pool: MaxPool2::new(),
            });
        }

        let volume = bottleneck_volume(cfg);
        let bottleneck = Bottleneck {
            fc_in: FullyConnected::new(volume, cfg.fc_width, Init::HeUniform, &mut rng)?,
            relu_in: Relu::new(),
            dropout: Dropout::new(cfg.dropout)?,
            fc_out: FullyConnected::new(cfg.fc_width, volume, Init::HeUniform, &mut rng)?,
            relu_out: Relu::new(),
        };

        let enc_shapes = encoder_shapes(cfg);
        let mut decoders = Vec::with_capacity(stages);
        for (d, shape) in decoder_shapes(cfg).iter().enumerate() {
            let s = stages - 1 - d;
            let skip_channels = enc_shapes[s].out_channels;
            let body = if dense {
                StageBody::Dense(DenseBlock::new(
                    shape.in_channels,
                    dense_cfg(cfg, s),
                    cfg.dense_include_input,
                    &mut rng,
                )?)
            } else {
                StageBody::plain(shape.in_channels, shape.out_channels, &mut rng)?
            };
            decoders.push(Decoder {
                up: Upsample2::new(),
                up_channels: shape.in_channels - skip_channels,
                skip_channels,
                body,
                dropout: dense.then(|| Dropout::new(cfg.dropout)).transpose()?,
            });
        }

        let last = *decoder_shapes(cfg).last().expect("validated config has stages");
        let head = if dense {
            let size = cfg.input_size;
            let merge_cfg = BlockConfig {
                n: cfg.merge_filters,
                m: size,
                z: cfg.dense_depth,
                depth: 1,
                growth: 1,
            };
            let merge = MergeBlock::new(vec![last.growth; cfg.dense_depth], merge_cfg, Activation::relu(), &mut rng)?;
            let residuals = (0..cfg.residual_blocks)
                .map(|_| ResidualBlock::new(cfg.merge_filters, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            let out_cfg = BlockConfig {
                n: 1,
                m: size,
                z: cfg.residual_blocks,
                depth: 1,
                growth: 1,
            };
            let output = MergeBlock::new(
                vec![cfg.merge_filters; cfg.residual_blocks],
                out_cfg,
                Activation::tanh01(),
                &mut rng,
            )?;
            Head::Refine {
                dropped_channels: last.out_channels - cfg.dense_depth * last.growth,
                merge,
                residuals,
                output,
            }
        } else {
            Head::Conv {
                conv: Conv2d::new(last.out_channels, 1, Init::GlorotUniform, &mut rng)?,
                act: Tanh01::new(),
            }
        };

        Ok(Network {
            config: cfg.clone(),
            encoders,
            bottleneck,
            decoders,
            head,
            cached_batch: None,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Ordered block list of this topology.
    pub fn blocks(&self) -> Vec<BlockSpec> {
        self.plan().blocks
    }

    pub fn skip_edges(&self) -> Vec<SkipEdge> {
        self.plan().skip_edges
    }

    fn plan(&self) -> Plan {
        plan::plan(&self.config).expect("network was built from a validated config")
    }

    /// Confidence map `[N, 1, H, W]` in `(0, 1)` for a `[N, 6, H, W]` batch.
    ///
    /// Activations are cached for a following [`Network::backward`].
    pub fn forward(&mut self, batch: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let (n, c, h, w) = batch.dims4()?;
        if c != self.config.input_channels {
            return Err(Error::shape(
                "forward",
                format!("expected {} input channels, got {c}", self.config.input_channels),
            ));
        }
        let size = self.config.input_size;
        if h != size || w != size {
            return Err(Error::shape(
                "forward",
                format!("expected {size}x{size} input, got {h}x{w}"),
            ));
        }
        self.cached_batch = None;

        let mut x = batch.clone();
        let mut skips = Vec::with_capacity(self.encoders.len());
        for enc in &mut self.encoders {
            if let Some(noise) = &mut enc.noise {
                x = noise.forward(&x, mode, rng)?;
            }
            x = enc.body.forward(&x, mode, rng)?;
            if let Some(d) = &mut enc.dropout {
                x = d.forward(&x, mode, rng)?;
            }
            skips.push(x.clone());
            x = enc.pool.forward(&x, mode, rng)?;
        }

        let volume_shape = x.shape().to_vec();
        let b = &mut self.bottleneck;
        let f = b.fc_in.forward(&x, mode, rng)?;
        let f = b.relu_in.forward(&f, mode, rng)?;
        let f = b.dropout.forward(&f, mode, rng)?;
        let f = b.fc_out.forward(&f, mode, rng)?;
        let f = b.relu_out.forward(&f, mode, rng)?;
        x = f.reshape(&volume_shape)?;

        let stages = self.decoders.len();
        for (d, dec) in self.decoders.iter_mut().enumerate() {
            let u = dec.up.forward(&x, mode, rng)?;
            let joined = concat_channels(&[&u, &skips[stages - 1 - d]])?;
            x = dec.body.forward(&joined, mode, rng)?;
            if let Some(drop) = &mut dec.dropout {
                x = drop.forward(&x, mode, rng)?;
            }
        }

        let out = match &mut self.head {
            Head::Conv { conv, act } => {
                let y = conv.forward(&x, mode, rng)?;
                act.forward(&y, mode, rng)?
            }
            Head::Refine {
                dropped_channels,
                merge,
                residuals,
                output,
            } => {
                let mut widths = merge.input_widths().to_vec();
                if *dropped_channels > 0 {
                    widths.insert(0, *dropped_channels);
                }
                let mut parts = split_channels(&x, &widths)?;
                if *dropped_channels > 0 {
                    parts.remove(0);
                }
                let mut r = merge.forward_many(&parts.iter().collect::<Vec<_>>(), mode, rng)?;
                let mut outs = Vec::with_capacity(residuals.len());
                for res in residuals.iter_mut() {
                    r = res.forward(&r, mode, rng)?;
                    outs.push(r.clone());
                }
                output.forward_many(&outs.iter().collect::<Vec<_>>(), mode, rng)?
            }
        };
        self.cached_batch = Some(n);
        Ok(out)
    }

    /// Replaces every parameter gradient with dLoss/dParam for the cached
    /// forward, and returns dLoss/dInput.
    pub fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let n = self
            .cached_batch
            .ok_or_else(|| Error::State("backward called without a cached forward".into()))?;
        let size = self.config.input_size;
        if grad_output.shape() != [n, 1, size, size] {
            return Err(Error::shape(
                "backward",
                format!("upstream gradient {:?} for batch of {n}", grad_output.shape()),
            ));
        }
        zero_grads(&mut self.params_mut());

        let mut g = match &mut self.head {
            Head::Conv { conv, act } => {
                let g = act.backward(grad_output)?;
                conv.backward(&g)?
            }
            Head::Refine {
                dropped_channels,
                merge,
                residuals,
                output,
            } => {
                let per_block = output.backward_many(grad_output)?;
                let mut carry: Option<Tensor> = None;
                for (res, gi) in residuals.iter_mut().zip(per_block).rev() {
                    let total = match carry {
                        Some(c) => gi.add(&c)?,
                        None => gi,
                    };
                    carry = Some(res.backward(&total)?);
                }
                let g_merge = carry.expect("at least one residual block");
                let mut parts = merge.backward_many(&g_merge)?;
                if *dropped_channels > 0 {
                    let (_, _, h, w) = g_merge.dims4()?;
                    parts.insert(0, Tensor::zeros(&[n, *dropped_channels, h, w])?);
                }
                concat_channels(&parts.iter().collect::<Vec<_>>())?
            }
        };

        let stages = self.decoders.len();
        let mut skip_grads: Vec<Option<Tensor>> = vec![None; stages];
        for (d, dec) in self.decoders.iter_mut().enumerate().rev() {
            if let Some(drop) = &mut dec.dropout {
                g = drop.backward(&g)?;
            }
            g = dec.body.backward(&g)?;
            let mut parts = split_channels(&g, &[dec.up_channels, dec.skip_channels])?;
            skip_grads[stages - 1 - d] = parts.pop();
            g = dec.up.backward(&parts[0])?;
        }

        let b = &mut self.bottleneck;
        let volume_shape = g.shape().to_vec();
        let flat = g.reshape(&[n, volume_shape[1..].iter().product()])?;
        let f = b.relu_out.backward(&flat)?;
        let f = b.fc_out.backward(&f)?;
        let f = b.dropout.backward(&f)?;
        let f = b.relu_in.backward(&f)?;
        g = b.fc_in.backward(&f)?;

        for (enc, skip) in self.encoders.iter_mut().zip(skip_grads).rev() {
            g = enc.pool.backward(&g)?;
            g.add_assign(&skip.expect("every stage has a skip edge"))?;
            if let Some(d) = &mut enc.dropout {
                g = d.backward(&g)?;
            }
            g = enc.body.backward(&g)?;
            if let Some(noise) = &mut enc.noise {
                g = noise.backward(&g)?;
            }
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p: Vec<&Param> = Vec::new();
        for enc in &self.encoders {
            p.extend(enc.body.params());
        }
        p.extend(self.bottleneck.fc_in.params());
        p.extend(self.bottleneck.fc_out.params());
        for dec in &self.decoders {
            p.extend(dec.body.params());
        }
        match &self.head {
            Head::Conv { conv, .. } => p.extend(conv.params()),
            Head::Refine {
                merge,
                residuals,
                output,
                ..
            } => {
                p.extend(merge.params());
                for r in residuals {
                    p.extend(r.params());
                }
                p.extend(output.params());
            }
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p: Vec<&mut Param> = Vec::new();
        for enc in &mut self.encoders {
            p.extend(enc.body.params_mut());
        }
        p.extend(self.bottleneck.fc_in.params_mut());
        p.extend(self.bottleneck.fc_out.params_mut());
        for dec in &mut self.decoders {
            p.extend(dec.body.params_mut());
        }
        match &mut self.head {
            Head::Conv { conv, .. } => p.extend(conv.params_mut()),
            Head::Refine {
                merge,
                residuals,
                output,
                ..
            } => {
                p.extend(merge.params_mut());
                for r in residuals {
                    p.extend(r.params_mut());
                }
                p.extend(output.params_mut());
            }
        }
        p
    }

    /// Names of the registered parameters, in registry order.
    pub fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for (s, enc) in self.encoders.iter().enumerate() {
            enc.body.param_names(&format!("enc{s}"), &mut names);
        }
        for fc in ["fc_in", "fc_out"] {
            names.push(format!("bottleneck.{fc}.weight"));
            names.push(format!("bottleneck.{fc}.bias"));
        }
        let stages = self.decoders.len();
        for (d, dec) in self.decoders.iter().enumerate() {
            dec.body.param_names(&format!("dec{}", stages - 1 - d), &mut names);
        }
        match &self.head {
            Head::Conv { .. } => {
                names.push("head.conv.weight".into());
                names.push("head.conv.bias".into());
            }
            Head::Refine { residuals, .. } => {
                names.push("head.merge.weight".into());
                names.push("head.merge.bias".into());
                for r in 0..residuals.len() {
                    for c in ["conv1", "conv2"] {
                        names.push(format!("head.residual{r}.{c}.weight"));
                        names.push(format!("head.residual{r}.{c}.bias"));
                    }
                }
                names.push("head.output.weight".into());
                names.push("head.output.bias".into());
            }
        }
        names
    }

    pub fn count_params(&self) -> usize {
        count(&self.params())
    }

    /// Finite-difference check of the whole network under the soft-Jaccard
    /// loss in eval mode, on `samples` parameter entries spread over every
    /// parameter tensor.
    pub fn gradient_check(
        &mut self,
        input: &Tensor,
        target: &Tensor,
        epsilon: f64,
        samples: usize,
        seed: u64,
    ) -> Result<GradCheck> {
        if !(1e-7..=1e-3).contains(&epsilon) {
            return Err(Error::Parameter(format!("epsilon must be in [1e-7, 1e-3], got {epsilon}")));
        }
        let mut rng = Rng::new(seed);
        let p = self.forward(input, Mode::Eval, &mut Rng::new(0))?;
        let grad = batch_jaccard_loss_grad(&p, target)?;
        self.backward(&grad)?;

        let tensors = self.params().len();
        let per_tensor = samples.div_ceil(tensors).max(1);
        let mut picks: Vec<(usize, usize, f64)> = Vec::new();
        for (t, param) in self.params().iter().enumerate() {
            let mut idx: Vec<usize> = (0..param.value.len()).collect();
            rng.shuffle(&mut idx);
            for &j in idx.iter().take(per_tensor) {
                picks.push((t, j, param.grad.data()[j]));
            }
        }

        let names = self.param_names();
        let mut report = GradCheck::new();
        for (t, j, analytic) in picks {
            let orig = self.params()[t].value.data()[j];
            self.params_mut()[t].value.data_mut()[j] = orig + epsilon;
            let plus = self.eval_loss(input, target)?;
            self.params_mut()[t].value.data_mut()[j] = orig - epsilon;
            let minus = self.eval_loss(input, target)?;
            self.params_mut()[t].value.data_mut()[j] = orig;
            report.record(analytic, (plus - minus) / (2.0 * epsilon), || format!("{}[{j}]", names[t]));
        }
        Ok(report)
    }

    fn eval_loss(&mut self, input: &Tensor, target: &Tensor) -> Result<f64> {
        let p = self.forward(input, Mode::Eval, &mut Rng::new(0))?;
        batch_jaccard_loss(&p, target)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sample_uniform;

    fn toy(v: Variant) -> Network {
        Network::new(&ModelConfig::toy(v), 7).unwrap()
    }

    fn input(n: usize, seed: u64) -> Tensor {
        sample_uniform(&mut Rng::new(seed), &[n, 6, 32, 32], 1.0).unwrap()
    }

    fn disc_mask(n: usize) -> Tensor {
        let mut t = Tensor::zeros(&[n, 1, 32, 32]).unwrap();
        for b in 0..n {
            for y in 0..32 {
                for x in 0..32 {
                    let (dy, dx) = (y as f64 - 14.0 - b as f64, x as f64 - 17.0);
                    if dy * dy + dx * dx < 60.0 {
                        t.data_mut()[(b * 32 + y) * 32 + x] = 1.0;
                    }
                }
            }
        }
        t
    }

    #[test]
    fn output_shape_and_range() {
        for v in [Variant::Unet, Variant::UnetLarge, Variant::DenseResidualUnet] {
            let mut net = toy(v);
            let y = net.forward(&input(2, 1), Mode::Train, &mut Rng::new(3)).unwrap();
            assert_eq!(y.shape(), &[2, 1, 32, 32]);
            assert!(y.data().iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn zero_final_layer_gives_half() {
        for v in [Variant::Unet, Variant::DenseResidualUnet] {
            let mut net = toy(v);
            let mut params = net.params_mut();
            let k = params.len();
            for p in params[k - 2..].iter_mut() {
                p.value.fill(0.0);
            }
            let zeros = Tensor::zeros(&[1, 6, 32, 32]).unwrap();
            let y = net.forward(&zeros, Mode::Eval, &mut Rng::new(0)).unwrap();
            assert!(y.data().iter().all(|&p| p == 0.5));
        }
    }

    #[test]
    fn wrong_channels_and_size() {
        let mut net = toy(Variant::Unet);
        let three = Tensor::zeros(&[1, 3, 32, 32]).unwrap();
        assert!(matches!(net.forward(&three, Mode::Eval, &mut Rng::new(0)), Err(Error::ShapeMismatch { .. })));
        let big = Tensor::zeros(&[1, 6, 64, 64]).unwrap();
        assert!(net.forward(&big, Mode::Eval, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn batch_rows_are_independent() {
        let mut net = toy(Variant::DenseResidualUnet);
        let x = input(2, 5);
        let swapped = Tensor::stack(&[&x.batch_item(1).unwrap(), &x.batch_item(0).unwrap()]).unwrap();
        let y = net.forward(&x, Mode::Eval, &mut Rng::new(0)).unwrap();
        let ys = net.forward(&swapped, Mode::Eval, &mut Rng::new(0)).unwrap();
        assert_eq!(y.batch_item(0).unwrap(), ys.batch_item(1).unwrap());
        assert_eq!(y.batch_item(1).unwrap(), ys.batch_item(0).unwrap());
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let mut net = toy(Variant::DenseResidualUnet);
        let x = input(1, 2);
        let a = net.forward(&x, Mode::Eval, &mut Rng::new(1)).unwrap();
        let b = net.forward(&x, Mode::Eval, &mut Rng::new(2)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn backward_requires_forward() {
        let mut net = toy(Variant::Unet);
        let g = Tensor::zeros(&[1, 1, 32, 32]).unwrap();
        assert!(matches!(net.backward(&g), Err(Error::State(_))));
    }

    #[test]
    fn zero_upstream_and_repeatability() {
        let mut net = toy(Variant::DenseResidualUnet);
        let x = input(1, 4);
        net.forward(&x, Mode::Eval, &mut Rng::new(0)).unwrap();
        net.backward(&Tensor::zeros(&[1, 1, 32, 32]).unwrap()).unwrap();
        assert!(net.params().iter().all(|p| p.grad.data().iter().all(|&g| g == 0.0)));

        let p = net.forward(&x, Mode::Eval, &mut Rng::new(0)).unwrap();
        let g = batch_jaccard_loss_grad(&p, &disc_mask(1)).unwrap();
        net.backward(&g).unwrap();
        let first: Vec<Tensor> = net.params().iter().map(|p| p.grad.clone()).collect();
        net.backward(&g).unwrap();
        let second: Vec<Tensor> = net.params().iter().map(|p| p.grad.clone()).collect();
        assert_eq!(first, second);
        assert!(first.iter().any(|g| g.data().iter().any(|&v| v != 0.0)));
    }

    #[test]
    fn registry_is_stable_and_counted() {
        for v in [Variant::Unet, Variant::UnetLarge, Variant::DenseResidualUnet] {
            let cfg = ModelConfig::toy(v);
            let a = Network::new(&cfg, 1).unwrap();
            let b = Network::new(&cfg, 2).unwrap();
            assert_eq!(a.param_names(), b.param_names());
            assert_eq!(a.param_names().len(), a.params().len());
            let shapes = |n: &Network| n.params().iter().map(|p| p.value.shape().to_vec()).collect::<Vec<_>>();
            assert_eq!(shapes(&a), shapes(&b));
            assert_eq!(a.count_params(), plan::count_params(&cfg).unwrap());
        }
    }

    #[test]
    fn builders_check_variant() {
        assert!(build_unet(&ModelConfig::toy(Variant::DenseResidualUnet), 0).is_err());
        assert!(build_dense_residual_unet(&ModelConfig::toy(Variant::Unet), 0).is_err());
        build_unet(&ModelConfig::toy(Variant::UnetLarge), 0).unwrap();
    }

    #[test]
    fn dense_residual_block_list() {
        let net = toy(Variant::DenseResidualUnet);
        let blocks = net.blocks();
        let n = |k| blocks.iter().filter(|b| b.kind == k).count();
        assert_eq!(n(super::super::BlockKind::Residual), 4);
        assert_eq!(n(super::super::BlockKind::FullyConnected), 1);
        assert_eq!(n(super::super::BlockKind::DenseEncode), 2);
        assert_eq!(net.skip_edges().len(), 2);
    }

    #[test]
    fn whole_network_gradients() {
        for v in [Variant::Unet, Variant::DenseResidualUnet] {
            let mut net = toy(v);
            let report = net.gradient_check(&input(1, 11), &disc_mask(1), 1e-6, 200, 3).unwrap();
            assert!(report.checked >= 200);
            assert!(report.max_rel_error < 1e-3, "{}: {} at {}", v.as_str(), report.max_rel_error, report.worst);
        }
    }
}
