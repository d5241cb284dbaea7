//! Composite blocks: conv+ReLU, densely connected blocks, residual blocks and
//! merge layers.

use super::{Conv2d, Init, Layer, Mode, Param, Relu, Tanh01};
use crate::error::{Error, Result};
use crate::tensor::{concat_channels, split_channels, Rng, Tensor};

/// Shape parameters of one structural block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockConfig {
    /// Filters per convolution.
    pub n: usize,
    /// Spatial extent (height and width) the block operates at.
    pub m: usize,
    /// Number of tensors entering a merge layer.
    pub z: usize,
    /// Convolutions per dense block.
    pub depth: usize,
    /// Channels each dense convolution adds.
    pub growth: usize,
}

impl BlockConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("n", self.n),
            ("m", self.m),
            ("z", self.z),
            ("depth", self.depth),
            ("growth", self.growth),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("block field {name} must be at least 1")));
            }
        }
        Ok(())
    }

    fn check_extent(&self, op: &'static str, input: &Tensor) -> Result<()> {
        let (_, _, h, w) = input.dims4()?;
        if h != self.m || w != self.m {
            return Err(Error::shape(
                op,
                format!("block expects {m}x{m} inputs, got {h}x{w}", m = self.m),
            ));
        }
        Ok(())
    }
}

/// 3x3 convolution followed by ReLU.
#[derive(Clone, Debug)]
pub struct ConvRelu {
    pub conv: Conv2d,
    relu: Relu,
}

impl ConvRelu {
    pub fn new(in_channels: usize, out_channels: usize, rng: &mut Rng) -> Result<ConvRelu> {
        Ok(ConvRelu::from_conv(Conv2d::new(in_channels, out_channels, Init::HeUniform, rng)?))
    }

    pub fn from_conv(conv: Conv2d) -> ConvRelu {
        ConvRelu { conv, relu: Relu::new() }
    }
}

impl Layer for ConvRelu {
    fn name(&self) -> String {
        format!("{}+relu", self.conv.name())
    }

    fn forward(&mut self, input: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let y = self.conv.forward(input, mode, rng)?;
        self.relu.forward(&y, mode, rng)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let g = self.relu.backward(grad_output)?;
        self.conv.backward(&g)
    }

    fn params(&self) -> Vec<&Param> {
        self.conv.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.conv.params_mut()
    }
}

/// Densely connected block: convolution `i` sees the channel concatenation of
/// the block input and the outputs of convolutions `1..i`.
///
/// The block output concatenates the convolution outputs (`depth * growth`
/// channels); with `include_input` the block input is prepended.
#[derive(Clone, Debug)]
pub struct DenseBlock {
    cfg: BlockConfig,
    in_channels: usize,
    include_input: bool,
    pub convs: Vec<ConvRelu>,
    outputs: Vec<Tensor>,
}

impl DenseBlock {
    pub fn new(in_channels: usize, cfg: BlockConfig, include_input: bool, rng: &mut Rng) -> Result<DenseBlock> {
        cfg.validate()?;
        let convs = (0..cfg.depth)
            .map(|i| ConvRelu::new(in_channels + i * cfg.growth, cfg.growth, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(DenseBlock {
            cfg,
            in_channels,
            include_input,
            convs,
            outputs: Vec::new(),
        })
    }

    pub fn config(&self) -> &BlockConfig {
        &self.cfg
    }

    pub fn output_channels(&self) -> usize {
        Self::output_channels_for(self.in_channels, &self.cfg, self.include_input)
    }

    pub fn output_channels_for(in_channels: usize, cfg: &BlockConfig, include_input: bool) -> usize {
        cfg.depth * cfg.growth + if include_input { in_channels } else { 0 }
    }

    pub fn param_count(in_channels: usize, cfg: &BlockConfig) -> usize {
        (0..cfg.depth)
            .map(|i| Conv2d::param_count(in_channels + i * cfg.growth, cfg.growth))
            .sum()
    }

    /// Outputs of each convolution from the last forward.
    pub fn per_conv_outputs(&self) -> &[Tensor] {
        &self.outputs
    }

    fn widths(&self) -> Vec<usize> {
        let mut widths = vec![self.in_channels];
        widths.extend(std::iter::repeat_n(self.cfg.growth, self.cfg.depth));
        widths
    }
}

impl Layer for DenseBlock {
    fn name(&self) -> String {
        format!(
            "dense_block(in={}, depth={}, growth={})",
            self.in_channels, self.cfg.depth, self.cfg.growth
        )
    }

    fn forward(&mut self, input: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        self.cfg.check_extent("dense_block", input)?;
        let mut features = vec![input.clone()];
        for conv in &mut self.convs {
            let x = concat_channels(&features.iter().collect::<Vec<_>>())?;
            let y = conv.forward(&x, mode, rng)?;
            features.push(y);
        }
        let skip = if self.include_input { 0 } else { 1 };
        let out = concat_channels(&features[skip..].iter().collect::<Vec<_>>())?;
        features.remove(0);
        self.outputs = features;
        Ok(out)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        if self.outputs.len() != self.cfg.depth {
            return Err(Error::State("dense_block backward without forward".into()));
        }
        let widths = self.widths();
        let mut grads: Vec<Tensor> = if self.include_input {
            split_channels(grad_output, &widths)?
        } else {
            let mut g = split_channels(grad_output, &widths[1..])?;
            let (n, _, h, w) = grad_output.dims4()?;
            g.insert(0, Tensor::zeros(&[n, self.in_channels, h, w])?);
            g
        };
        for i in (0..self.cfg.depth).rev() {
            let upstream = grads[i + 1].clone();
            let gx = self.convs[i].backward(&upstream)?;
            let parts = split_channels(&gx, &widths[..=i])?;
            for (acc, part) in grads.iter_mut().zip(&parts) {
                acc.add_assign(part)?;
            }
        }
        Ok(grads.swap_remove(0))
    }

    fn params(&self) -> Vec<&Param> {
        self.convs.iter().flat_map(|c| c.params()).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.convs.iter_mut().flat_map(|c| c.params_mut()).collect()
    }
}

/// `out = relu(x + conv2(relu(conv1(x))))`, channel count preserved.
#[derive(Clone, Debug)]
pub struct ResidualBlock {
    pub conv1: Conv2d,
    relu1: Relu,
    pub conv2: Conv2d,
    out_relu: Relu,
    channels: usize,
}

impl ResidualBlock {
    pub fn new(channels: usize, rng: &mut Rng) -> Result<ResidualBlock> {
        ResidualBlock::from_convs(
            Conv2d::new(channels, channels, Init::HeUniform, rng)?,
            Conv2d::new(channels, channels, Init::HeUniform, rng)?,
        )
    }

    pub fn from_convs(conv1: Conv2d, conv2: Conv2d) -> Result<ResidualBlock> {
        let channels = conv1.in_channels();
        if conv1.out_channels() != channels || conv2.in_channels() != channels || conv2.out_channels() != channels {
            return Err(Error::shape(
                "residual_block",
                format!(
                    "identity skip needs {channels} channels throughout, got {}->{} and {}->{}",
                    conv1.in_channels(),
                    conv1.out_channels(),
                    conv2.in_channels(),
                    conv2.out_channels()
                ),
            ));
        }
        Ok(ResidualBlock {
            conv1,
            relu1: Relu::new(),
            conv2,
            out_relu: Relu::new(),
            channels,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn param_count(channels: usize) -> usize {
        2 * Conv2d::param_count(channels, channels)
    }
}

impl Layer for ResidualBlock {
    fn name(&self) -> String {
        format!("residual_block({})", self.channels)
    }

    fn forward(&mut self, input: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        let (_, c, _, _) = input.dims4()?;
        if c != self.channels {
            return Err(Error::shape(
                "residual_block",
                format!("expected {} channels, got {c}", self.channels),
            ));
        }
        let h = self.conv1.forward(input, mode, rng)?;
        let h = self.relu1.forward(&h, mode, rng)?;
        let h = self.conv2.forward(&h, mode, rng)?;
        let sum = input.add(&h)?;
        self.out_relu.forward(&sum, mode, rng)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let g = self.out_relu.backward(grad_output)?;
        let branch = self.conv2.backward(&g)?;
        let branch = self.relu1.backward(&branch)?;
        let branch = self.conv1.backward(&branch)?;
        g.add(&branch)
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.conv1.params();
        p.extend(self.conv2.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.conv1.params_mut();
        p.extend(self.conv2.params_mut());
        p
    }
}

/// Output nonlinearity of a merge layer.
#[derive(Clone, Debug)]
pub enum Activation {
    Relu(Relu),
    Tanh01(Tanh01),
}

impl Activation {
    pub fn relu() -> Activation {
        Activation::Relu(Relu::new())
    }

    pub fn tanh01() -> Activation {
        Activation::Tanh01(Tanh01::new())
    }

    fn layer(&mut self) -> &mut dyn Layer {
        match self {
            Activation::Relu(l) => l,
            Activation::Tanh01(l) => l,
        }
    }
}

/// Concatenates `z` aligned feature maps and applies one 3x3 convolution to
/// `n` channels followed by an activation.
#[derive(Clone, Debug)]
pub struct MergeBlock {
    cfg: BlockConfig,
    widths: Vec<usize>,
    pub conv: Conv2d,
    activation: Activation,
}

impl MergeBlock {
    pub fn new(widths: Vec<usize>, cfg: BlockConfig, activation: Activation, rng: &mut Rng) -> Result<MergeBlock> {
        let init = match activation {
            Activation::Relu(_) => Init::HeUniform,
            Activation::Tanh01(_) => Init::GlorotUniform,
        };
        let conv = Conv2d::new(widths.iter().sum(), cfg.n, init, rng)?;
        MergeBlock::from_conv(widths, cfg, conv, activation)
    }

    pub fn from_conv(widths: Vec<usize>, cfg: BlockConfig, conv: Conv2d, activation: Activation) -> Result<MergeBlock> {
        cfg.validate()?;
        if widths.len() != cfg.z {
            return Err(Error::Config(format!(
                "merge expects z={} inputs, got {} widths",
                cfg.z,
                widths.len()
            )));
        }
        if conv.in_channels() != widths.iter().sum::<usize>() || conv.out_channels() != cfg.n {
            return Err(Error::shape(
                "merge_block",
                format!("conv {} does not fit widths {widths:?} -> {}", conv.name(), cfg.n),
            ));
        }
        Ok(MergeBlock {
            cfg,
            widths,
            conv,
            activation,
        })
    }

    pub fn config(&self) -> &BlockConfig {
        &self.cfg
    }

    pub fn input_widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn param_count(widths: &[usize], out_channels: usize) -> usize {
        Conv2d::param_count(widths.iter().sum(), out_channels)
    }

    pub fn forward_many(&mut self, inputs: &[&Tensor], mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        if inputs.is_empty() {
            return Err(Error::Arity { op: "merge_block" });
        }
        if inputs.len() != self.cfg.z {
            return Err(Error::shape(
                "merge_block",
                format!("expected {} inputs, got {}", self.cfg.z, inputs.len()),
            ));
        }
        let x = concat_channels(inputs)?;
        self.forward(&x, mode, rng)
    }

    pub fn backward_many(&mut self, grad_output: &Tensor) -> Result<Vec<Tensor>> {
        let g = self.backward(grad_output)?;
        split_channels(&g, &self.widths)
    }
}

impl Layer for MergeBlock {
    fn name(&self) -> String {
        format!("merge_block(z={}, n={})", self.cfg.z, self.cfg.n)
    }

    fn forward(&mut self, input: &Tensor, mode: Mode, rng: &mut Rng) -> Result<Tensor> {
        self.cfg.check_extent("merge_block", input)?;
        let y = self.conv.forward(input, mode, rng)?;
        self.activation.layer().forward(&y, mode, rng)
    }

    fn backward(&mut self, grad_output: &Tensor) -> Result<Tensor> {
        let g = self.activation.layer().backward(grad_output)?;
        self.conv.backward(&g)
    }

    fn params(&self) -> Vec<&Param> {
        self.conv.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        self.conv.params_mut()
    }
}
