use std::fmt::Write as _;

use crate::error::Result;
use crate::layers::{
    gradient_check, Activation, BlockConfig, Conv2d, ConvRelu, DenseBlock, Dropout, FullyConnected, GaussianNoise,
    Init, Layer, MaxPool2, MergeBlock, Mode, Relu, ResidualBlock, Tanh01, Upsample2,
};
use crate::models::{ModelConfig, Network, Variant};
use crate::tensor::{sample_uniform, Rng, Tensor};

pub const LAYER_THRESHOLD: f64 = 1e-4;
pub const NETWORK_THRESHOLD: f64 = 1e-3;
pub const EPSILON: f64 = 1e-6;
pub const SEEDS: [u64; 3] = [1, 2, 3];
pub const NETWORK_SAMPLES: usize = 200;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub runs: usize,
    pub checked: usize,
    pub max_rel_error: f64,
    pub worst: String,
    pub threshold: f64,
}

impl CheckRow {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.threshold
    }
}

/// A layer under test with its input and the mode to check it in.
pub struct Case {
    pub layer: Box<dyn Layer>,
    pub input: Tensor,
    pub mode: Mode,
}

fn uniform(rng: &mut Rng, shape: &[usize]) -> Result<Tensor> {
    sample_uniform(rng, shape, 1.0)
}

/// Checks the layer built by `make` once per seed and keeps the worst error.
pub fn check_layer(name: &str, seeds: &[u64], make: impl Fn(&mut Rng) -> Result<Case>) -> Result<CheckRow> {
    let mut row = CheckRow {
        name: name.to_string(),
        runs: 0,
        checked: 0,
        max_rel_error: 0.0,
        worst: "-".into(),
        threshold: LAYER_THRESHOLD,
    };
    for &seed in seeds {
        let mut case = make(&mut Rng::new(seed))?;
        let report = gradient_check(case.layer.as_mut(), &case.input, EPSILON, case.mode)?;
        row.runs += 1;
        row.checked += report.checked;
        if report.max_rel_error > row.max_rel_error || report.max_rel_error.is_nan() {
            row.max_rel_error = report.max_rel_error;
            row.worst = format!("seed {seed}: {}", report.worst);
        }
    }
    Ok(row)
}

fn boxed(layer: impl Layer + 'static, input: Tensor, mode: Mode) -> Case {
    Case {
        layer: Box::new(layer),
        input,
        mode,
    }
}

/// Every layer type of the networks, each checked over [`SEEDS`].
pub fn layer_suite(seeds: &[u64]) -> Result<Vec<CheckRow>> {
    type Maker = fn(&mut Rng) -> Result<Case>;
    let makers: [(&str, Maker); 13] = [
        ("conv2d", |r| {
            let l = Conv2d::new(3, 4, Init::HeUniform, r)?;
            Ok(boxed(l, uniform(r, &[2, 3, 5, 5])?, Mode::Train))
        }),
        ("fully_connected", |r| {
            let l = FullyConnected::new(12, 5, Init::HeUniform, r)?;
            Ok(boxed(l, uniform(r, &[3, 12])?, Mode::Train))
        }),
        ("relu", |r| Ok(boxed(Relu::new(), uniform(r, &[2, 3, 4, 4])?, Mode::Train))),
        ("tanh01", |r| Ok(boxed(Tanh01::new(), uniform(r, &[2, 3, 4, 4])?, Mode::Train))),
        ("maxpool2", |r| Ok(boxed(MaxPool2::new(), uniform(r, &[2, 2, 4, 4])?, Mode::Train))),
        ("upsample2", |r| Ok(boxed(Upsample2::new(), uniform(r, &[2, 2, 3, 3])?, Mode::Train))),
        ("dropout", |r| {
            let mut l = Dropout::new(0.5)?;
            l.freeze(&[2, 3, 4, 4], r)?;
            Ok(boxed(l, uniform(r, &[2, 3, 4, 4])?, Mode::Train))
        }),
        ("gaussian_noise", |r| {
            let mut l = GaussianNoise::new(0.025)?;
            l.freeze(&[2, 3, 4, 4], r)?;
            Ok(boxed(l, uniform(r, &[2, 3, 4, 4])?, Mode::Train))
        }),
        ("conv_relu", |r| {
            let l = ConvRelu::new(2, 3, r)?;
            Ok(boxed(l, uniform(r, &[1, 2, 5, 5])?, Mode::Train))
        }),
        ("dense_block", |r| {
            let cfg = BlockConfig { n: 2, m: 6, z: 1, depth: 3, growth: 2 };
            let l = DenseBlock::new(3, cfg, true, r)?;
            Ok(boxed(l, uniform(r, &[1, 3, 6, 6])?, Mode::Train))
        }),
        ("residual_block", |r| {
            let l = ResidualBlock::new(3, r)?;
            Ok(boxed(l, uniform(r, &[1, 3, 5, 5])?, Mode::Train))
        }),
        ("merge_block_relu", |r| {
            let cfg = BlockConfig { n: 2, m: 5, z: 2, depth: 1, growth: 1 };
            let l = MergeBlock::new(vec![2, 3], cfg, Activation::relu(), r)?;
            Ok(boxed(l, uniform(r, &[1, 5, 5, 5])?, Mode::Train))
        }),
        ("merge_block_tanh01", |r| {
            let cfg = BlockConfig { n: 1, m: 5, z: 3, depth: 1, growth: 1 };
            let l = MergeBlock::new(vec![2, 2, 2], cfg, Activation::tanh01(), r)?;
            Ok(boxed(l, uniform(r, &[1, 6, 5, 5])?, Mode::Train))
        }),
    ];
    makers.iter().map(|(name, make)| check_layer(name, seeds, make)).collect()
}

/// Smooth random target mask (a disc) for whole-network checks.
fn disc_target(size: usize) -> Tensor {
    let c = size as f64 / 2.0;
    let r2 = (size as f64 / 3.0).powi(2);
    let data = (0..size * size)
        .map(|i| {
            let (y, x) = ((i / size) as f64 + 0.5 - c, (i % size) as f64 + 0.5 - c);
            (y * y + x * x <= r2) as u8 as f64
        })
        .collect();
    Tensor::from_vec(&[1, 1, size, size], data).expect("sized")
}

/// Whole toy networks under the soft-Jaccard loss, on `samples` sampled
/// parameters each.
pub fn network_suite(samples: usize, seed: u64) -> Result<Vec<CheckRow>> {
    [Variant::Unet, Variant::DenseResidualUnet]
        .iter()
        .map(|&v| {
            let cfg = ModelConfig::toy(v);
            let mut net = Network::new(&cfg, seed)?;
            let size = cfg.input_size;
            let x = uniform(&mut Rng::new(seed ^ 0xabc), &[1, cfg.input_channels, size, size])?;
            let report = net.gradient_check(&x, &disc_target(size), EPSILON, samples, seed)?;
            Ok(CheckRow {
                name: format!("network:{}", v.as_str()),
                runs: 1,
                checked: report.checked,
                max_rel_error: report.max_rel_error,
                worst: report.worst,
                threshold: NETWORK_THRESHOLD,
            })
        })
        .collect()
}

pub fn render_table(rows: &[CheckRow]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
    let mut s = format!(
        "{:<width$}  {:>5}  {:>8}  {:>13}  {:>9}  status\n",
        "layer", "runs", "checked", "max_rel_error", "threshold"
    );
    for r in rows {
        let _ = write!(
            s,
            "{:<width$}  {:>5}  {:>8}  {:>13.3e}  {:>9.0e}  {}",
            r.name,
            r.runs,
            r.checked,
            r.max_rel_error,
            r.threshold,
            if r.passed() { "PASS" } else { "FAIL" }
        );
        if !r.passed() {
            let _ = write!(s, "  (worst: {})", r.worst);
        }
        s.push('\n');
    }
    s
}
