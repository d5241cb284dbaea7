//! Builds the three architectures at paper scale (counting only) and at toy
//! scale (allocating and running a forward pass).
//!
//! `cargo run --release --example build_networks`

use drunet::layers::Mode;
use drunet::models::{count_params, plan, BlockKind, ModelConfig, Network, Variant};
use drunet::tensor::sample_uniform;
use drunet::Rng;

fn main() -> drunet::Result<()> {
    for v in [Variant::Unet, Variant::UnetLarge, Variant::DenseResidualUnet] {
        let paper = ModelConfig::paper(v);
        let n = count_params(&paper)?;
        println!("{:<20} paper scale: {n:>11} parameters ({:.1}M)", v.as_str(), n as f64 / 1e6);
    }

    let cfg = ModelConfig::toy(Variant::DenseResidualUnet);
    let p = plan(&cfg)?;
    println!("\ntoy dense residual U-Net blocks:");
    for b in &p.blocks {
        let index = b.index.map_or("-".to_string(), |i| i.to_string());
        println!("  {:<14} {index:>2} {:>4} -> {:<4} at {}x{}", format!("{:?}", b.kind), b.in_channels, b.out_channels, b.extent, b.extent);
    }
    println!("  residual blocks: {}", p.count(BlockKind::Residual));
    for e in &p.skip_edges {
        println!("  skip: encoder {} -> decoder {} ({} channels at {})", e.encoder_stage, e.decoder_stage, e.channels, e.extent);
    }

    let mut net = Network::new(&cfg, 1)?;
    let mut rng = Rng::new(2);
    let x = sample_uniform(&mut rng, &[2, 6, cfg.input_size, cfg.input_size], 1.0)?;
    let y = net.forward(&x, Mode::Eval, &mut rng)?;
    let (lo, hi) = y.data().iter().fold((1.0f64, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    println!("\nforward {:?} -> {:?}, confidences in [{lo:.3}, {hi:.3}]", x.shape(), y.shape());
    println!("first registry entries: {:?}", &net.param_names()[..4]);
    Ok(())
}
