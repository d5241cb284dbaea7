//! Trains a toy network on eight synthetic colour-blob images until the
//! training Jaccard index exceeds 0.95.
//!
//! `cargo run --release --example overfit_toy [unet|unet_large|dense_residual_unet]`

use drunet::data::{color_blob_samples, AugmentParams};
use drunet::models::{ModelConfig, Network, Variant};
use drunet::training::{evaluate_network, train_with_validation, Control, Scenario, TrainConfig};

fn main() -> drunet::Result<()> {
    let variant = Variant::parse(&std::env::args().nth(1).unwrap_or_else(|| "unet".into()))?;
    let set = color_blob_samples(8, 32, 1);
    let mut net = Network::new(&ModelConfig::toy(variant), 0)?;
    let cfg = TrainConfig {
        max_epochs: 300,
        patience: 300,
        augment: AugmentParams::none(),
        ..TrainConfig::for_scenario(Scenario::DirectTraining)
    };
    let start = std::time::Instant::now();
    let mut reached = None;
    train_with_validation(&mut net, &set, &set, &cfg, |n, r| {
        let j = evaluate_network(n, &set, cfg.batch_size)?.agg_jaccard;
        if r.epoch % 10 == 0 || j > 0.95 {
            println!("epoch {:>3}  loss {:.4}  J {j:.4}", r.epoch, r.train_loss);
        }
        if j > 0.95 {
            reached = Some(r.epoch);
            return Ok(Control::Stop);
        }
        Ok(Control::Continue)
    })?;
    match reached {
        Some(e) => println!("{} reached J > 0.95 at epoch {e} in {:.1}s", variant.as_str(), start.elapsed().as_secs_f64()),
        None => println!("{} did not reach J > 0.95 within 300 epochs", variant.as_str()),
    }
    Ok(())
}
