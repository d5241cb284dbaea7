//! The three transfer scenarios: direct transfer of a pretrained network,
//! fine-tuning it on target data, and training from scratch.
//!
//! `cargo run --release --example scenarios`

use drunet::data::color_blob_samples;
use drunet::models::{ModelConfig, Variant};
use drunet::training::{run_scenario, Scenario, TrainConfig};

fn main() -> drunet::Result<()> {
    let model = ModelConfig::toy(Variant::Unet);
    let source = color_blob_samples(24, 32, 100);
    let target = color_blob_samples(10, 32, 200);
    let eval = color_blob_samples(6, 32, 300);
    let short = |s: Scenario| TrainConfig {
        max_epochs: 40,
        patience: 10,
        ..TrainConfig::for_scenario(s)
    };

    let pre = run_scenario(&short(Scenario::DirectTraining), &model, &source, &[], None)?;
    println!("pretrained for {} epochs", pre.training.as_ref().map_or(0, |t| t.epochs_run));

    for s in [Scenario::DirectTransfer, Scenario::FineTuning, Scenario::DirectTraining] {
        let pretrained = (s != Scenario::DirectTraining).then_some(&pre.checkpoint);
        let out = run_scenario(&short(s), &model, &target, &eval, pretrained)?;
        let report = out.report.expect("eval samples given");
        let lr = out.training.as_ref().map_or("-".to_string(), |_| s.default_learning_rate().to_string());
        println!("{:<16} lr {lr:<6} J (D) = {}", s.as_str(), report.summary());
    }
    Ok(())
}
