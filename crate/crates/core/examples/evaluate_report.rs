//! Scores confidence maps against masks and prints the tab-separated report.
//!
//! `cargo run --example evaluate_report`

use drunet::loss::{evaluate_named, format_scores};
use drunet::{Rng, Tensor};

fn main() -> drunet::Result<()> {
    let mut rng = Rng::new(3);
    let (mut ids, mut preds, mut truths) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..4 {
        let t: Vec<f64> = (0..64).map(|k| ((k % 8) < 4) as u8 as f64).collect();
        // Noisy predictions around the truth.
        let p: Vec<f64> = t.iter().map(|&v| (0.4 * v + 0.55 * rng.uniform()).min(1.0)).collect();
        ids.push(format!("img{i}"));
        truths.push(Tensor::from_vec(&[8, 8], t)?);
        preds.push(Tensor::from_vec(&[8, 8], p)?);
    }
    let report = evaluate_named(&ids, &preds, &truths)?;
    print!("{}", report.to_tsv());
    println!("aggregate J (D): {}", report.summary());
    println!("Table 1 style for J = 0.55: {}", format_scores(0.55, 2.0 * 0.55 / 1.55));
    Ok(())
}
