//! The soft-Jaccard loss, its gradient, and the binary metrics.
//!
//! `cargo run --example jaccard_loss`

use drunet::loss::{confusion, dice, dice_from_jaccard, jaccard_index, jaccard_loss, jaccard_loss_grad, binarize, THRESHOLD};
use drunet::Tensor;

fn main() -> drunet::Result<()> {
    let t = Tensor::from_vec(&[2], vec![1.0, 0.0])?;
    let p = Tensor::from_vec(&[2], vec![0.5, 0.5])?;
    println!("L = {}", jaccard_loss(&p, &t)?);
    println!("dL/dp = {:?}", jaccard_loss_grad(&p, &t)?.data());

    let truth = Tensor::from_vec(&[2, 3], vec![1.0, 1.0, 0.0, 1.0, 0.0, 0.0])?;
    let pred = Tensor::from_vec(&[2, 3], vec![0.9, 0.4, 0.6, 0.7, 0.1, 0.0])?;
    let c = confusion(&binarize(&pred, THRESHOLD), &truth)?;
    let j = jaccard_index(&c);
    println!("tp {} fp {} fn {} -> J {j:.4}, D {:.4}, 2J/(1+J) {:.4}", c.tp, c.fp, c.fn_, dice(&c), dice_from_jaccard(j));
    Ok(())
}
