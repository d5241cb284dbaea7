//! Finite-difference check of every layer type and both toy networks.
//!
//! `cargo run --release --example gradient_check`

use drunet::cli::gradcheck::{layer_suite, network_suite, render_table, NETWORK_SAMPLES, SEEDS};

fn main() -> drunet::Result<()> {
    let mut rows = layer_suite(&SEEDS)?;
    rows.extend(network_suite(NETWORK_SAMPLES, 0)?);
    print!("{}", render_table(&rows));
    Ok(())
}
