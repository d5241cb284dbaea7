//! Image decoding, resizing, RGB+HSV standardization and augmentation.
//!
//! `cargo run --release --example input_pipeline`

use drunet::data::{augment, color_blob, load_sample, write_mask_png, write_rgb_png, AugmentParams, DEFAULT_SIZE};
use drunet::Rng;

fn main() -> drunet::Result<()> {
    let dir = std::env::temp_dir().join("drunet_input_pipeline");
    std::fs::create_dir_all(&dir).map_err(|e| drunet::Error::io(&dir, e))?;
    let blob = color_blob(&mut Rng::new(4), 96);
    write_rgb_png(dir.join("blob.png"), &blob.rgb)?;
    write_mask_png(dir.join("blob_mask.png"), &blob.mask)?;

    let sample = load_sample(&dir.join("blob.png"), &dir.join("blob_mask.png"), DEFAULT_SIZE, "blob")?;
    let plane = DEFAULT_SIZE * DEFAULT_SIZE;
    for (c, name) in ["R", "G", "B", "H", "S", "V"].iter().enumerate() {
        let x = &sample.image6.data()[c * plane..(c + 1) * plane];
        let mean = x.iter().sum::<f64>() / plane as f64;
        let std = (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / plane as f64).sqrt();
        println!("{name}: mean {mean:+.1e} std {std:.6}");
    }
    let skin = sample.mask.sum() / plane as f64;
    println!("mask {:?}, {:.1}% foreground", sample.mask.shape(), 100.0 * skin);

    let mut rng = Rng::new(8);
    for i in 0..3 {
        let a = augment(&sample, &AugmentParams::default(), &mut rng);
        println!("augmented #{i}: foreground {:.1}%", 100.0 * a.mask.sum() / plane as f64);
    }
    Ok(())
}
