//! Trains briefly through the command-line interface, then writes confidence
//! maps and binary masks for two images.
//!
//! `cargo run --release --example predict_confidence_maps`

use drunet::data::{read_gray_bytes, write_color_blob_dataset, Split};

fn main() -> drunet::Result<()> {
    let root = std::env::temp_dir().join("drunet_predict_example");
    write_color_blob_dataset(&root.join("data"), &[(Split::Train, 8), (Split::Eval, 2)], 48, 6)?;
    let s = |p: &str| root.join(p).to_string_lossy().into_owned();
    let mut stdout = std::io::stdout();

    let train = [
        "drunet", "train", "--manifest", &s("data/manifest.tsv"), "--out", &s("run"),
        "--set", "model.scale=toy", "--set", "model.variant=unet",
        "--set", "train.max_epochs=30", "--set", "train.patience=10",
    ];
    assert_eq!(drunet::cli::run(train, &mut stdout), 0);

    let predict = [
        "drunet", "predict", "--checkpoint", &s("run/checkpoint.drus"), "--out", &s("maps"),
        &s("data/blob008.png"), &s("data/blob009.png"),
    ];
    assert_eq!(drunet::cli::run(predict, &mut stdout), 0);

    for f in ["blob008_confidence.png", "blob008_mask.png", "blob008_confidence_full.png"] {
        let (h, w, px) = read_gray_bytes(root.join("maps").join(f))?;
        let (lo, hi) = (px.iter().min().unwrap(), px.iter().max().unwrap());
        println!("{f}: {h}x{w}, pixel range {lo}..={hi}");
    }
    Ok(())
}
