//! Image and mask ingestion, the standardized 6-channel RGB+HSV input,
//! augmentation, dataset manifests and subset selection.

mod augment;
mod image;
mod manifest;

use std::path::Path;

use rayon::prelude::*;

pub use self::augment::{apply_transform, augment, warp, AugmentParams, Transform};
pub use self::image::{
    decode_image, decode_mask, encode_confidence, encode_mask, make_input, read_gray_bytes, resize_bilinear,
    resize_nearest, resize_to, rgb_to_hsv, write_confidence_png, write_mask_png, write_rgb_png, MASK_THRESHOLD,
    MIN_STD,
};
pub use self::manifest::{
    balance_sources, import_paired_dirs, md5_hex, select_subset_md5, DatasetManifest, ManifestEntry, Split,
};
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// Default network input resolution.
pub const DEFAULT_SIZE: usize = 128;

/// A standardized `[6, H, W]` input with its `[H, W]` binary mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image6: Tensor,
    pub mask: Tensor,
    pub id: String,
}

/// Decodes, resizes to `size × size`, then builds the standardized input.
pub fn load_sample(image: &Path, mask: &Path, size: usize, id: impl Into<String>) -> Result<Sample> {
    let rgb = resize_bilinear(&decode_image(image)?, size)?;
    let m = resize_nearest(&decode_mask(mask)?, size)?;
    Ok(Sample {
        image6: make_input(&rgb)?,
        mask: m,
        id: id.into(),
    })
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} loader threads: {e}")))
}

/// Loads every entry on `workers` threads. Output order follows `entries`
/// regardless of the worker count.
pub fn load_samples(entries: &[ManifestEntry], size: usize, workers: usize) -> Result<Vec<Sample>> {
    pool(workers)?.install(|| {
        entries
            .par_iter()
            .map(|e| load_sample(&e.image, &e.mask, size, e.id()))
            .collect()
    })
}

/// Stacks samples into a `[N, 6, H, W]` batch and `[N, 1, H, W]` targets.
pub fn collate(samples: &[&Sample]) -> Result<(Tensor, Tensor)> {
    let images: Vec<&Tensor> = samples.iter().map(|s| &s.image6).collect();
    let masks = samples
        .iter()
        .map(|s| {
            let (h, w) = (s.mask.shape()[0], s.mask.shape()[1]);
            s.mask.clone().reshape(&[1, h, w])
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Tensor::stack(&images)?, Tensor::stack(&masks.iter().collect::<Vec<_>>())?))
}

/// A raw synthetic photo: `[3, H, W]` RGB and its `[H, W]` mask.
#[derive(Clone, Debug)]
pub struct SyntheticImage {
    pub rgb: Tensor,
    pub mask: Tensor,
}

/// One skin-toned ellipse on a cool-coloured noisy background.
pub fn color_blob(rng: &mut Rng, size: usize) -> SyntheticImage {
    let s = size as f64;
    let bg = [
        rng.uniform_range(0.05, 0.35),
        rng.uniform_range(0.25, 0.6),
        rng.uniform_range(0.45, 0.9),
    ];
    let skin = [
        rng.uniform_range(0.75, 0.95),
        rng.uniform_range(0.5, 0.7),
        rng.uniform_range(0.35, 0.5),
    ];
    let (cy, cx) = (rng.uniform_range(0.35, 0.65) * s, rng.uniform_range(0.35, 0.65) * s);
    let (ry, rx) = (rng.uniform_range(0.18, 0.32) * s, rng.uniform_range(0.18, 0.32) * s);
    let plane = size * size;
    let mut rgb = vec![0.0; 3 * plane];
    let mut mask = vec![0.0; plane];
    for y in 0..size {
        for x in 0..size {
            let (dy, dx) = ((y as f64 + 0.5 - cy) / ry, (x as f64 + 0.5 - cx) / rx);
            let inside = dy * dy + dx * dx <= 1.0;
            let base = if inside { skin } else { bg };
            let i = y * size + x;
            mask[i] = inside as u8 as f64;
            for c in 0..3 {
                rgb[c * plane + i] = (base[c] + rng.uniform_range(-0.04, 0.04)).clamp(0.0, 1.0);
            }
        }
    }
    SyntheticImage {
        rgb: Tensor::from_vec(&[3, size, size], rgb).expect("sized"),
        mask: Tensor::from_vec(&[size, size], mask).expect("sized"),
    }
}

/// `n` standardized colour-blob samples drawn from `seed`.
pub fn color_blob_samples(n: usize, size: usize, seed: u64) -> Vec<Sample> {
    let mut rng = Rng::new(seed);
    (0..n)
        .map(|i| {
            let img = color_blob(&mut rng, size);
            Sample {
                image6: make_input(&img.rgb).expect("synthetic pixels are in range"),
                mask: img.mask,
                id: format!("blob{i:03}"),
            }
        })
        .collect()
}

/// Writes colour-blob PNGs and a `manifest.tsv` to `dir`; the first
/// `splits[0].1` images get split `splits[0].0`, and so on.
pub fn write_color_blob_dataset(dir: &Path, splits: &[(Split, usize)], size: usize, seed: u64) -> Result<DatasetManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = Rng::new(seed);
    let mut entries = Vec::new();
    for &(split, n) in splits {
        for _ in 0..n {
            let k = entries.len();
            let img = color_blob(&mut rng, size);
            let (image, mask) = (format!("blob{k:03}.png"), format!("blob{k:03}_mask.png"));
            write_rgb_png(dir.join(&image), &img.rgb)?;
            write_mask_png(dir.join(&mask), &img.mask)?;
            entries.push(ManifestEntry {
                image: image.into(),
                mask: mask.into(),
                split,
            });
        }
    }
    let m = DatasetManifest::new("synthetic", entries);
    m.write(dir.join("manifest.tsv"))?;
    DatasetManifest::read(dir.join("manifest.tsv"))
}
