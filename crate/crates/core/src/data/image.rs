use std::path::Path;

use image::{GrayImage, ImageReader, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Grayscale byte at or above which a mask pixel counts as skin.
pub const MASK_THRESHOLD: u8 = 128;

fn read_image(path: &Path) -> Result<image::DynamicImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ImageReader::new(std::io::Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
}

/// Reads a PNG or JPEG as `[3, H, W]` RGB with each byte mapped to `v / 255`.
pub fn decode_image(path: impl AsRef<Path>) -> Result<Tensor> {
    let rgb = read_image(path.as_ref())?.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut data = vec![0.0; 3 * h * w];
    for (i, px) in rgb.pixels().enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = px[c] as f64 / 255.0;
        }
    }
    Tensor::from_vec(&[3, h, w], data)
}

/// Reads a grayscale mask as `[H, W]` in {0, 1}; bytes `>= 128` are skin.
pub fn decode_mask(path: impl AsRef<Path>) -> Result<Tensor> {
    let gray = read_image(path.as_ref())?.to_luma8();
    let (w, h) = (gray.width() as usize, gray.height() as usize);
    let data = gray
        .pixels()
        .map(|p| if p[0] >= MASK_THRESHOLD { 1.0 } else { 0.0 })
        .collect();
    Tensor::from_vec(&[h, w], data)
}

fn plane_dims(t: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        [h, w] | [1, h, w] | [1, 1, h, w] => Ok((*h, *w)),
        s => Err(Error::shape(op, format!("expected a single [H, W] plane, got {s:?}"))),
    }
}

/// 8-bit encoding of a confidence map: `round(p * 255)` with ties rounded up.
pub fn encode_confidence(p: &Tensor) -> Vec<u8> {
    p.data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8)
        .collect()
}

/// 0/255 encoding of a mask (or of a confidence map thresholded at `threshold`).
pub fn encode_mask(m: &Tensor, threshold: f64) -> Vec<u8> {
    m.data()
        .iter()
        .map(|&v| if v >= threshold { 255 } else { 0 })
        .collect()
}

fn write_gray(path: &Path, w: usize, h: usize, bytes: Vec<u8>) -> Result<()> {
    let img = GrayImage::from_raw(w as u32, h as u32, bytes).expect("buffer matches dimensions");
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

/// Writes a confidence map in [0, 1] as an 8-bit grayscale PNG.
pub fn write_confidence_png(path: impl AsRef<Path>, p: &Tensor) -> Result<()> {
    let (h, w) = plane_dims(p, "write_confidence_png")?;
    write_gray(path.as_ref(), w, h, encode_confidence(p))
}

/// Writes a binary mask (values >= 0.5 are skin) as a 0/255 grayscale PNG.
pub fn write_mask_png(path: impl AsRef<Path>, m: &Tensor) -> Result<()> {
    let (h, w) = plane_dims(m, "write_mask_png")?;
    write_gray(path.as_ref(), w, h, encode_mask(m, 0.5))
}

/// Writes a `[3, H, W]` image in [0, 1] as an 8-bit RGB PNG.
pub fn write_rgb_png(path: impl AsRef<Path>, rgb: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let (h, w) = match rgb.shape() {
        [3, h, w] => (*h, *w),
        s => return Err(Error::shape("write_rgb_png", format!("expected [3, H, W], got {s:?}"))),
    };
    let bytes = encode_confidence(rgb);
    let plane = h * w;
    let mut img = RgbImage::new(w as u32, h as u32);
    for (i, px) in img.pixels_mut().enumerate() {
        *px = Rgb([bytes[i], bytes[plane + i], bytes[2 * plane + i]]);
    }
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Decode {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    })
}

/// Reads back an 8-bit grayscale PNG as raw bytes with its dimensions.
pub fn read_gray_bytes(path: impl AsRef<Path>) -> Result<(usize, usize, Vec<u8>)> {
    let g = read_image(path.as_ref())?.to_luma8();
    let (w, h) = (g.width() as usize, g.height() as usize);
    Ok((h, w, g.pixels().map(|p: &Luma<u8>| p[0]).collect()))
}

/// Hexcone RGB→HSV on a `[3, H, W]` image in [0, 1]. Hue is returned in
/// [0, 1) (degrees / 360); hue and saturation are 0 for achromatic pixels.
pub fn rgb_to_hsv(rgb: &Tensor) -> Result<Tensor> {
    let (c, h, w) = match rgb.shape() {
        [c, h, w] => (*c, *h, *w),
        s => return Err(Error::shape("rgb_to_hsv", format!("expected [3, H, W], got {s:?}"))),
    };
    if c != 3 {
        return Err(Error::shape("rgb_to_hsv", format!("expected 3 channels, got {c}")));
    }
    if let Some(v) = rgb.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Contract(format!("rgb_to_hsv input {v} outside [0, 1]")));
    }
    let plane = h * w;
    let src = rgb.data();
    let mut out = vec![0.0; 3 * plane];
    for i in 0..plane {
        let (r, g, b) = (src[i], src[plane + i], src[2 * plane + i]);
        let max = r.max(g).max(b);
        let min = r.min(g).min(b);
        let chroma = max - min;
        let hue = if chroma == 0.0 {
            0.0
        } else if max == r {
            ((g - b) / chroma).rem_euclid(6.0) / 6.0
        } else if max == g {
            ((b - r) / chroma + 2.0) / 6.0
        } else {
            ((r - g) / chroma + 4.0) / 6.0
        };
        out[i] = hue;
        out[plane + i] = if max == 0.0 { 0.0 } else { chroma / max };
        out[2 * plane + i] = max;
    }
    Tensor::from_vec(&[3, h, w], out)
}

/// Standard deviations below this leave the channel all zeros.
pub const MIN_STD: f64 = 1e-8;

/// Builds the 6-channel network input `[R, G, B, H, S, V]` from `[3, H, W]`
/// RGB and standardizes every channel to zero mean and unit variance.
pub fn make_input(rgb: &Tensor) -> Result<Tensor> {
    let hsv = rgb_to_hsv(rgb)?;
    let (h, w) = (rgb.shape()[1], rgb.shape()[2]);
    let plane = h * w;
    let mut data = Vec::with_capacity(6 * plane);
    data.extend_from_slice(rgb.data());
    data.extend_from_slice(hsv.data());
    for ch in data.chunks_mut(plane) {
        standardize(ch);
    }
    Tensor::from_vec(&[6, h, w], data)
}

fn standardize(ch: &mut [f64]) {
    let n = ch.len() as f64;
    let mean = ch.iter().sum::<f64>() / n;
    let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std < MIN_STD {
        ch.fill(0.0);
    } else {
        for v in ch.iter_mut() {
            *v = (*v - mean) / std;
        }
    }
}

fn split_planes(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [h, w] => Ok((1, *h, *w)),
        [c, h, w] => Ok((*c, *h, *w)),
        s => Err(Error::shape(op, format!("expected [H, W] or [C, H, W], got {s:?}"))),
    }
}

fn with_plane_shape(t: &Tensor, c: usize, size: usize, data: Vec<f64>) -> Result<Tensor> {
    if t.shape().len() == 2 {
        Tensor::from_vec(&[size, size], data)
    } else {
        Tensor::from_vec(&[c, size, size], data)
    }
}

/// Bilinear resize of every plane of a `[C, H, W]` (or `[H, W]`) tensor to
/// `size × size`, sampling at half-pixel centers with edge clamping.
pub fn resize_bilinear(image: &Tensor, size: usize) -> Result<Tensor> {
    let (c, h, w) = split_planes(image, "resize_bilinear")?;
    if size == 0 {
        return Err(Error::Parameter("resize target must be at least 1".into()));
    }
    if h == size && w == size {
        return Ok(image.clone());
    }
    let taps = |src_len: usize| -> Vec<(usize, usize, f64)> {
        let scale = src_len as f64 / size as f64;
        (0..size)
            .map(|d| {
                let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(src_len - 1);
                (i0, i1, s - i0 as f64)
            })
            .collect()
    };
    let (ys, xs) = (taps(h), taps(w));
    let src = image.data();
    let mut out = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        let p = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
                let bot = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    with_plane_shape(image, c, size, out)
}

/// Nearest-neighbour resize (keeps masks binary).
pub fn resize_nearest(mask: &Tensor, size: usize) -> Result<Tensor> {
    let (c, h, w) = split_planes(mask, "resize_nearest")?;
    if size == 0 {
        return Err(Error::Parameter("resize target must be at least 1".into()));
    }
    if h == size && w == size {
        return Ok(mask.clone());
    }
    let pick = |src_len: usize, d: usize| (((d as f64 + 0.5) * src_len as f64 / size as f64) as usize).min(src_len - 1);
    let src = mask.data();
    let mut out = Vec::with_capacity(c * size * size);
    for ch in 0..c {
        for y in 0..size {
            let sy = pick(h, y);
            for x in 0..size {
                out.push(src[(ch * h + sy) * w + pick(w, x)]);
            }
        }
    }
    with_plane_shape(mask, c, size, out)
}

/// Resizes to an arbitrary `out_h × out_w` (used to map network outputs back
/// to the source resolution).
pub fn resize_to(plane: &Tensor, out_h: usize, out_w: usize, nearest: bool) -> Result<Tensor> {
    let (h, w) = plane_dims(plane, "resize_to")?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::Parameter("resize target must be at least 1".into()));
    }
    let src = plane.data();
    let mut out = Vec::with_capacity(out_h * out_w);
    let axis = |src_len: usize, dst_len: usize, d: usize| -> (usize, usize, f64) {
        let scale = src_len as f64 / dst_len as f64;
        if nearest {
            let i = (((d as f64 + 0.5) * scale) as usize).min(src_len - 1);
            (i, i, 0.0)
        } else {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src_len - 1) as f64);
            let i0 = s.floor() as usize;
            (i0, (i0 + 1).min(src_len - 1), s - i0 as f64)
        }
    };
    for y in 0..out_h {
        let (y0, y1, fy) = axis(h, out_h, y);
        for x in 0..out_w {
            let (x0, x1, fx) = axis(w, out_w, x);
            let top = src[y0 * w + x0] * (1.0 - fx) + src[y0 * w + x1] * fx;
            let bot = src[y1 * w + x0] * (1.0 - fx) + src[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    Tensor::from_vec(&[out_h, out_w], out)
}

#[cfg(test)]
mod tests {
    use super::*;


    fn rgb(px: &[[f64; 3]], h: usize, w: usize) -> Tensor {
        let mut d = vec![0.0; 3 * h * w];
        for (i, p) in px.iter().enumerate() {
            for c in 0..3 {
                d[c * h * w + i] = p[c];
            }
        }
        Tensor::from_vec(&[3, h, w], d).unwrap()
    }

    #[test]
    fn hsv_reference_points() {
        let hsv = rgb_to_hsv(&rgb(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, 0.5, 0.5], [0.0, 0.0, 1.0]], 1, 4)).unwrap();
        let d = hsv.data();
        let at = |i: usize| (d[i], d[4 + i], d[8 + i]);
        assert_eq!(at(0), (0.0, 1.0, 1.0));
        let (h, s, v) = at(1);
        assert!((h - 1.0 / 3.0).abs() < 1e-12 && s == 1.0 && v == 1.0);
        assert_eq!(at(2), (0.0, 0.0, 0.5));
        assert!((at(3).0 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hsv_rejects_out_of_range() {
        assert!(matches!(rgb_to_hsv(&rgb(&[[1.5, 0.0, 0.0]], 1, 1)), Err(Error::Contract(_))));
    }

    #[test]
    fn constant_gray_input_is_all_zero() {
        let x = make_input(&Tensor::full(&[3, 4, 4], 0.5).unwrap()).unwrap();
        assert_eq!(x.shape(), &[6, 4, 4]);
        assert!(x.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardized_channels() {
        let mut r = crate::tensor::Rng::new(4);
        let img = crate::tensor::sample_uniform(&mut r, &[3, 16, 16], 1.0).unwrap().map(f64::abs);
        let x = make_input(&img).unwrap();
        for ch in x.data().chunks(256) {
            let mean = ch.iter().sum::<f64>() / 256.0;
            let std = (ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 256.0).sqrt();
            assert!(mean.abs() < 1e-9);
            assert!((std - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn resize_rules() {
        let c = Tensor::full(&[3, 5, 7], 0.3).unwrap();
        let r = resize_bilinear(&c, 4).unwrap();
        assert!(r.data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        let x = crate::tensor::sample_uniform(&mut crate::tensor::Rng::new(1), &[2, 6, 6], 1.0).unwrap();
        assert_eq!(resize_bilinear(&x, 6).unwrap(), x);

        let checker = Tensor::from_vec(&[4, 4], (0..16).map(|i| ((i / 4 + i % 4) % 2) as f64).collect()).unwrap();
        let small = resize_nearest(&checker, 2).unwrap();
        assert_eq!(small.shape(), &[2, 2]);
        // Samples rows/cols 1 and 3: (1+1), (1+3), (3+1), (3+3) are all even.
        assert_eq!(small.data(), &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn bilinear_downsample_averages() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = resize_bilinear(&x, 1).unwrap();
        assert_eq!(y.data(), &[1.5]);
    }

    #[test]
    fn decode_and_masks() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("red.png");
        RgbImage::from_pixel(1, 1, Rgb([255, 0, 0])).save(&p).unwrap();
        assert_eq!(decode_image(&p).unwrap().data(), &[1.0, 0.0, 0.0]);

        let z = dir.path().join("zero.png");
        RgbImage::new(3, 2).save(&z).unwrap();
        let t = decode_image(&z).unwrap();
        assert_eq!(t.shape(), &[3, 2, 3]);
        assert!(t.data().iter().all(|&v| v == 0.0));

        let bytes = std::fs::read(&p).unwrap();
        let cut = dir.path().join("cut.png");
        std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(decode_image(&cut), Err(Error::Decode { .. })));
        assert!(matches!(decode_image(dir.path().join("missing.png")), Err(Error::Io { .. })));

        let m = dir.path().join("m.png");
        GrayImage::from_raw(4, 1, vec![0, 127, 128, 255]).unwrap().save(&m).unwrap();
        assert_eq!(decode_mask(&m).unwrap().data(), &[0.0, 0.0, 1.0, 1.0]);
        let out = dir.path().join("o.png");
        write_mask_png(&out, &decode_mask(&m).unwrap()).unwrap();
        assert_eq!(read_gray_bytes(&out).unwrap().2, vec![0, 0, 255, 255]);
    }

    #[test]
    fn confidence_encoding() {
        let p = Tensor::from_vec(&[1, 4], vec![0.0, 1.0, 0.5, 0.25]).unwrap();
        assert_eq!(encode_confidence(&p), vec![0, 255, 128, 64]);
        assert_eq!(encode_mask(&p, 0.5), vec![0, 255, 255, 0]);
    }
}
