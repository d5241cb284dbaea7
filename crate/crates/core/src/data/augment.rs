use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::tensor::{Rng, Tensor};

/// Ranges for random rotation, scaling and cropping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    /// Angles are drawn uniformly from `[-rotation_degrees, rotation_degrees]`.
    pub rotation_degrees: f64,
    /// Scale factors are drawn log-uniformly from `[scale_min, scale_max]`.
    pub scale_min: f64,
    pub scale_max: f64,
    /// Random crop offset within the scaled, rotated canvas.
    pub crop: bool,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            rotation_degrees: 30.0,
            scale_min: 0.8,
            scale_max: 1.25,
            crop: true,
        }
    }
}

impl AugmentParams {
    pub fn none() -> AugmentParams {
        AugmentParams {
            rotation_degrees: 0.0,
            scale_min: 1.0,
            scale_max: 1.0,
            crop: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=180.0).contains(&self.rotation_degrees) {
            return Err(Error::Config(format!(
                "augment rotation must be in [0, 180] degrees, got {}",
                self.rotation_degrees
            )));
        }
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max.is_finite()) {
            return Err(Error::Config(format!(
                "augment scale range [{}, {}] must be positive and ordered",
                self.scale_min, self.scale_max
            )));
        }
        Ok(())
    }

    /// Draws one transform. Always consumes four uniforms, so the stream
    /// position does not depend on the ranges.
    pub fn draw(&self, rng: &mut Rng, size: usize) -> Transform {
        let (ua, us, ux, uy) = (rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform());
        let angle_degrees = self.rotation_degrees * (2.0 * ua - 1.0);
        let (lo, hi) = (self.scale_min.ln(), self.scale_max.ln());
        let scale = (lo + (hi - lo) * us).exp();
        let slack = if self.crop { (scale - 1.0).max(0.0) * size as f64 / 2.0 } else { 0.0 };
        Transform {
            angle_degrees,
            scale,
            offset: (slack * (2.0 * uy - 1.0), slack * (2.0 * ux - 1.0)),
        }
    }
}

/// A similarity transform about the image centre followed by a crop offset
/// (in output pixels, `(dy, dx)`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transform {
    pub angle_degrees: f64,
    pub scale: f64,
    pub offset: (f64, f64),
}

impl Transform {
    pub fn identity() -> Transform {
        Transform {
            angle_degrees: 0.0,
            scale: 1.0,
            offset: (0.0, 0.0),
        }
    }

    /// Cosine and sine, exact at multiples of 90°.
    fn rotation(&self) -> (f64, f64) {
        let quarter = self.angle_degrees / 90.0;
        if quarter == quarter.round() {
            match (quarter.round() as i64).rem_euclid(4) {
                0 => (1.0, 0.0),
                1 => (0.0, 1.0),
                2 => (-1.0, 0.0),
                _ => (0.0, -1.0),
            }
        } else {
            let r = self.angle_degrees.to_radians();
            (r.cos(), r.sin())
        }
    }

    /// Source coordinates (continuous, pixel centres at `k + 0.5`) of output
    /// pixel `(y, x)` in an `h × w` image.
    fn source(&self, y: usize, x: usize, h: usize, w: usize, (cos, sin): (f64, f64)) -> (f64, f64) {
        let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
        let v = y as f64 + 0.5 - cy + self.offset.0;
        let u = x as f64 + 0.5 - cx + self.offset.1;
        // Inverse rotation, then inverse scale.
        let sx = (cos * u + sin * v) / self.scale;
        let sy = (-sin * u + cos * v) / self.scale;
        (sy + cy, sx + cx)
    }
}

fn reflect(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

fn dims(t: &Tensor) -> (usize, usize, usize) {
    match t.shape() {
        [h, w] => (1, *h, *w),
        [c, h, w] => (*c, *h, *w),
        s => panic!("augment expects [H, W] or [C, H, W], got {s:?}"),
    }
}

/// Applies `tf` to every plane: bilinear with reflect padding for images,
/// nearest (re-binarized) for masks.
pub fn warp(t: &Tensor, tf: &Transform, nearest: bool) -> Tensor {
    if *tf == Transform::identity() {
        return t.clone();
    }
    let (c, h, w) = dims(t);
    let rot = tf.rotation();
    let src = t.data();
    let mut out = vec![0.0; c * h * w];
    for y in 0..h {
        for x in 0..w {
            let (sy, sx) = tf.source(y, x, h, w, rot);
            let (py, px) = (sy - 0.5, sx - 0.5);
            for ch in 0..c {
                let plane = &src[ch * h * w..(ch + 1) * h * w];
                let v = if nearest {
                    let (iy, ix) = (reflect((py + 0.5).floor() as i64, h), reflect((px + 0.5).floor() as i64, w));
                    if plane[iy * w + ix] >= 0.5 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    let (y0, x0) = (py.floor(), px.floor());
                    let (fy, fx) = (py - y0, px - x0);
                    let (y0, x0) = (y0 as i64, x0 as i64);
                    let at = |yy: i64, xx: i64| plane[reflect(yy, h) * w + reflect(xx, w)];
                    let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
                    let bot = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
                    top * (1.0 - fy) + bot * fy
                };
                out[(ch * h + y) * w + x] = v;
            }
        }
    }
    Tensor::from_vec(t.shape(), out).expect("same shape")
}

/// Applies one transform to both image and mask of `sample`.
pub fn apply_transform(sample: &Sample, tf: &Transform) -> Sample {
    Sample {
        image6: warp(&sample.image6, tf, false),
        mask: warp(&sample.mask, tf, true),
        id: sample.id.clone(),
    }
}

/// Draws a transform from `params` and applies it to image and mask.
pub fn augment(sample: &Sample, params: &AugmentParams, rng: &mut Rng) -> Sample {
    let size = *sample.mask.shape().last().unwrap_or(&1);
    let tf = params.draw(rng, size);
    apply_transform(sample, &tf)
}
