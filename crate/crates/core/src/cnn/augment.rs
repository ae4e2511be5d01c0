//! Random geometric augmentation of training images.

use rand::Rng;

use super::train::Sample;
use crate::error::{Error, Result};
use crate::image::{bilinear_at, resize_bilinear, GrayImage};
use crate::scalar::Scalar;

pub const SCALE_RANGE: (f64, f64) = (0.9, 1.1);
pub const MAX_SHIFT: i32 = 4;
pub const ROTATIONS_PER_IMAGE: usize = 4;
pub const CROPS_PER_ROTATION: usize = 4;

/// One draw of the augmentation pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentParams {
    pub angle_deg: f64,
    pub mirror: bool,
    pub scale: f64,
    /// Crop position as fractions of the free range on each axis
    /// (`0.5` centres the window).
    pub crop: (f64, f64),
    /// Content shift `(rows, cols)`.
    pub shift: (i32, i32),
}

impl AugmentParams {
    /// No rotation, no mirror, unit scale, centred crop, no shift.
    pub fn identity() -> Self {
        Self {
            angle_deg: 0.0,
            mirror: false,
            scale: 1.0,
            crop: (0.5, 0.5),
            shift: (0, 0),
        }
    }

    pub fn sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let angle_deg = rng.random_range(0.0..360.0);
        let mut p = Self::sample_local(rng);
        p.angle_deg = angle_deg;
        p
    }

    /// Everything except the rotation angle.
    fn sample_local<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self {
            angle_deg: 0.0,
            mirror: rng.random_bool(0.5),
            scale: rng.random_range(SCALE_RANGE.0..=SCALE_RANGE.1),
            crop: (rng.random(), rng.random()),
            shift: (
                rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
                rng.random_range(-MAX_SHIFT..=MAX_SHIFT),
            ),
        }
    }
}

/// Rotate about the image centre by `angle_deg`, keeping the
/// dimensions; pixels that map outside the source take `fill`.
pub fn rotate<T: Scalar>(image: &GrayImage<T>, angle_deg: f64, fill: T) -> GrayImage<T> {
    if angle_deg == 0.0 {
        return image.clone();
    }
    let (sin, cos) = angle_deg.to_radians().sin_cos();
    let (h, w) = (image.height() as f64, image.width() as f64);
    let (cy, cx) = ((h - 1.0) / 2.0, (w - 1.0) / 2.0);
    GrayImage::from_fn(image.width(), image.height(), |r, c| {
        let (dy, dx) = (r as f64 - cy, c as f64 - cx);
        let sy = cy + dy * cos + dx * sin;
        let sx = cx - dy * sin + dx * cos;
        // absorb rounding error at the border
        const SLACK: f64 = 1e-9;
        if (-SLACK..=h - 1.0 + SLACK).contains(&sy) && (-SLACK..=w - 1.0 + SLACK).contains(&sx) {
            bilinear_at(image, sy.clamp(0.0, h - 1.0), sx.clamp(0.0, w - 1.0))
        } else {
            fill
        }
    })
}

/// Mirror, scale, crop and shift an already rotated image.
fn crop_stage<T: Scalar>(
    rotated: &GrayImage<T>,
    p: &AugmentParams,
    target: usize,
) -> Result<GrayImage<T>> {
    let (w, h) = (rotated.width() as f64, rotated.height() as f64);
    let short = w.min(h);
    let side = ((target as f64 * p.scale).round()).max(1.0);
    let rw = ((w * side / short).round() as usize).max(1);
    let rh = ((h * side / short).round() as usize).max(1);
    let mut resized = resize_bilinear(rotated, rw, rh)?;
    if p.mirror {
        resized = resized.flip_horizontal();
    }
    let t = target as isize;
    let offset = |extent: usize, frac: f64| {
        ((extent as isize - t) as f64 * frac.clamp(0.0, 1.0)).floor() as isize
    };
    let (oy, ox) = (offset(rh, p.crop.0), offset(rw, p.crop.1));
    let (sy, sx) = (p.shift.0 as isize, p.shift.1 as isize);
    Ok(GrayImage::from_fn(target, target, |r, c| {
        let r = (r as isize - sy).clamp(0, t - 1);
        let c = (c as isize - sx).clamp(0, t - 1);
        resized.get_clamped(oy + r, ox + c)
    }))
}

/// Apply one fixed draw: rotate (corners filled with `fill`), mirror,
/// scale, resize the shorter side to `target * scale`, crop a
/// `target`x`target` window and shift with replicated borders.
pub fn augment_with<T: Scalar>(
    image: &GrayImage<T>,
    p: &AugmentParams,
    target: usize,
    fill: T,
) -> Result<GrayImage<T>> {
    if target == 0 || image.is_empty() {
        return Err(Error::arg(
            "augmentation needs a nonempty image and a positive target size",
        ));
    }
    crop_stage(&rotate(image, p.angle_deg, fill), p, target)
}

pub fn augment_image<T: Scalar, R: Rng + ?Sized>(
    image: &GrayImage<T>,
    rng: &mut R,
    target: usize,
    fill: T,
) -> Result<GrayImage<T>> {
    augment_with(image, &AugmentParams::sample(rng), target, fill)
}

/// Sixteen variants per source image: four rotation draws, each cropped
/// four times with its own mirror, scale and shift draws.
pub fn build_augmented_set<T: Scalar, R: Rng + ?Sized>(
    samples: &[Sample<T>],
    rng: &mut R,
    target: usize,
    fill: T,
) -> Result<Vec<Sample<T>>> {
    if samples.is_empty() {
        return Err(Error::arg("cannot augment an empty training set"));
    }
    if target == 0 {
        return Err(Error::arg("target size must be positive"));
    }
    let mut out = Vec::with_capacity(samples.len() * ROTATIONS_PER_IMAGE * CROPS_PER_ROTATION);
    for sample in samples {
        for _ in 0..ROTATIONS_PER_IMAGE {
            let angle = rng.random_range(0.0..360.0);
            let rotated = rotate(&sample.image, angle, fill);
            for _ in 0..CROPS_PER_ROTATION {
                let mut p = AugmentParams::sample_local(rng);
                p.angle_deg = angle;
                out.push(Sample {
                    image: crop_stage(&rotated, &p, target)?,
                    label: sample.label,
                });
            }
        }
    }
    Ok(out)
}
