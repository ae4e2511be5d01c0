//! Synthetic test images with known ground truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::image::{BinaryMask, GrayImage};
use crate::scalar::Scalar;

/// Filled disk of `radius` centred at `(cy, cx)`.
pub fn disk_mask(width: usize, height: usize, cy: f64, cx: f64, radius: f64) -> BinaryMask {
    BinaryMask::from_fn(width, height, |r, c| {
        let (dy, dx) = (r as f64 - cy, c as f64 - cx);
        dy * dy + dx * dx <= radius * radius
    })
}

/// Two-level image: `inside` where the mask is set, `outside` elsewhere.
pub fn two_level<T: Scalar>(mask: &BinaryMask, inside: f64, outside: f64) -> GrayImage<T> {
    GrayImage::from_fn(mask.width(), mask.height(), |r, c| {
        T::cast(if mask.get(r, c) { inside } else { outside })
    })
}

/// Add i.i.d. Gaussian noise with standard deviation `sigma` (unit-range
/// scale). Values are not clamped.
pub fn add_gaussian_noise<T: Scalar>(image: &GrayImage<T>, sigma: f64, seed: u64) -> GrayImage<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("finite sigma");
    let data = image
        .data()
        .iter()
        .map(|&v| T::cast(v.as_f64() + normal.sample(&mut rng)))
        .collect();
    GrayImage::from_raw(image.width(), image.height(), data)
}

/// Piecewise-smooth 128x128-style denoising phantom: a shaded background,
/// a bright rectangle, a darker disk and a thin bar.
pub fn denoise_phantom<T: Scalar>(size: usize) -> GrayImage<T> {
    let s = size as f64;
    GrayImage::from_fn(size, size, |r, c| {
        let (y, x) = (r as f64 / s, c as f64 / s);
        let mut v = 0.25 + 0.15 * x;
        if (0.15..0.45).contains(&y) && (0.1..0.6).contains(&x) {
            v = 0.75;
        }
        if (y - 0.68).powi(2) + (x - 0.62).powi(2) <= 0.2f64.powi(2) {
            v = 0.45;
        }
        if (0.8..0.84).contains(&y) && (0.05..0.4).contains(&x) {
            v = 0.9;
        }
        T::cast(v)
    })
}

/// Mammogram-like layout used by the enhancement tests: a mid-gray
/// half-ellipse breast against the left edge and a bright triangular
/// pectoral region in the top-left corner (`row + col < pectoral_size`).
/// Returns the image, the breast mask and the pectoral mask.
pub fn breast_phantom<T: Scalar>(
    width: usize,
    height: usize,
    pectoral_size: usize,
) -> (GrayImage<T>, BinaryMask, BinaryMask) {
    let (cy, ry, rx) = (height as f64 / 2.0, height as f64 * 0.6, width as f64 * 0.7);
    let breast = BinaryMask::from_fn(width, height, |r, c| {
        let (dy, dx) = ((r as f64 - cy) / ry, c as f64 / rx);
        dy * dy + dx * dx <= 1.0
    });
    let pectoral = BinaryMask::from_fn(width, height, |r, c| {
        breast.get(r, c) && r + c < pectoral_size
    });
    let image = GrayImage::from_fn(width, height, |r, c| {
        T::cast(if pectoral.get(r, c) {
            0.9
        } else if breast.get(r, c) {
            0.5
        } else {
            0.0
        })
    });
    (image, breast, pectoral)
}
