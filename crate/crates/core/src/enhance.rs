//! Post-denoise enhancement: median filtering, intensity normalization,
//! Otsu thresholding, artifact/tag removal and pectoral-muscle removal.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::image::{connected_components, largest_component, BinaryMask, GrayImage};
use crate::scalar::{quantize, to_8bit, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct EnhanceConfig {
    /// Median window side length in pixels.
    pub median_window: usize,
    /// Normalization target range on the 8-bit scale.
    pub r1: f64,
    pub r2: f64,
    /// Region-growing tolerance in gray levels.
    pub pectoral_tolerance: f64,
    /// Largest accepted pectoral region, as a fraction of breast area.
    pub pectoral_area_cap: f64,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self {
            median_window: 10,
            r1: 60.0,
            r2: 210.0,
            pectoral_tolerance: 16.0,
            pectoral_area_cap: 0.5,
        }
    }
}

impl EnhanceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.median_window == 0 {
            return Err(Error::arg("median window must be at least 1"));
        }
        check_range(self.r1, self.r2)?;
        if !(self.pectoral_tolerance >= 0.0) {
            return Err(Error::arg("pectoral tolerance must be non-negative"));
        }
        if !(self.pectoral_area_cap > 0.0 && self.pectoral_area_cap <= 1.0) {
            return Err(Error::arg("pectoral area cap must lie in (0, 1]"));
        }
        Ok(())
    }
}

fn check_range(r1: f64, r2: f64) -> Result<()> {
    if !(0.0 <= r1 && r1 < r2 && r2 <= 255.0) {
        return Err(Error::arg(format!(
            "normalization range must satisfy 0 <= r1 < r2 <= 255, got {}..{}",
            r1, r2
        )));
    }
    Ok(())
}

/// Median over a `window`x`window` neighbourhood with replicate borders.
///
/// The window spans offsets `-(window/2) ..= window - 1 - window/2`, so even
/// windows extend one pixel further up/left than down/right. For an even
/// number of samples the two middle order statistics are averaged.
pub fn median_filter<T: Scalar>(image: &GrayImage<T>, window: usize) -> Result<GrayImage<T>> {
    if window == 0 {
        return Err(Error::arg("median window must be at least 1"));
    }
    if window == 1 {
        return Ok(image.clone());
    }
    let before = (window / 2) as isize;
    let (w, h) = (image.width(), image.height());
    let n = window * window;
    let mut buf = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(w * h);
    let cmp = |a: &T, b: &T| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal);

    for r in 0..h as isize {
        for c in 0..w as isize {
            buf.clear();
            for dr in 0..window as isize {
                for dc in 0..window as isize {
                    buf.push(image.get_clamped(r - before + dr, c - before + dc));
                }
            }
            let mid = n / 2;
            let (lower, upper, _) = buf.select_nth_unstable_by(mid, cmp);
            let upper = *upper;
            let value = if n % 2 == 1 {
                upper
            } else {
                let below = lower.iter().copied().fold(T::neg_infinity(), T::max);
                (below + upper) / T::cast(2.0)
            };
            data.push(value);
        }
    }
    Ok(GrayImage::from_raw(w, h, data))
}

/// Linear stretch of the intensity range onto `[r1, r2]` (8-bit scale),
/// returned on the unit scale.
pub fn normalize<T: Scalar>(image: &GrayImage<T>, r1: f64, r2: f64) -> Result<GrayImage<T>> {
    check_range(r1, r2)?;
    let (lo, hi) = image.min_max();
    let (lo, hi) = (to_8bit(lo), to_8bit(hi));
    if !(hi > lo) {
        return Err(Error::Degenerate(
            "cannot normalize a constant image".into(),
        ));
    }
    let (r1, r2) = (T::cast(r1), T::cast(r2));
    let span = hi - lo;
    let full = T::cast(255.0);
    Ok(image.map(|v| (r1 + (to_8bit(v) - lo) / span * (r2 - r1)) / full))
}

/// 256-bin histogram of quantized intensities.
pub fn histogram<T: Scalar>(image: &GrayImage<T>) -> [u64; 256] {
    let mut hist = [0u64; 256];
    for &v in image.data() {
        hist[quantize(v) as usize] += 1;
    }
    hist
}

/// Between-class variance numerator `(s0 n1 - s1 n0)^2 / (n0 n1)` for the
/// split `level <= t`. Proportional to `w0 w1 (m0 - m1)^2`; `None` when a
/// class is empty.
pub fn between_class_score(n0: u64, s0: u64, n1: u64, s1: u64) -> Option<f64> {
    if n0 == 0 || n1 == 0 {
        return None;
    }
    let diff = s0 as i128 * n1 as i128 - s1 as i128 * n0 as i128;
    let d = diff as f64;
    Some(d * d / (n0 as f64 * n1 as f64))
}

/// Otsu threshold of a 256-bin histogram. Ties resolve to the lowest level;
/// a histogram with a single occupied level returns that level.
pub fn otsu_from_histogram(hist: &[u64; 256]) -> u8 {
    let total_n: u64 = hist.iter().sum();
    let total_s: u64 = hist.iter().enumerate().map(|(l, &c)| l as u64 * c).sum();
    let (mut n0, mut s0) = (0u64, 0u64);
    let mut best: Option<(u8, f64)> = None;
    for (t, &count) in hist.iter().enumerate() {
        n0 += count;
        s0 += t as u64 * count;
        if let Some(score) = between_class_score(n0, s0, total_n - n0, total_s - s0) {
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((t as u8, score));
            }
        }
    }
    match best {
        Some((t, _)) => t,
        // at most one occupied level
        None => hist.iter().position(|&c| c > 0).unwrap_or(0) as u8,
    }
}

/// Otsu's threshold and the mask of pixels strictly above it.
pub fn otsu_threshold<T: Scalar>(image: &GrayImage<T>) -> (u8, BinaryMask) {
    let t = otsu_from_histogram(&histogram(image));
    let mask = BinaryMask::from_fn(image.width(), image.height(), |r, c| {
        quantize(image.get(r, c)) > t
    });
    (t, mask)
}

/// Keep only the largest bright component (the breast); zero everything else.
pub fn remove_artifacts<T: Scalar>(image: &GrayImage<T>) -> GrayImage<T> {
    let (_, mask) = otsu_threshold(image);
    let breast = largest_component(&connected_components(&mask));
    let data = image
        .data()
        .iter()
        .zip(breast.data())
        .map(|(&v, &keep)| if keep { v } else { T::zero() })
        .collect();
    GrayImage::from_raw(image.width(), image.height(), data)
}

const NEIGHBORS_8: [(isize, isize); 8] = [
    (-1, -1),
    (-1, 0),
    (-1, 1),
    (0, -1),
    (0, 1),
    (1, -1),
    (1, 0),
    (1, 1),
];

/// Seeded region growing of the pectoral muscle from the top-left corner
/// (after mirroring so the chest wall is on the left).
///
/// The region is accepted only if it touches both the top and the left
/// border and covers less than `pectoral_area_cap` of the breast; otherwise
/// the image is returned unchanged with an empty mask.
pub fn remove_pectoral<T: Scalar>(
    image: &GrayImage<T>,
    config: &EnhanceConfig,
) -> (GrayImage<T>, BinaryMask) {
    let (w, h) = (image.width(), image.height());
    let unchanged = || (image.clone(), BinaryMask::empty(w, h));
    if image.is_empty() {
        return unchanged();
    }

    let half = w / 2;
    let left: T = (0..h)
        .flat_map(|r| (0..half).map(move |c| (r, c)))
        .map(|(r, c)| image.get(r, c))
        .sum();
    let right: T = (0..h)
        .flat_map(|r| (w - half..w).map(move |c| (r, c)))
        .map(|(r, c)| image.get(r, c))
        .sum();
    let mirrored = right > left;
    let work = if mirrored {
        image.flip_horizontal()
    } else {
        image.clone()
    };

    let breast_area = work.data().iter().filter(|&&v| v > T::zero()).count();
    let seed = (h * 2 / 100, w * 2 / 100);
    if breast_area == 0 || !(work.get(seed.0, seed.1) > T::zero()) {
        return unchanged();
    }
    let limit = config.pectoral_area_cap * breast_area as f64;
    let tol = T::cast(config.pectoral_tolerance / 255.0);

    let mut region = BinaryMask::empty(w, h);
    region.set(seed.0, seed.1, true);
    let mut size = 1usize;
    let mut sum = work.get(seed.0, seed.1);
    let mut queue = VecDeque::from([seed]);
    while let Some((r, c)) = queue.pop_front() {
        for (dr, dc) in NEIGHBORS_8 {
            let (nr, nc) = (r as isize + dr, c as isize + dc);
            if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                continue;
            }
            let (nr, nc) = (nr as usize, nc as usize);
            let v = work.get(nr, nc);
            if region.get(nr, nc) || !(v > T::zero()) {
                continue;
            }
            let mean = sum / T::count(size);
            if (v - mean).abs() <= tol {
                region.set(nr, nc, true);
                size += 1;
                sum += v;
                queue.push_back((nr, nc));
            }
        }
        if size as f64 >= limit {
            return unchanged();
        }
    }

    let touches_top = (0..w).any(|c| region.get(0, c));
    let touches_left = (0..h).any(|r| region.get(r, 0));
    if !touches_top || !touches_left {
        return unchanged();
    }

    let data = work
        .data()
        .iter()
        .zip(region.data())
        .map(|(&v, &inside)| if inside { T::zero() } else { v })
        .collect();
    let cleaned = GrayImage::from_raw(w, h, data);
    if mirrored {
        (cleaned.flip_horizontal(), region.flip_horizontal())
    } else {
        (cleaned, region)
    }
}

/// Every intermediate of the enhancement chain.
#[derive(Debug, Clone)]
pub struct Enhanced<T> {
    pub median: GrayImage<T>,
    pub normalized: GrayImage<T>,
    pub artifact_free: GrayImage<T>,
    pub result: GrayImage<T>,
    pub pectoral: BinaryMask,
}

/// Median → normalize → artifact removal → pectoral removal. The input is
/// expected to be denoised already.
pub fn enhance<T: Scalar>(image: &GrayImage<T>, config: &EnhanceConfig) -> Result<Enhanced<T>> {
    config.validate()?;
    let median = median_filter(image, config.median_window)?;
    let normalized = normalize(&median, config.r1, config.r2)?;
    let artifact_free = remove_artifacts(&normalized);
    let (result, pectoral) = remove_pectoral(&artifact_free, config);
    Ok(Enhanced {
        median,
        normalized,
        artifact_free,
        result,
        pectoral,
    })
}
