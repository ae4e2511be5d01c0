//! Image containers and pixel-level utilities.
//!
//! Intensities live in `[0, 1]` internally; conversion to and from 8-bit
//! levels happens only at the file boundary (see [`crate::pnm`]).

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major grayscale image with unit-range intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Scalar> GrayImage<T> {
    /// Wrap a row-major buffer. Fails if the length does not match the
    /// dimensions or any value is non-finite.
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::arg(format!(
                "image buffer has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("image contains non-finite intensities"));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    /// Build an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Construct without validation. Callers guarantee the invariants.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.data[row * self.width + col]
    }

    /// Pixel access with coordinates clamped into the image (replicate border).
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> T {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        self.data[row * self.width + col] = value;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(
            self.width,
            self.height,
            self.data.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn min_max(&self) -> (T, T) {
        self.data
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        self.data.iter().copied().sum::<T>() / T::count(self.data.len())
    }

    /// Left-right mirror.
    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |r, c| {
            self.get(r, self.width - 1 - c)
        })
    }

    /// Copy of the `w`x`h` window whose top-left corner is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, w: usize, h: usize) -> Result<Self> {
        if row + h > self.height || col + w > self.width {
            return Err(Error::arg(format!(
                "crop {}x{} at ({}, {}) exceeds {}x{} image",
                w, h, row, col, self.width, self.height
            )));
        }
        Ok(Self::from_fn(w, h, |r, c| self.get(row + r, col + c)))
    }

    pub fn clamp_unit(&self) -> Self {
        self.map(|v| v.max(T::zero()).min(T::one()))
    }

    /// Convert to another scalar precision.
    pub fn cast<U: Scalar>(&self) -> GrayImage<U> {
        GrayImage::from_raw(
            self.width,
            self.height,
            self.data.iter().map(|v| U::cast(v.as_f64())).collect(),
        )
    }

    pub fn same_dims<U>(&self, other: &GrayImage<U>) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Boolean pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::arg(format!(
                "mask buffer has {} values, expected {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(row, col));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value;
    }

    /// Number of `true` pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_clear(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |r, c| {
            self.get(r, self.width - 1 - c)
        })
    }

    pub fn union(&self, other: &BinaryMask) -> Result<Self> {
        self.check_dims(other)?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a || b)
                .collect(),
        })
    }

    /// Number of pixels whose value differs between the two masks.
    pub fn hamming(&self, other: &BinaryMask) -> Result<usize> {
        self.check_dims(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(a, b)| a != b)
            .count())
    }

    /// Dice overlap `2|A∩B| / (|A|+|B|)`; two empty masks score 1.
    pub fn dice(&self, other: &BinaryMask) -> Result<f64> {
        self.check_dims(other)?;
        let inter = self
            .data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count();
        let total = self.count() + other.count();
        if total == 0 {
            return Ok(1.0);
        }
        Ok(2.0 * inter as f64 / total as f64)
    }

    /// Mask pixels with at least one 4-neighbour outside the mask (or on the
    /// image border).
    pub fn contour(&self) -> BinaryMask {
        let (w, h) = (self.width, self.height);
        BinaryMask::from_fn(w, h, |r, c| {
            if !self.get(r, c) {
                return false;
            }
            if r == 0 || c == 0 || r + 1 == h || c + 1 == w {
                return true;
            }
            !(self.get(r - 1, c) && self.get(r + 1, c) && self.get(r, c - 1) && self.get(r, c + 1))
        })
    }

    /// The mask as an intensity image (`true` → 1, `false` → 0).
    pub fn to_image<T: Scalar>(&self) -> GrayImage<T> {
        GrayImage::from_raw(
            self.width,
            self.height,
            self.data
                .iter()
                .map(|&b| if b { T::one() } else { T::zero() })
                .collect(),
        )
    }

    fn check_dims(&self, other: &BinaryMask) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::arg(format!(
                "mask dimensions differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Connected-component labeling: 0 is background, components are `1..=count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    component_count: usize,
}

impl LabelMap {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn component_count(&self) -> usize {
        self.component_count
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.labels[row * self.width + col]
    }

    /// Pixel count of every component, indexed by `label - 1`.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.component_count];
        for &l in &self.labels {
            if l > 0 {
                sizes[l as usize - 1] += 1;
            }
        }
        sizes
    }

    pub fn component_mask(&self, label: u32) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self
                .labels
                .iter()
                .map(|&l| l == label && label != 0)
                .collect(),
        }
    }
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

/// Label the 8-connected components of `mask`. Labels are assigned in the
/// order components are first met by a row-major scan.
pub fn connected_components(mask: &BinaryMask) -> LabelMap {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut queue = VecDeque::new();

    for start in 0..w * h {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        queue.push_back(start);
        while let Some(idx) = queue.pop_front() {
            let (r, c) = ((idx / w) as isize, (idx % w) as isize);
            for (dr, dc) in NEIGHBORS_8 {
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h as isize || nc >= w as isize {
                    continue;
                }
                let n = nr as usize * w + nc as usize;
                if mask.data[n] && labels[n] == 0 {
                    labels[n] = next;
                    queue.push_back(n);
                }
            }
        }
    }

    LabelMap {
        width: w,
        height: h,
        labels,
        component_count: next as usize,
    }
}

/// Mask of the component with the most pixels; ties go to the lowest label.
/// A map without components yields an empty mask.
pub fn largest_component(labels: &LabelMap) -> BinaryMask {
    let sizes = labels.sizes();
    let mut best: Option<(usize, usize)> = None;
    for (i, &s) in sizes.iter().enumerate() {
        if best.is_none_or(|(_, bs)| s > bs) {
            best = Some((i, s));
        }
    }
    match best {
        Some((i, _)) => labels.component_mask(i as u32 + 1),
        None => BinaryMask::empty(labels.width, labels.height),
    }
}

/// Bilinear resampling with corner-aligned sample positions.
///
/// Output pixel `x` samples the source at `x * (w_in - 1) / (w_out - 1)`; a
/// single-pixel axis samples the source centre.
pub fn resize_bilinear<T: Scalar>(
    image: &GrayImage<T>,
    out_w: usize,
    out_h: usize,
) -> Result<GrayImage<T>> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::arg(format!(
            "resize target {}x{} has a zero dimension",
            out_w, out_h
        )));
    }
    if image.is_empty() {
        return Err(Error::arg("cannot resize an empty image"));
    }
    if out_w == image.width && out_h == image.height {
        return Ok(image.clone());
    }

    let xs = sample_positions(image.width, out_w);
    let ys = sample_positions(image.height, out_h);
    let mut data = Vec::with_capacity(out_w * out_h);
    for &y in &ys {
        for &x in &xs {
            data.push(bilinear_at(image, y, x));
        }
    }
    Ok(GrayImage::from_raw(out_w, out_h, data))
}

fn sample_positions(n_in: usize, n_out: usize) -> Vec<f64> {
    if n_out == 1 {
        return vec![(n_in - 1) as f64 * 0.5];
    }
    let scale = (n_in - 1) as f64 / (n_out - 1) as f64;
    (0..n_out).map(|i| i as f64 * scale).collect()
}

/// Bilinear sample at fractional `(y, x)`, which must lie inside the image.
#[inline]
pub(crate) fn bilinear_at<T: Scalar>(image: &GrayImage<T>, y: f64, x: f64) -> T {
    let x0 = (x.floor() as usize).min(image.width - 1);
    let y0 = (y.floor() as usize).min(image.height - 1);
    let x1 = (x0 + 1).min(image.width - 1);
    let y1 = (y0 + 1).min(image.height - 1);
    let fx = T::cast(x - x0 as f64);
    let fy = T::cast(y - y0 as f64);
    let one = T::one();
    let top = image.get(y0, x0) * (one - fx) + image.get(y0, x1) * fx;
    let bottom = image.get(y1, x0) * (one - fx) + image.get(y1, x1) * fx;
    top * (one - fy) + bottom * fy
}
