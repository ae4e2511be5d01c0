use std::cmp::Ordering;

use super::Bm3dProfile;
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Hard,
    Wiener,
}

/// Blocks similar to a reference block, stacked along a third axis.
///
/// `coords[0]` is always the reference. The group length is a power of two;
/// short groups are padded with copies of the reference.
#[derive(Debug, Clone)]
pub struct BlockGroup<T> {
    pub coords: Vec<(usize, usize)>,
    /// Mean squared distance to the reference (unit-range intensities).
    pub distances: Vec<T>,
    /// `len()` row-major `block_size`x`block_size` blocks, back to back.
    pub stack: Vec<T>,
    pub block_size: usize,
}

impl<T: Scalar> BlockGroup<T> {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn block(&self, i: usize) -> &[T] {
        let kk = self.block_size * self.block_size;
        &self.stack[i * kk..(i + 1) * kk]
    }

    /// Stack the blocks of `image` at `coords`.
    pub fn gather(image: &GrayImage<T>, coords: &[(usize, usize)], k: usize) -> Self {
        let mut stack = Vec::with_capacity(coords.len() * k * k);
        for &(row, col) in coords {
            for r in 0..k {
                let start = (row + r) * image.width() + col;
                stack.extend_from_slice(&image.data()[start..start + k]);
            }
        }
        Self {
            coords: coords.to_vec(),
            distances: Vec::new(),
            stack,
            block_size: k,
        }
    }
}

fn block_distance<T: Scalar>(
    image: &GrayImage<T>,
    a: (usize, usize),
    b: (usize, usize),
    k: usize,
) -> T {
    let w = image.width();
    let data = image.data();
    let mut acc = T::zero();
    for r in 0..k {
        let ra = &data[(a.0 + r) * w + a.1..(a.0 + r) * w + a.1 + k];
        let rb = &data[(b.0 + r) * w + b.1..(b.0 + r) * w + b.1 + k];
        for (&x, &y) in ra.iter().zip(rb) {
            let d = x - y;
            acc += d * d;
        }
    }
    acc / T::count(k * k)
}

/// Collect blocks within `search_radius` of `reference` whose mean squared
/// distance to it is at most `tau / 255²`, nearest first.
pub fn block_match<T: Scalar>(
    image: &GrayImage<T>,
    reference: (usize, usize),
    profile: &Bm3dProfile,
    stage: Stage,
) -> Result<BlockGroup<T>> {
    let k = profile.block_size(stage);
    let cap = profile.group_cap(stage);
    let (row, col) = reference;
    if row + k > image.height() || col + k > image.width() {
        return Err(Error::arg(format!(
            "reference block at ({}, {}) with size {} leaves the {}x{} image",
            row,
            col,
            k,
            image.width(),
            image.height()
        )));
    }
    let threshold = T::cast(profile.tau(stage) / (255.0 * 255.0));
    let radius = profile.search_radius;
    let r_lo = row.saturating_sub(radius);
    let r_hi = (row + radius).min(image.height() - k);
    let c_lo = col.saturating_sub(radius);
    let c_hi = (col + radius).min(image.width() - k);

    let mut candidates: Vec<(T, (usize, usize))> = Vec::new();
    for r in r_lo..=r_hi {
        for c in c_lo..=c_hi {
            if (r, c) == reference {
                continue;
            }
            let d = block_distance(image, reference, (r, c), k);
            if d <= threshold {
                candidates.push((d, (r, c)));
            }
        }
    }
    candidates.sort_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.1.cmp(&b.1))
    });
    candidates.truncate(cap - 1);

    let mut coords = Vec::with_capacity(cap);
    let mut distances = Vec::with_capacity(cap);
    coords.push(reference);
    distances.push(T::zero());
    for (d, pos) in candidates {
        coords.push(pos);
        distances.push(d);
    }
    let padded = coords.len().next_power_of_two();
    while coords.len() < padded {
        coords.push(reference);
        distances.push(T::zero());
    }

    let mut group = BlockGroup::gather(image, &coords, k);
    group.distances = distances;
    Ok(group)
}
