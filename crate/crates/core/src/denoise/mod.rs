//! Simplified two-stage BM3D: collaborative hard thresholding followed by
//! empirical Wiener filtering on groups of matched blocks.
//!
//! Noise levels and block-distance thresholds are expressed on the 8-bit
//! scale, as is customary for BM3D parameter tables, and rescaled to the
//! internal unit range.

mod matching;
pub mod transform;

pub use matching::{block_match, BlockGroup, Stage};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::scalar::Scalar;
use transform::{forward_3d, inverse_3d, Dct2d};

/// σ (8-bit scale) at and above which the high-noise thresholds apply.
pub const HIGH_NOISE_SIGMA: f64 = 40.0;

/// BM3D tuning parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Bm3dProfile {
    pub k_hard: usize,
    pub k_wie: usize,
    pub n_hard: usize,
    pub n_wie: usize,
    /// Hard-threshold multiplier applied to σ.
    pub lambda_3d: f64,
    /// Mean squared block distance thresholds on the 8-bit scale.
    pub tau_hard: f64,
    pub tau_wie: f64,
    pub search_radius: usize,
    pub step: usize,
}

impl Default for Bm3dProfile {
    /// Low-noise profile.
    fn default() -> Self {
        Self {
            k_hard: 8,
            k_wie: 8,
            n_hard: 16,
            n_wie: 16,
            lambda_3d: 2.7,
            tau_hard: 400.0,
            tau_wie: 2500.0,
            search_radius: 16,
            step: 4,
        }
    }
}

impl Bm3dProfile {
    pub fn high_noise() -> Self {
        Self {
            tau_hard: 5000.0,
            tau_wie: 3500.0,
            ..Self::default()
        }
    }

    /// Default profile for a noise level σ on the 8-bit scale.
    pub fn for_sigma(sigma: f64) -> Self {
        Self::for_sigma_with_cutoff(sigma, HIGH_NOISE_SIGMA)
    }

    pub fn for_sigma_with_cutoff(sigma: f64, cutoff: f64) -> Self {
        if sigma >= cutoff {
            Self::high_noise()
        } else {
            Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, k) in [("k_hard", self.k_hard), ("k_wie", self.k_wie)] {
            if k < 4 {
                return Err(Error::arg(format!("{} = {} must be at least 4", name, k)));
            }
        }
        for (name, n) in [("n_hard", self.n_hard), ("n_wie", self.n_wie)] {
            if n == 0 || !n.is_power_of_two() {
                return Err(Error::arg(format!(
                    "{} = {} must be a power of two",
                    name, n
                )));
            }
        }
        if !(self.lambda_3d > 0.0) {
            return Err(Error::arg("lambda_3d must be positive"));
        }
        if !(self.tau_hard > 0.0 && self.tau_wie > 0.0) {
            return Err(Error::arg("block-match thresholds must be positive"));
        }
        if self.step == 0 {
            return Err(Error::arg("reference step must be at least 1"));
        }
        Ok(())
    }

    pub(crate) fn block_size(&self, stage: Stage) -> usize {
        match stage {
            Stage::Hard => self.k_hard,
            Stage::Wiener => self.k_wie,
        }
    }

    pub(crate) fn group_cap(&self, stage: Stage) -> usize {
        match stage {
            Stage::Hard => self.n_hard,
            Stage::Wiener => self.n_wie,
        }
    }

    pub(crate) fn tau(&self, stage: Stage) -> f64 {
        match stage {
            Stage::Hard => self.tau_hard,
            Stage::Wiener => self.tau_wie,
        }
    }
}

/// Reference anchors along one axis: every `step` pixels plus the last
/// block position so the border is always covered.
fn anchors(extent: usize, k: usize, step: usize) -> Vec<usize> {
    let last = extent - k;
    let mut out: Vec<usize> = (0..=last).step_by(step).collect();
    if *out.last().unwrap() != last {
        out.push(last);
    }
    out
}

struct Aggregator<T> {
    width: usize,
    num: Vec<T>,
    den: Vec<T>,
}

impl<T: Scalar> Aggregator<T> {
    fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            num: vec![T::zero(); width * height],
            den: vec![T::zero(); width * height],
        }
    }

    fn add_block(&mut self, (row, col): (usize, usize), k: usize, block: &[T], weight: T) {
        for r in 0..k {
            let base = (row + r) * self.width + col;
            for c in 0..k {
                self.num[base + c] += weight * block[r * k + c];
                self.den[base + c] += weight;
            }
        }
    }

    fn finish(self, height: usize) -> Result<GrayImage<T>> {
        let mut data = Vec::with_capacity(self.num.len());
        for (n, d) in self.num.into_iter().zip(self.den) {
            if !(d > T::zero()) {
                return Err(Error::Divergence(
                    "pixel not covered by any reference block".into(),
                ));
            }
            data.push((n / d).max(T::zero()).min(T::one()));
        }
        Ok(GrayImage::from_raw(self.width, height, data))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::arg(format!(
            "noise sigma must be positive, got {}",
            sigma
        )));
    }
    Ok(())
}

fn check_size<T: Scalar>(image: &GrayImage<T>, k: usize) -> Result<()> {
    if image.width() < k || image.height() < k {
        return Err(Error::arg(format!(
            "{}x{} image is smaller than the {}x{} block",
            image.width(),
            image.height(),
            k,
            k
        )));
    }
    Ok(())
}

/// First stage: collaborative hard thresholding of the 3-D group spectra.
///
/// `sigma` is the noise standard deviation on the 8-bit scale.
pub fn hard_stage<T: Scalar>(
    noisy: &GrayImage<T>,
    sigma: f64,
    profile: &Bm3dProfile,
) -> Result<GrayImage<T>> {
    check_sigma(sigma)?;
    profile.validate()?;
    let k = profile.k_hard;
    check_size(noisy, k)?;
    let threshold = T::cast(profile.lambda_3d * sigma / 255.0);
    let mut dct = Dct2d::new(k);
    let mut agg = Aggregator::new(noisy.width(), noisy.height());

    for &row in &anchors(noisy.height(), k, profile.step) {
        for &col in &anchors(noisy.width(), k, profile.step) {
            let mut group = block_match(noisy, (row, col), profile, Stage::Hard)?;
            let g = group.len();
            forward_3d(&mut dct, &mut group.stack, g);
            let mut retained = 0usize;
            // index 0 is the DC of the whole group and is never thresholded
            for c in group.stack.iter_mut().skip(1) {
                if c.abs() < threshold {
                    *c = T::zero();
                } else if *c != T::zero() {
                    retained += 1;
                }
            }
            inverse_3d(&mut dct, &mut group.stack, g);
            let weight = T::one() / T::count(1 + retained);
            for (i, &pos) in group.coords.iter().enumerate() {
                agg.add_block(pos, k, group.block(i), weight);
            }
        }
    }
    agg.finish(noisy.height())
}

/// Second stage: empirical Wiener shrinkage of the noisy group spectra,
/// steered by groups matched on the basic estimate.
pub fn wiener_stage<T: Scalar>(
    noisy: &GrayImage<T>,
    basic: &GrayImage<T>,
    sigma: f64,
    profile: &Bm3dProfile,
) -> Result<GrayImage<T>> {
    check_sigma(sigma)?;
    profile.validate()?;
    if !noisy.same_dims(basic) {
        return Err(Error::arg(format!(
            "basic estimate is {}x{} but noisy image is {}x{}",
            basic.width(),
            basic.height(),
            noisy.width(),
            noisy.height()
        )));
    }
    let k = profile.k_wie;
    check_size(noisy, k)?;
    let noise_power = T::cast((sigma / 255.0).powi(2));
    let mut dct = Dct2d::new(k);
    let mut agg = Aggregator::new(noisy.width(), noisy.height());

    for &row in &anchors(noisy.height(), k, profile.step) {
        for &col in &anchors(noisy.width(), k, profile.step) {
            let mut pilot = block_match(basic, (row, col), profile, Stage::Wiener)?;
            let mut group = BlockGroup::gather(noisy, &pilot.coords, k);
            let g = group.len();
            forward_3d(&mut dct, &mut pilot.stack, g);
            forward_3d(&mut dct, &mut group.stack, g);

            // the group DC passes unshrunk, as in the hard stage
            let mut energy = T::one();
            for (c, &b) in group.stack.iter_mut().zip(&pilot.stack).skip(1) {
                let b2 = b * b;
                let w = b2 / (b2 + noise_power);
                *c *= w;
                energy += w * w;
            }
            inverse_3d(&mut dct, &mut group.stack, g);
            let weight = T::one() / (T::one() + energy);
            for (i, &pos) in group.coords.iter().enumerate() {
                agg.add_block(pos, k, group.block(i), weight);
            }
        }
    }
    agg.finish(noisy.height())
}

/// Full two-stage denoiser. Without an explicit profile the low- or
/// high-noise defaults are chosen from `sigma`.
pub fn bm3d_denoise<T: Scalar>(
    noisy: &GrayImage<T>,
    sigma: f64,
    profile: Option<&Bm3dProfile>,
) -> Result<GrayImage<T>> {
    check_sigma(sigma)?;
    let chosen;
    let profile = match profile {
        Some(p) => p,
        None => {
            chosen = Bm3dProfile::for_sigma(sigma);
            &chosen
        }
    };
    let basic = hard_stage(noisy, sigma, profile)?;
    wiener_stage(noisy, &basic, sigma, profile)
}

/// Peak signal-to-noise ratio in dB for unit-range images.
pub fn psnr<T: Scalar>(reference: &GrayImage<T>, estimate: &GrayImage<T>) -> Result<f64> {
    if !reference.same_dims(estimate) {
        return Err(Error::arg("PSNR operands differ in size"));
    }
    let mse = reference
        .data()
        .iter()
        .zip(estimate.data())
        .map(|(&a, &b)| (a - b).as_f64().powi(2))
        .sum::<f64>()
        / reference.len() as f64;
    Ok(10.0 * (1.0 / mse).log10())
}
