//! Preprocessing and segmentation chains built from the core stages.

use anyhow::{Context, Result};
use mammo_core::denoise::bm3d_denoise;
use mammo_core::enhance::{enhance, Enhanced};
use mammo_core::levelset::{evolve, Evolution};
use mammo_core::sfcm::{sfcm_run, tumor_membership_map, SfcmResult};
use mammo_core::{resize_bilinear, BinaryMask, GrayImage};

use crate::config::PipelineConfig;

pub struct Preprocessed {
    pub denoised: GrayImage,
    pub enhanced: Enhanced<f64>,
}

/// Denoise (unless disabled) and enhance.
pub fn preprocess(image: &GrayImage, cfg: &PipelineConfig) -> Result<Preprocessed> {
    let denoised = if cfg.denoise.enabled {
        bm3d_denoise(image, cfg.denoise.sigma, Some(&cfg.bm3d_profile()))
            .context("denoise stage")?
    } else {
        image.clone()
    };
    let enhanced = enhance(&denoised, &cfg.enhance).context("enhancement stage")?;
    Ok(Preprocessed { denoised, enhanced })
}

pub struct Segmentation {
    /// Stages at the working resolution.
    pub pre: Preprocessed,
    pub clusters: SfcmResult<f64>,
    pub membership: GrayImage,
    pub evolution: Evolution<f64>,
    /// Final mask at the input resolution.
    pub mask: BinaryMask,
}

/// Dimensions after fitting the longer side into `max_side` (0: unchanged).
pub fn working_dims(width: usize, height: usize, max_side: usize) -> (usize, usize) {
    let longest = width.max(height);
    if max_side == 0 || longest <= max_side {
        return (width, height);
    }
    let s = max_side as f64 / longest as f64;
    (
        ((width as f64 * s).round() as usize).max(1),
        ((height as f64 * s).round() as usize).max(1),
    )
}

/// Nearest-neighbour resampling of a mask.
pub fn resize_mask(mask: &BinaryMask, width: usize, height: usize) -> BinaryMask {
    if mask.width() == width && mask.height() == height {
        return mask.clone();
    }
    let sy = mask.height() as f64 / height as f64;
    let sx = mask.width() as f64 / width as f64;
    BinaryMask::from_fn(width, height, |r, c| {
        let rr = (((r as f64 + 0.5) * sy) as usize).min(mask.height() - 1);
        let cc = (((c as f64 + 0.5) * sx) as usize).min(mask.width() - 1);
        mask.get(rr, cc)
    })
}

/// Preprocess, cluster, and evolve a level set from the brightest cluster.
pub fn segment(image: &GrayImage, cfg: &PipelineConfig) -> Result<Segmentation> {
    let (w, h) = working_dims(image.width(), image.height(), cfg.pipeline.max_side);
    let working = resize_bilinear(image, w, h).context("resize stage")?;
    let pre = preprocess(&working, cfg)?;
    let clusters =
        sfcm_run(&pre.enhanced.result, &cfg.sfcm_config()).context("clustering stage")?;
    let membership = tumor_membership_map(&clusters.memberships, &clusters.centers);
    let evolution =
        evolve(&membership, &pre.enhanced.result, &cfg.levelset).context("level-set stage")?;
    let mask = resize_mask(&evolution.mask(), image.width(), image.height());
    Ok(Segmentation {
        pre,
        clusters,
        membership,
        evolution,
        mask,
    })
}
