//! Two-stage mammogram analysis: CNN normal/abnormal classification and
//! tumor segmentation by a level set seeded from spatial fuzzy c-means,
//! preceded by BM3D-style denoising and contrast enhancement.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision to `f64`, which the pipeline uses by default.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cnn;
pub mod dataset;
pub mod denoise;
pub mod enhance;
pub mod error;
pub mod image;
pub mod levelset;
pub mod metrics;
pub mod phantom;
pub mod pnm;
pub mod scalar;
pub mod sfcm;

pub use error::{Error, Result};
pub use image::{connected_components, largest_component, resize_bilinear, BinaryMask, LabelMap};
pub use scalar::Scalar;

pub type GrayImage = image::GrayImage<f64>;
pub type GrayImageF32 = image::GrayImage<f32>;

pub type Tensor = cnn::Tensor<f64>;
pub type Network = cnn::Network<f64>;
pub type Sample = cnn::Sample<f64>;
pub type LabeledImage = dataset::LabeledImage<f64>;
