//! Convolutional normal/abnormal classifier built from scratch: layers with
//! exact gradients, SGD with momentum, augmentation, checkpoints.

pub mod augment;
pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod network;
pub mod optim;
pub mod tensor;
pub mod train;

pub use augment::{augment_image, augment_with, build_augmented_set, AugmentParams};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use layers::Mode;
pub use loss::{cross_entropy, softmax_predict};
pub use network::{images_to_tensor, LayerSpec, Network, NetworkConfig};
pub use optim::Sgd;
pub use tensor::Tensor;
pub use train::{
    accuracy, stratified_split, train, EpochRecord, History, Sample, Split, TrainConfig, Trainer,
    ABNORMAL, NORMAL,
};

use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::scalar::Scalar;

/// Majority vote of several models. Probabilities are averaged; a tied
/// vote goes to the class with the higher mean probability (then the
/// lower index).
pub fn ensemble_predict<T: Scalar>(
    models: &[Network<T>],
    image: &GrayImage<T>,
) -> Result<(Vec<T>, usize)> {
    let first = models
        .first()
        .ok_or_else(|| Error::arg("ensemble has no models"))?;
    let k = first.config().num_classes();
    let mut votes = vec![0usize; k];
    let mut mean = vec![T::zero(); k];
    for model in models {
        if model.config().num_classes() != k {
            return Err(Error::arg(
                "ensemble members disagree on the number of classes",
            ));
        }
        let (probs, label) = model.predict(image)?;
        votes[label] += 1;
        for (m, p) in mean.iter_mut().zip(probs) {
            *m += p;
        }
    }
    let n = T::count(models.len());
    mean.iter_mut().for_each(|m| *m /= n);
    let top = *votes.iter().max().expect("k > 0");
    let mut label = votes.iter().position(|&v| v == top).expect("max exists");
    for c in 0..k {
        if votes[c] == top && mean[c] > mean[label] {
            label = c;
        }
    }
    Ok((mean, label))
}
