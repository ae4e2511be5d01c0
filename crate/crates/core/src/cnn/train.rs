use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::build_augmented_set;
use super::loss::{cross_entropy, softmax_predict};
use super::network::{images_to_tensor, Network, NetworkConfig};
use super::optim::Sgd;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::image::{resize_bilinear, GrayImage};
use crate::scalar::Scalar;

pub const NORMAL: usize = 0;
pub const ABNORMAL: usize = 1;

/// Image with its class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    pub image: GrayImage<T>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub seed: u64,
    pub augment: bool,
    /// Share of each class held out for testing.
    pub test_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 20,
            batch_size: 32,
            momentum: 0.9,
            seed: 0,
            augment: true,
            test_fraction: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::arg("epochs must be at least 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::arg(
                "batch size must be at least 2 (batch norm needs batch statistics)",
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::arg(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return Err(Error::arg(format!(
                "test fraction must lie in [0, 1), got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's training batches.
    pub train_loss: f64,
    /// Accuracy of the training-mode predictions made during the epoch.
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
}

impl History {
    /// One JSON object per line.
    pub fn write_json_lines<W: Write>(&self, mut out: W) -> Result<()> {
        for record in &self.epochs {
            let line = serde_json::to_string(record).map_err(|e| Error::Format(e.to_string()))?;
            writeln!(out, "{}", line).map_err(|e| Error::io("writing training history", e))?;
        }
        Ok(())
    }
}

/// Indices of a per-class shuffled hold-out split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Hold out `round(n_c * test_fraction)` items of every class `c` (at least
/// one when the fraction is positive and the class has two or more items).
/// Both lists are returned in ascending order.
pub fn stratified_split(labels: &[usize], test_fraction: f64, seed: u64) -> Split {
    let mut rng = stream(seed, STREAM_SPLIT);
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for class in 0..classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let mut k = (n as f64 * test_fraction).round() as usize;
        if test_fraction > 0.0 && n >= 2 {
            k = k.clamp(1, n - 1);
        }
        test.extend_from_slice(&idx[..k.min(n)]);
        train.extend_from_slice(&idx[k.min(n)..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Split { train, test }
}

const STREAM_INIT: u64 = 0;
const STREAM_SPLIT: u64 = 1;
const STREAM_AUGMENT: u64 = 2;
const STREAM_SHUFFLE: u64 = 3;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn resized<T: Scalar>(samples: &[Sample<T>], size: usize) -> Result<Vec<Sample<T>>> {
    samples
        .iter()
        .map(|s| {
            let image = if s.image.width() == size && s.image.height() == size {
                s.image.clone()
            } else {
                resize_bilinear(&s.image, size, size)?
            };
            Ok(Sample {
                image,
                label: s.label,
            })
        })
        .collect()
}

/// Fraction of `samples` whose inference-mode prediction matches the label.
pub fn accuracy<T: Scalar>(network: &Network<T>, samples: &[Sample<T>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::arg("accuracy of an empty set"));
    }
    let mut correct = 0;
    for chunk in samples.chunks(64) {
        let images: Vec<&GrayImage<T>> = chunk.iter().map(|s| &s.image).collect();
        let logits = network.forward(&images_to_tensor(&images, network.config().input_size)?)?;
        let k = network.config().num_classes();
        for (row, s) in logits.data().chunks(k).zip(chunk) {
            if softmax_predict(row).1 == s.label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}

/// Epoch-at-a-time mini-batch trainer.
pub struct Trainer<T> {
    network: Network<T>,
    optimizer: Sgd<T>,
    config: TrainConfig,
    train_set: Vec<Sample<T>>,
    test_set: Vec<Sample<T>>,
    shuffle_rng: ChaCha8Rng,
    history: History,
}

impl<T: Scalar> Trainer<T> {
    /// Split `samples`, prepare the training set (augmented or plainly
    /// resized) and initialize the network.
    pub fn new(
        samples: &[Sample<T>],
        network_config: NetworkConfig,
        config: TrainConfig,
    ) -> Result<Self> {
        config.validate()?;
        let classes = network_config.num_classes();
        network_config.shapes()?;
        if samples.is_empty() {
            return Err(Error::arg("training set is empty"));
        }
        if let Some(s) = samples.iter().find(|s| s.label >= classes) {
            return Err(Error::arg(format!(
                "label {} out of range for {} classes",
                s.label, classes
            )));
        }
        let present = (0..classes)
            .filter(|&c| samples.iter().any(|s| s.label == c))
            .count();
        if present < 2 {
            return Err(Error::arg("training needs at least two classes present"));
        }

        let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
        let split = stratified_split(&labels, config.test_fraction, config.seed);
        let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
        let (train_src, test_src) = (pick(&split.train), pick(&split.test));
        if train_src.len() < 2 {
            return Err(Error::arg("training split has fewer than two images"));
        }

        let size = network_config.input_size;
        let train_set = if config.augment {
            let total: f64 = train_src
                .iter()
                .map(|s| s.image.mean().as_f64() * s.image.len() as f64)
                .sum();
            let pixels: usize = train_src.iter().map(|s| s.image.len()).sum();
            let fill = T::cast(total / pixels as f64);
            build_augmented_set(
                &train_src,
                &mut stream(config.seed, STREAM_AUGMENT),
                size,
                fill,
            )?
        } else {
            resized(&train_src, size)?
        };
        let test_set = resized(&test_src, size)?;
        let network = Network::new(network_config, &mut stream(config.seed, STREAM_INIT))?;
        Ok(Self {
            network,
            optimizer: Sgd::new(config.learning_rate, config.momentum),
            shuffle_rng: stream(config.seed, STREAM_SHUFFLE),
            config,
            train_set,
            test_set,
            history: History::default(),
        })
    }

    pub fn network(&self) -> &Network<T> {
        &self.network
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn train_set(&self) -> &[Sample<T>] {
        &self.train_set
    }

    pub fn test_set(&self) -> &[Sample<T>] {
        &self.test_set
    }

    /// Batches of shuffled indices; a trailing single item joins the
    /// previous batch so every batch has at least two.
    fn batches(&mut self) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.train_set.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let mut batches: Vec<Vec<usize>> = order
            .chunks(self.config.batch_size)
            .map(<[usize]>::to_vec)
            .collect();
        if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
            let last = batches.pop().expect("nonempty");
            batches.last_mut().expect("nonempty").extend(last);
        }
        batches
    }

    pub fn run_epoch(&mut self) -> Result<&EpochRecord> {
        let size = self.network.config().input_size;
        let classes = self.network.config().num_classes();
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        let batches = self.batches();
        for batch in &batches {
            let images: Vec<&GrayImage<T>> =
                batch.iter().map(|&i| &self.train_set[i].image).collect();
            let x = images_to_tensor(&images, size)?;
            let (logits, trace) = self.network.forward_train(&x)?;
            let b = T::count(batch.len());
            let mut grad = Vec::with_capacity(logits.len());
            let mut batch_loss = 0.0;
            for (row, &i) in logits.data().chunks(classes).zip(batch) {
                let label = self.train_set[i].label;
                let (probs, predicted) = softmax_predict(row);
                let (loss, g) = cross_entropy(&probs, label);
                batch_loss += loss.as_f64();
                correct += usize::from(predicted == label);
                grad.extend(g.into_iter().map(|v| v / b));
            }
            if !batch_loss.is_finite() {
                return Err(Error::Divergence(format!(
                    "training loss became non-finite in epoch {}",
                    self.history.epochs.len() + 1
                )));
            }
            loss_sum += batch_loss / batch.len() as f64;
            let grad = Tensor::from_raw(vec![batch.len(), classes], grad);
            let grads = self.network.backward(&trace, &grad)?;
            self.optimizer.step(self.network.params_mut(), &grads)?;
        }
        let test_accuracy = if self.test_set.is_empty() {
            None
        } else {
            Some(accuracy(&self.network, &self.test_set)?)
        };
        let record = EpochRecord {
            epoch: self.history.epochs.len() + 1,
            train_loss: loss_sum / batches.len() as f64,
            train_accuracy: correct as f64 / self.train_set.len() as f64,
            test_accuracy,
        };
        log::info!(
            "epoch {} loss {:.5} train acc {:.4} test acc {}",
            record.epoch,
            record.train_loss,
            record.train_accuracy,
            record
                .test_accuracy
                .map_or("n/a".to_string(), |a| format!("{:.4}", a))
        );
        self.history.epochs.push(record);
        Ok(self.history.epochs.last().expect("just pushed"))
    }

    pub fn into_parts(self) -> (Network<T>, History) {
        (self.network, self.history)
    }
}

/// Train for `config.epochs` epochs and return the model and its history.
pub fn train<T: Scalar>(
    samples: &[Sample<T>],
    network_config: NetworkConfig,
    config: TrainConfig,
) -> Result<(Network<T>, History)> {
    let epochs = config.epochs;
    let mut trainer = Trainer::new(samples, network_config, config)?;
    for _ in 0..epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.into_parts())
}
