use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::layers::{
    batchnorm2d, batchnorm2d_backward, batchnorm2d_infer, conv2d, conv2d_backward, dense,
    dense_backward, maxpool2d, maxpool2d_backward, output_extent, relu, relu_backward,
    BatchNormCache, BatchNormParams, ConvParams, DenseParams, Mode,
};
use super::loss::softmax_predict;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::image::{resize_bilinear, GrayImage};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Conv {
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
    },
    BatchNorm,
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Dense {
        units: usize,
    },
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            LayerSpec::Conv {
                filters,
                kernel,
                stride,
                padding,
            } => write!(f, "conv:{}x{}s{}p{}", filters, kernel, stride, padding),
            LayerSpec::BatchNorm => f.write_str("bn"),
            LayerSpec::Relu => f.write_str("relu"),
            LayerSpec::MaxPool { window, stride } => write!(f, "pool:{}s{}", window, stride),
            LayerSpec::Dense { units } => write!(f, "dense:{}", units),
        }
    }
}

fn parse_fields(text: &str, seps: &[char]) -> Option<Vec<usize>> {
    let mut out = Vec::new();
    let mut rest = text;
    for &sep in seps {
        let (head, tail) = rest.split_once(sep)?;
        out.push(head.parse().ok()?);
        rest = tail;
    }
    out.push(rest.parse().ok()?);
    Some(out)
}

impl FromStr for LayerSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Format(format!("unrecognized layer spec {:?}", s));
        let (kind, args) = s.split_once(':').unwrap_or((s, ""));
        match kind {
            "bn" => Ok(LayerSpec::BatchNorm),
            "relu" => Ok(LayerSpec::Relu),
            "conv" => match parse_fields(args, &['x', 's', 'p']).as_deref() {
                Some(&[filters, kernel, stride, padding]) => Ok(LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                    padding,
                }),
                _ => Err(bad()),
            },
            "pool" => match parse_fields(args, &['s']).as_deref() {
                Some(&[window, stride]) => Ok(LayerSpec::MaxPool { window, stride }),
                _ => Err(bad()),
            },
            "dense" => args
                .parse()
                .map(|units| LayerSpec::Dense { units })
                .map_err(|_| bad()),
            _ => Err(bad()),
        }
    }
}

/// Architecture and input geometry of the classifier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    /// Side of the square input image in pixels.
    pub input_size: usize,
    pub layers: Vec<LayerSpec>,
}

impl NetworkConfig {
    /// Three AlexNet-style conv blocks, a 300-unit feature layer and a
    /// two-way output. `channel_div` scales every filter count down.
    pub fn alexnet_like(input_size: usize, channel_div: usize, conv1_padding: usize) -> Self {
        use LayerSpec::*;
        let d = channel_div.max(1);
        let pool = MaxPool {
            window: 3,
            stride: 2,
        };
        Self {
            input_size,
            layers: vec![
                Conv {
                    filters: 96 / d,
                    kernel: 11,
                    stride: 4,
                    padding: conv1_padding,
                },
                BatchNorm,
                Relu,
                pool,
                Conv {
                    filters: 256 / d,
                    kernel: 5,
                    stride: 1,
                    padding: 2,
                },
                BatchNorm,
                Relu,
                pool,
                Conv {
                    filters: 384 / d,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                },
                BatchNorm,
                Relu,
                pool,
                Dense { units: 300 },
                Relu,
                Dense { units: 2 },
            ],
        }
    }

    /// Full-width network on 256x256 inputs.
    pub fn full() -> Self {
        Self::alexnet_like(256, 1, 0)
    }

    /// Quarter-width network on 64x64 inputs, small enough for CPU training.
    /// The first convolution is padded so three pooling stages still fit.
    pub fn desk() -> Self {
        Self::alexnet_like(64, 4, 5)
    }

    /// Compact text form, e.g. `in64;conv:24x11s4p5;bn;relu;...`.
    pub fn descriptor(&self) -> String {
        let mut s = format!("in{}", self.input_size);
        for layer in &self.layers {
            s.push(';');
            s.push_str(&layer.to_string());
        }
        s
    }

    pub fn parse_descriptor(text: &str) -> Result<Self> {
        let mut parts = text.trim().split(';');
        let input_size = parts
            .next()
            .and_then(|p| p.strip_prefix("in"))
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| Error::Format(format!("descriptor {:?} lacks an input size", text)))?;
        let layers = parts.map(str::parse).collect::<Result<Vec<_>>>()?;
        let config = Self { input_size, layers };
        config.shapes()?;
        Ok(config)
    }

    pub fn num_classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Dense { units }) => *units,
            _ => 0,
        }
    }

    /// Width of the layer whose activations serve as features: the dense
    /// layer before the output layer.
    pub fn feature_dim(&self) -> usize {
        self.layers[..self.layers.len().saturating_sub(1)]
            .iter()
            .rev()
            .find_map(|l| match l {
                LayerSpec::Dense { units } => Some(*units),
                _ => None,
            })
            .unwrap_or(0)
    }

    /// Per-sample activation shape after each layer, starting with the
    /// `(1, input_size, input_size)` input.
    pub fn shapes(&self) -> Result<Vec<Vec<usize>>> {
        if self.input_size == 0 {
            return Err(Error::arg("input size must be positive"));
        }
        if !matches!(self.layers.last(), Some(LayerSpec::Dense { .. })) {
            return Err(Error::arg("the last layer must be dense"));
        }
        let mut shapes = vec![vec![1, self.input_size, self.input_size]];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = shapes.last().expect("nonempty").clone();
            let next = match (*layer, cur.as_slice()) {
                (
                    LayerSpec::Conv {
                        filters,
                        kernel,
                        stride,
                        padding,
                    },
                    &[_, h, w],
                ) => {
                    match (
                        output_extent(h, kernel, stride, padding),
                        output_extent(w, kernel, stride, padding),
                    ) {
                        (Some(oh), Some(ow)) if filters > 0 => vec![filters, oh, ow],
                        _ => {
                            return Err(Error::arg(format!(
                                "layer {} ({}) does not fit a {}x{} input",
                                i, layer, h, w
                            )))
                        }
                    }
                }
                (LayerSpec::MaxPool { window, stride }, &[c, h, w]) => {
                    match (
                        output_extent(h, window, stride, 0),
                        output_extent(w, window, stride, 0),
                    ) {
                        (Some(oh), Some(ow)) => vec![c, oh, ow],
                        _ => {
                            return Err(Error::arg(format!(
                                "layer {} ({}) does not fit a {}x{} input",
                                i, layer, h, w
                            )))
                        }
                    }
                }
                (LayerSpec::BatchNorm, [_, _, _]) | (LayerSpec::Relu, _) => cur.clone(),
                (LayerSpec::Dense { units }, _) if units > 0 => vec![units],
                _ => {
                    return Err(Error::arg(format!(
                        "layer {} ({}) cannot follow shape {:?}",
                        i, layer, cur
                    )))
                }
            };
            shapes.push(next);
        }
        Ok(shapes)
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::full()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer<T> {
    Conv {
        params: ConvParams<T>,
        stride: usize,
        padding: usize,
    },
    BatchNorm(BatchNormParams<T>),
    Relu,
    MaxPool {
        window: usize,
        stride: usize,
    },
    Dense(DenseParams<T>),
}

/// Per-layer state kept by a training forward pass.
#[derive(Debug)]
enum Saved<T> {
    Input(Tensor<T>),
    Norm(BatchNormCache<T>),
    Pool {
        shape: Vec<usize>,
        argmax: Vec<usize>,
    },
}

/// Forward activations retained for back-propagation.
#[derive(Debug)]
pub struct Trace<T> {
    saved: Vec<Saved<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T> {
    config: NetworkConfig,
    layers: Vec<Layer<T>>,
}

fn he_tensor<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive fan-in");
    Tensor::from_fn(shape, |_| T::cast(normal.sample(rng)))
}

impl<T: Scalar> Network<T> {
    /// Fresh network: He-initialized weights, zero biases, identity batch norm.
    pub fn new<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Result<Self> {
        let shapes = config.shapes()?;
        let layers = config
            .layers
            .iter()
            .zip(&shapes)
            .map(|(spec, input)| match *spec {
                LayerSpec::Conv {
                    filters,
                    kernel,
                    stride,
                    padding,
                } => {
                    let fan_in = input[0] * kernel * kernel;
                    Layer::Conv {
                        params: ConvParams {
                            weight: he_tensor(&[filters, input[0], kernel, kernel], fan_in, rng),
                            bias: Tensor::zeros(&[filters]),
                        },
                        stride,
                        padding,
                    }
                }
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNormParams::new(input[0])),
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool { window, stride } => Layer::MaxPool { window, stride },
                LayerSpec::Dense { units } => {
                    let fan_in: usize = input.iter().product();
                    Layer::Dense(DenseParams {
                        weight: he_tensor(&[units, fan_in], fan_in, rng),
                        bias: Tensor::zeros(&[units]),
                    })
                }
            })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        let s = self.config.input_size;
        if (c, h, w) != (1, s, s) {
            return Err(Error::arg(format!(
                "network expects (N, 1, {}, {}) input, got {:?}",
                s,
                s,
                x.shape()
            )));
        }
        Ok(())
    }

    fn run(&self, x: &Tensor<T>, end: usize) -> Result<Tensor<T>> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers[..end] {
            cur = match layer {
                Layer::Conv {
                    params,
                    stride,
                    padding,
                } => conv2d(&cur, params, *stride, *padding)?,
                Layer::BatchNorm(p) => batchnorm2d_infer(&cur, p)?,
                Layer::Relu => relu(&cur),
                Layer::MaxPool { window, stride } => maxpool2d(&cur, *window, *stride)?.output,
                Layer::Dense(p) => dense(&cur, p)?,
            };
        }
        Ok(cur)
    }

    /// Inference-mode logits, `(N, num_classes)`.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(x, self.layers.len())
    }

    /// Training-mode logits plus the trace needed by [`Network::backward`].
    /// Updates batch-norm running statistics.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<(Tensor<T>, Trace<T>)> {
        self.check_input(x)?;
        let mut cur = x.clone();
        let mut saved = Vec::with_capacity(self.layers.len());
        for layer in &mut self.layers {
            let (next, keep) = match layer {
                Layer::Conv {
                    params,
                    stride,
                    padding,
                } => (conv2d(&cur, params, *stride, *padding)?, Saved::Input(cur)),
                Layer::BatchNorm(p) => {
                    let (y, cache) = batchnorm2d(&cur, p, Mode::Train)?;
                    (
                        y,
                        Saved::Norm(cache.expect("training mode returns a cache")),
                    )
                }
                Layer::Relu => (relu(&cur), Saved::Input(cur)),
                Layer::MaxPool { window, stride } => {
                    let pooled = maxpool2d(&cur, *window, *stride)?;
                    let keep = Saved::Pool {
                        shape: cur.shape().to_vec(),
                        argmax: pooled.argmax,
                    };
                    (pooled.output, keep)
                }
                Layer::Dense(p) => (dense(&cur, p)?, Saved::Input(cur)),
            };
            saved.push(keep);
            cur = next;
        }
        Ok((cur, Trace { saved }))
    }

    /// Parameter gradients, in [`Network::params_mut`] order, for an upstream
    /// gradient on the logits.
    pub fn backward(&self, trace: &Trace<T>, grad_logits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if trace.saved.len() != self.layers.len() {
            return Err(Error::arg("trace does not belong to this network"));
        }
        let mut grad = grad_logits.clone();
        let mut grads: Vec<Tensor<T>> = Vec::new();
        for (layer, saved) in self.layers.iter().zip(&trace.saved).rev() {
            grad = match (layer, saved) {
                (
                    Layer::Conv {
                        params,
                        stride,
                        padding,
                    },
                    Saved::Input(x),
                ) => {
                    let g = conv2d_backward(x, params, *stride, *padding, &grad)?;
                    grads.push(g.bias);
                    grads.push(g.weight);
                    g.input
                }
                (Layer::BatchNorm(p), Saved::Norm(cache)) => {
                    let g = batchnorm2d_backward(p, cache, &grad)?;
                    grads.push(g.beta);
                    grads.push(g.gamma);
                    g.input
                }
                (Layer::Relu, Saved::Input(x)) => relu_backward(x, &grad),
                (Layer::MaxPool { .. }, Saved::Pool { shape, argmax }) => {
                    maxpool2d_backward(shape, argmax, &grad)?
                }
                (Layer::Dense(p), Saved::Input(x)) => {
                    let g = dense_backward(x, p, &grad)?;
                    grads.push(g.bias);
                    grads.push(g.weight);
                    g.input
                }
                _ => return Err(Error::arg("trace does not belong to this network")),
            };
        }
        grads.reverse();
        Ok(grads)
    }

    /// Trainable tensors: weight then bias (gamma then beta for batch norm),
    /// layer by layer.
    pub fn params_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Conv { params, .. } => {
                    out.push(&mut params.weight);
                    out.push(&mut params.bias);
                }
                Layer::BatchNorm(p) => {
                    out.push(&mut p.gamma);
                    out.push(&mut p.beta);
                }
                Layer::Dense(p) => {
                    out.push(&mut p.weight);
                    out.push(&mut p.bias);
                }
                Layer::Relu | Layer::MaxPool { .. } => {}
            }
        }
        out
    }

    /// Every persistent tensor (trainable and running statistics) by name.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Conv { params: p, .. } | Layer::Dense(p) => {
                    out.push((format!("{}.weight", i), &p.weight));
                    out.push((format!("{}.bias", i), &p.bias));
                }
                Layer::BatchNorm(p) => {
                    out.push((format!("{}.gamma", i), &p.gamma));
                    out.push((format!("{}.beta", i), &p.beta));
                    out.push((format!("{}.running_mean", i), &p.running_mean));
                    out.push((format!("{}.running_var", i), &p.running_var));
                }
                Layer::Relu | Layer::MaxPool { .. } => {}
            }
        }
        out
    }

    fn named_tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Conv { params: p, .. } | Layer::Dense(p) => {
                    out.push((format!("{}.weight", i), &mut p.weight));
                    out.push((format!("{}.bias", i), &mut p.bias));
                }
                Layer::BatchNorm(p) => {
                    out.push((format!("{}.gamma", i), &mut p.gamma));
                    out.push((format!("{}.beta", i), &mut p.beta));
                    out.push((format!("{}.running_mean", i), &mut p.running_mean));
                    out.push((format!("{}.running_var", i), &mut p.running_var));
                }
                Layer::Relu | Layer::MaxPool { .. } => {}
            }
        }
        out
    }

    /// Replace the tensor called `name`; the shape must match.
    pub fn set_tensor(&mut self, name: &str, value: Tensor<T>) -> Result<()> {
        for (n, slot) in self.named_tensors_mut() {
            if n == name {
                if slot.shape() != value.shape() {
                    return Err(Error::Format(format!(
                        "tensor {} has shape {:?}, expected {:?}",
                        name,
                        value.shape(),
                        slot.shape()
                    )));
                }
                *slot = value;
                return Ok(());
            }
        }
        Err(Error::Format(format!("unknown tensor {}", name)))
    }

    /// Resize `image` to the network input and wrap it as a `(1, 1, s, s)` tensor.
    pub fn input_tensor(&self, image: &GrayImage<T>) -> Result<Tensor<T>> {
        images_to_tensor(&[image], self.config.input_size)
    }

    /// Class probabilities and predicted label for one image.
    pub fn predict(&self, image: &GrayImage<T>) -> Result<(Vec<T>, usize)> {
        let logits = self.forward(&self.input_tensor(image)?)?;
        Ok(softmax_predict(logits.data()))
    }

    /// Activations of the feature layer (the dense layer before the output,
    /// after its nonlinearity) for one image.
    pub fn extract_features(&self, image: &GrayImage<T>) -> Result<Vec<T>> {
        let out = self.run(&self.input_tensor(image)?, self.layers.len() - 1)?;
        Ok(out.into_data())
    }
}

/// Stack images, each resized to `size`x`size`, into an `(N, 1, size, size)` batch.
pub fn images_to_tensor<T: Scalar>(images: &[&GrayImage<T>], size: usize) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(images.len() * size * size);
    for image in images {
        if image.width() == size && image.height() == size {
            data.extend_from_slice(image.data());
        } else {
            data.extend_from_slice(resize_bilinear(image, size, size)?.data());
        }
    }
    Ok(Tensor::from_raw(vec![images.len(), 1, size, size], data))
}
