use mammo_core::cnn::layers::{
    batchnorm2d, batchnorm2d_backward, conv2d, conv2d_backward, dense, dense_backward, maxpool2d,
    maxpool2d_backward, relu, relu_backward, BatchNormParams, Mode, WeightBias,
};
use mammo_core::cnn::{cross_entropy, softmax_predict, Network, NetworkConfig, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-3;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Max relative error between `analytic` and central differences of `loss`
/// with respect to every entry of `x`.
fn check(x: &Tensor<f64>, analytic: &Tensor<f64>, loss: impl Fn(&Tensor<f64>) -> f64) -> f64 {
    assert_eq!(x.shape(), analytic.shape());
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
        let a = analytic.data()[i];
        let scale = a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max((a - numeric).abs() / scale);
    }
    worst
}

/// Scalar probe `sum(r * y)` and its gradient `r`.
fn probe(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    random(shape, rng)
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

#[test]
fn conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (stride, padding) in [(1, 1), (1, 0), (2, 1)] {
        let x = random(&[1, 3, 8, 8], &mut rng);
        let p = WeightBias {
            weight: random(&[4, 3, 3, 3], &mut rng),
            bias: random(&[4], &mut rng),
        };
        let y = conv2d(&x, &p, stride, padding).unwrap();
        let r = probe(y.shape(), &mut rng);
        let g = conv2d_backward(&x, &p, stride, padding, &r).unwrap();

        let ex = check(&x, &g.input, |x| {
            dot(&r, &conv2d(x, &p, stride, padding).unwrap())
        });
        let ew = check(&p.weight, &g.weight, |w| {
            let q = WeightBias {
                weight: w.clone(),
                bias: p.bias.clone(),
            };
            dot(&r, &conv2d(&x, &q, stride, padding).unwrap())
        });
        let eb = check(&p.bias, &g.bias, |b| {
            let q = WeightBias {
                weight: p.weight.clone(),
                bias: b.clone(),
            };
            dot(&r, &conv2d(&x, &q, stride, padding).unwrap())
        });
        assert!(
            ex < TOL && ew < TOL && eb < TOL,
            "stride {stride} pad {padding}: {ex} {ew} {eb}"
        );
    }
}

#[test]
fn batched_conv_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = random(&[2, 2, 6, 5], &mut rng);
    let p = WeightBias {
        weight: random(&[3, 2, 5, 5], &mut rng),
        bias: random(&[3], &mut rng),
    };
    let y = conv2d(&x, &p, 2, 2).unwrap();
    let r = probe(y.shape(), &mut rng);
    let g = conv2d_backward(&x, &p, 2, 2, &r).unwrap();
    assert!(check(&x, &g.input, |x| dot(&r, &conv2d(x, &p, 2, 2).unwrap())) < TOL);
    let ew = check(&p.weight, &g.weight, |w| {
        let q = WeightBias {
            weight: w.clone(),
            bias: p.bias.clone(),
        };
        dot(&r, &conv2d(&x, &q, 2, 2).unwrap())
    });
    assert!(ew < TOL);
}

#[test]
fn maxpool_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    // distinct values at least 0.01 apart, so a 1e-3 step never changes a winner
    let mut perm: Vec<usize> = (0..2 * 2 * 7 * 7).collect();
    perm.shuffle(&mut rng);
    let x = Tensor::new(
        vec![2, 2, 7, 7],
        perm.iter().map(|&v| v as f64 * 0.01).collect(),
    )
    .unwrap();
    let pooled = maxpool2d(&x, 3, 2).unwrap();
    let r = probe(pooled.output.shape(), &mut rng);
    let dx = maxpool2d_backward(x.shape(), &pooled.argmax, &r).unwrap();
    assert!(check(&x, &dx, |x| dot(&r, &maxpool2d(x, 3, 2).unwrap().output)) < TOL);
}

#[test]
fn batchnorm_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let x = random(&[3, 2, 4, 4], &mut rng);
    let mut p = BatchNormParams::new(2);
    p.gamma = random(&[2], &mut rng);
    p.beta = random(&[2], &mut rng);
    let base = p.clone();
    let (y, cache) = batchnorm2d(&x, &mut p, Mode::Train).unwrap();
    let r = probe(y.shape(), &mut rng);
    let g = batchnorm2d_backward(&base, &cache.unwrap(), &r).unwrap();

    let run = |x: &Tensor<f64>, gamma: &Tensor<f64>, beta: &Tensor<f64>| {
        let mut q = base.clone();
        q.gamma = gamma.clone();
        q.beta = beta.clone();
        dot(&r, &batchnorm2d(x, &mut q, Mode::Train).unwrap().0)
    };
    let ex = check(&x, &g.input, |x| run(x, &base.gamma, &base.beta));
    let eg = check(&base.gamma, &g.gamma, |gm| run(&x, gm, &base.beta));
    let eb = check(&base.beta, &g.beta, |bt| run(&x, &base.gamma, bt));
    assert!(ex < TOL && eg < TOL && eb < TOL, "{ex} {eg} {eb}");
}

#[test]
fn dense_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = random(&[3, 2, 2, 2], &mut rng);
    let p = WeightBias {
        weight: random(&[4, 8], &mut rng),
        bias: random(&[4], &mut rng),
    };
    let y = dense(&x, &p).unwrap();
    let r = probe(y.shape(), &mut rng);
    let g = dense_backward(&x, &p, &r).unwrap();
    let ex = check(&x, &g.input, |x| dot(&r, &dense(x, &p).unwrap()));
    let ew = check(&p.weight, &g.weight, |w| {
        dot(
            &r,
            &dense(
                &x,
                &WeightBias {
                    weight: w.clone(),
                    bias: p.bias.clone(),
                },
            )
            .unwrap(),
        )
    });
    let eb = check(&p.bias, &g.bias, |b| {
        dot(
            &r,
            &dense(
                &x,
                &WeightBias {
                    weight: p.weight.clone(),
                    bias: b.clone(),
                },
            )
            .unwrap(),
        )
    });
    assert!(ex < TOL && ew < TOL && eb < TOL, "{ex} {ew} {eb}");
}

#[test]
fn relu_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    // keep clear of the kink
    let x = Tensor::from_fn(&[2, 3, 4, 4], |_| {
        let v: f64 = rng.random_range(0.01..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    });
    let r = probe(x.shape(), &mut ChaCha8Rng::seed_from_u64(17));
    let dx = relu_backward(&x, &r);
    assert!(check(&x, &dx, |x| dot(&r, &relu(x))) < TOL);
}

#[test]
fn softmax_cross_entropy_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    for label in 0..3 {
        let z = random(&[3], &mut rng).map(|v| 3.0 * v);
        let (p, _) = softmax_predict(z.data());
        let (_, g) = cross_entropy(&p, label);
        let g = Tensor::new(vec![3], g).unwrap();
        let err = check(&z, &g, |z| {
            cross_entropy(&softmax_predict(z.data()).0, label).0
        });
        assert!(err < TOL, "{err}");
    }
}

#[test]
fn softmax_sums_to_one_and_ignores_shifts() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..200 {
        let z: Vec<f64> = (0..5).map(|_| rng.random_range(-30.0..30.0)).collect();
        let (p, label) = softmax_predict(&z);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let c = rng.random_range(-100.0..100.0);
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        assert_eq!(softmax_predict(&shifted).1, label);
    }
}

/// Pool winners and ReLU signs deep in the stack can flip under a 1e-3
/// nudge, so the end-to-end check uses a finer step.
const NET_STEP: f64 = 1e-5;

#[test]
fn whole_network_parameter_gradients() {
    let cfg = NetworkConfig::parse_descriptor(
        "in12;conv:3x3s1p1;bn;relu;pool:3s2;conv:4x3s1p0;relu;dense:5;relu;dense:2",
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut net = Network::<f64>::new(cfg, &mut rng).unwrap();
    let x = random(&[3, 1, 12, 12], &mut rng);
    let labels = [0usize, 1, 1];

    let loss_of = |net: &mut Network<f64>| {
        let (logits, _) = net.forward_train(&x).unwrap();
        logits
            .data()
            .chunks(2)
            .zip(labels)
            .map(|(row, l)| cross_entropy(&softmax_predict(row).0, l).0)
            .sum::<f64>()
    };

    let (logits, trace) = net.forward_train(&x).unwrap();
    let mut g = Vec::new();
    for (row, l) in logits.data().chunks(2).zip(labels) {
        g.extend(cross_entropy(&softmax_predict(row).0, l).1);
    }
    let grads = net
        .backward(&trace, &Tensor::new(vec![3, 2], g).unwrap())
        .unwrap();
    let count = net.params_mut().len();
    assert_eq!(grads.len(), count);

    for (k, analytic) in grads.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..analytic.len() {
            let eval = |delta: f64| {
                let mut probe = net.clone();
                probe.params_mut()[k].data_mut()[i] += delta;
                loss_of(&mut probe)
            };
            let numeric = (eval(NET_STEP) - eval(-NET_STEP)) / (2.0 * NET_STEP);
            let a = analytic.data()[i];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
        }
        assert!(worst < TOL, "parameter tensor {k}: relative error {worst}");
    }
}
