use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use mammo_cli::commands::{evaluate_cmd, segment_cmd, train_cmd, EvaluateArgs};
use mammo_cli::pipeline::segment;
use mammo_cli::PipelineConfig;
use mammo_core::cnn::layers::{
    batchnorm2d, batchnorm2d_backward, conv2d, conv2d_backward, dense, dense_backward, maxpool2d,
    maxpool2d_backward, relu, relu_backward, BatchNormParams, Mode, WeightBias,
};
use mammo_core::cnn::{
    accuracy, build_augmented_set, cross_entropy, softmax_predict, NetworkConfig, TrainConfig,
    Trainer,
};
use mammo_core::dataset::{load_dataset, MIAS_ABNORMAL, MIAS_TOTAL};
use mammo_core::denoise::{hard_stage, psnr, wiener_stage, Bm3dProfile};
use mammo_core::enhance::otsu_from_histogram;
use mammo_core::levelset::{dirac, evolve, extract_mask, init_phi, LevelSetConfig};
use mammo_core::metrics::{compute_metrics, f_measure, g_mean, ConfusionCounts};
use mammo_core::phantom::{add_gaussian_noise, denoise_phantom, disk_mask, two_level};
use mammo_core::sfcm::{sfcm_run, tumor_membership_map, SfcmConfig};
use mammo_core::{BinaryMask, GrayImage, Sample, Tensor};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

mod common;

type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit, || {
        format!("took {:.2?}, limit {} s", elapsed, limit)
    })
}

fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        (None, None) => true,
        _ => false,
    }
}

fn ratio(n: u64, d: u64) -> Option<f64> {
    if d == 0 {
        None
    } else {
        Some(n as f64 / d as f64)
    }
}

fn metrics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t = Instant::now();
    for i in 0..1000 {
        let c = ConfusionCounts {
            tp: rng.random_range(0..500),
            fp: rng.random_range(0..500),
            tn: rng.random_range(0..500),
            fn_: rng.random_range(0..500),
        };
        if c.total() == 0 {
            continue;
        }
        let r = compute_metrics(&c).map_err(|e| e.to_string())?;
        let acc = ratio(c.tp + c.tn, c.tp + c.tn + c.fp + c.fn_);
        let sens = ratio(c.tp, c.tp + c.fn_);
        let spc = ratio(c.tn, c.tn + c.fp);
        let prec = ratio(c.tp, c.tp + c.fp);
        let f = match (prec, sens) {
            (Some(p), Some(q)) if p + q > 0.0 => Some(2.0 * p * q / (p + q)),
            _ => None,
        };
        let g = match (sens, spc) {
            (Some(a), Some(b)) => Some((a * b).sqrt()),
            _ => None,
        };
        let pairs = [
            ("accuracy", r.accuracy, acc),
            ("sensitivity", r.sensitivity, sens),
            ("specificity", r.specificity, spc),
            ("precision", r.precision, prec),
            ("recall", r.recall, sens),
            ("f_measure", r.f_measure, f),
            ("g_mean", r.g_mean, g),
        ];
        for (name, got, want) in pairs {
            ensure(close(got, want, 1e-12), || {
                format!("matrix {} {:?}: {} {:?} vs {:?}", i, c, name, got, want)
            })?;
        }
    }
    within(t.elapsed(), 1.0)?;
    Ok(format!(
        "1000 matrices agree to 1e-12 in {:.2?}",
        t.elapsed()
    ))
}

fn published_figures() -> Check {
    let f = f_measure(0.9288, 0.7786).ok_or("F undefined")?;
    let g = g_mean(0.7786, 0.7876);
    ensure((f - 0.8471).abs() <= 1e-4, || format!("F = {:.5}", f))?;
    ensure((g - 0.78).abs() <= 5e-3, || format!("g-mean = {:.5}", g))?;
    Ok(format!("F = {:.4}, g-mean = {:.4}", f, g))
}

/// Maximize `w0 w1 (m0 - m1)^2` over every split `level <= t`.
fn exhaustive_otsu(hist: &[u64; 256]) -> u8 {
    let total: u64 = hist.iter().sum();
    let mut best: Option<(usize, f64)> = None;
    for t in 0..256 {
        let n0: u64 = hist[..=t].iter().sum();
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let s0: u64 = (0..=t).map(|l| l as u64 * hist[l]).sum();
        let s1: u64 = (t + 1..256).map(|l| l as u64 * hist[l]).sum();
        let (m0, m1) = (s0 as f64 / n0 as f64, s1 as f64 / n1 as f64);
        let (w0, w1) = (n0 as f64 / total as f64, n1 as f64 / total as f64);
        let score = w0 * w1 * (m0 - m1).powi(2);
        let better = match best {
            None => true,
            Some((_, b)) => score > b * (1.0 + 1e-12),
        };
        if better {
            best = Some((t, score));
        }
    }
    best.map_or_else(
        || hist.iter().position(|&c| c > 0).unwrap_or(0) as u8,
        |(t, _)| t as u8,
    )
}

fn otsu_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let t = Instant::now();
    for i in 0..500 {
        let mut hist = [0u64; 256];
        let occupied = rng.random_range(1..=256);
        for _ in 0..occupied {
            hist[rng.random_range(0..256)] += rng.random_range(1..1000);
        }
        let (a, b) = (otsu_from_histogram(&hist), exhaustive_otsu(&hist));
        ensure(a == b, || {
            format!("histogram {}: {} vs exhaustive {}", i, a, b)
        })?;
    }
    within(t.elapsed(), 1.0)?;
    Ok(format!("500 histograms agree in {:.2?}", t.elapsed()))
}

fn fcm() -> Check {
    let t = Instant::now();
    let img = GrayImage::from_fn(64, 64, |_, c| if c < 32 { 0.2 } else { 0.8 });
    let cfg = SfcmConfig {
        clusters: 2,
        ..SfcmConfig::default()
    };
    let out = sfcm_run(&img, &cfg).map_err(|e| e.to_string())?;
    let mut c = out.centers.0.clone();
    c.sort_by(f64::total_cmp);
    ensure(
        (c[0] - 0.2).abs() < 1e-3 && (c[1] - 0.8).abs() < 1e-3,
        || format!("centers {:?}", c),
    )?;

    let textured = GrayImage::from_fn(64, 64, |r, c| ((r * 31 + c * 17) % 23) as f64 / 22.0);
    let plain = SfcmConfig {
        q: 0.0,
        tol: 1e-12,
        ..SfcmConfig::default()
    };
    let run = sfcm_run(&textured, &plain).map_err(|e| e.to_string())?;
    for (i, w) in run.objective_history.windows(2).enumerate() {
        ensure(w[1] <= w[0] + 1e-12, || {
            format!("J rose at sweep {}: {} -> {}", i + 1, w[0], w[1])
        })?;
    }
    within(t.elapsed(), 5.0)?;
    Ok(format!(
        "centers {:.6}, {:.6}; J monotone over {} sweeps; {:.2?}",
        c[0],
        c[1],
        run.objective_history.len(),
        t.elapsed()
    ))
}

fn level_set_phantom() -> Check {
    let truth = disk_mask(128, 128, 63.5, 63.5, 30.0);
    let noisy = add_gaussian_noise(&two_level::<f64>(&truth, 0.8, 0.2), 0.05, 2024);
    let t = Instant::now();
    let clustering = sfcm_run(&noisy, &SfcmConfig::default()).map_err(|e| e.to_string())?;
    let r_k = tumor_membership_map(&clustering.memberships, &clustering.centers);
    let cfg = LevelSetConfig::default();
    let out = evolve(&r_k, &noisy, &cfg).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let dice = out.mask().dice(&truth).map_err(|e| e.to_string())?;
    ensure(dice >= 0.95, || format!("dice {:.4}", dice))?;
    ensure(out.iterations <= 200, || {
        format!("{} iterations", out.iterations)
    })?;
    within(elapsed, 10.0)?;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..100 {
        let (w, h) = (rng.random_range(1..40), rng.random_range(1..40));
        let density = rng.random_range(0.0..1.0);
        let mask = BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density));
        let back = extract_mask(&init_phi::<f64>(&mask, cfg.epsilon));
        ensure(back == mask, || format!("mask {} did not round-trip", i))?;
    }
    Ok(format!(
        "dice {:.4} after {} iterations in {:.2?}; 100 masks round-trip",
        dice, out.iterations, elapsed
    ))
}

fn dirac_quadrature() -> Check {
    let mut parts = Vec::new();
    for eps in [0.5, 1.5, 3.0] {
        let n = 100_000;
        let h = 2.0 * eps / n as f64;
        let integral: f64 = (0..n)
            .map(|i| dirac(-eps + (i as f64 + 0.5) * h, eps) * h)
            .sum();
        ensure((integral - 1.0).abs() <= 1e-3, || {
            format!("eps {}: integral {}", eps, integral)
        })?;
        parts.push(format!("eps {} -> {:.6}", eps, integral));
    }
    Ok(parts.join(", "))
}

fn random_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Worst relative error between `analytic` and central differences.
fn fd_error(x: &Tensor, analytic: &Tensor, loss: impl Fn(&Tensor) -> f64) -> f64 {
    const STEP: f64 = 1e-3;
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += STEP;
        let mut minus = x.clone();
        minus.data_mut()[i] -= STEP;
        let numeric = (loss(&plus) - loss(&minus)) / (2.0 * STEP);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6));
    }
    worst
}

fn layer_gradient_errors() -> Result<Vec<(&'static str, f64)>, String> {
    let e = |err: mammo_core::Error| err.to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = Vec::new();

    let x = random_tensor(&[2, 3, 7, 7], &mut rng);
    let p = WeightBias {
        weight: random_tensor(&[4, 3, 3, 3], &mut rng),
        bias: random_tensor(&[4], &mut rng),
    };
    let conv = |x: &Tensor, p: &WeightBias<f64>| conv2d(x, p, 2, 1).unwrap();
    let r = random_tensor(conv(&x, &p).shape(), &mut rng);
    let g = conv2d_backward(&x, &p, 2, 1, &r).map_err(e)?;
    let ex = fd_error(&x, &g.input, |x| dot(&r, &conv(x, &p)));
    let ew = fd_error(&p.weight, &g.weight, |w| {
        dot(
            &r,
            &conv(
                &x,
                &WeightBias {
                    weight: w.clone(),
                    bias: p.bias.clone(),
                },
            ),
        )
    });
    let eb = fd_error(&p.bias, &g.bias, |b| {
        dot(
            &r,
            &conv(
                &x,
                &WeightBias {
                    weight: p.weight.clone(),
                    bias: b.clone(),
                },
            ),
        )
    });
    out.push(("conv", ex.max(ew).max(eb)));

    let mut values: Vec<f64> = (0..2 * 2 * 7 * 7).map(|v| v as f64 * 0.01).collect();
    values.shuffle(&mut rng);
    let x = Tensor::new(vec![2, 2, 7, 7], values).map_err(e)?;
    let pooled = maxpool2d(&x, 3, 2).map_err(e)?;
    let r = random_tensor(pooled.output.shape(), &mut rng);
    let dx = maxpool2d_backward(x.shape(), &pooled.argmax, &r).map_err(e)?;
    out.push((
        "maxpool",
        fd_error(&x, &dx, |x| dot(&r, &maxpool2d(x, 3, 2).unwrap().output)),
    ));

    let x = random_tensor(&[3, 2, 4, 4], &mut rng);
    let mut bn = BatchNormParams::new(2);
    bn.gamma = random_tensor(&[2], &mut rng);
    bn.beta = random_tensor(&[2], &mut rng);
    let base = bn.clone();
    let (y, cache) = batchnorm2d(&x, &mut bn, Mode::Train).map_err(e)?;
    let r = random_tensor(y.shape(), &mut rng);
    let g = batchnorm2d_backward(&base, &cache.ok_or("no batch-norm cache")?, &r).map_err(e)?;
    let run = |x: &Tensor, gamma: &Tensor, beta: &Tensor| {
        let mut q = base.clone();
        q.gamma = gamma.clone();
        q.beta = beta.clone();
        dot(&r, &batchnorm2d(x, &mut q, Mode::Train).unwrap().0)
    };
    let ex = fd_error(&x, &g.input, |x| run(x, &base.gamma, &base.beta));
    let eg = fd_error(&base.gamma, &g.gamma, |gm| run(&x, gm, &base.beta));
    let eb = fd_error(&base.beta, &g.beta, |bt| run(&x, &base.gamma, bt));
    out.push(("batchnorm", ex.max(eg).max(eb)));

    let x = random_tensor(&[3, 2, 2, 2], &mut rng);
    let p = WeightBias {
        weight: random_tensor(&[4, 8], &mut rng),
        bias: random_tensor(&[4], &mut rng),
    };
    let r = random_tensor(dense(&x, &p).map_err(e)?.shape(), &mut rng);
    let g = dense_backward(&x, &p, &r).map_err(e)?;
    let ex = fd_error(&x, &g.input, |x| dot(&r, &dense(x, &p).unwrap()));
    let ew = fd_error(&p.weight, &g.weight, |w| {
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
    let eb = fd_error(&p.bias, &g.bias, |b| {
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
    out.push(("dense", ex.max(ew).max(eb)));

    let x = Tensor::from_fn(&[2, 3, 4, 4], |_| {
        let v: f64 = rng.random_range(0.01..1.0);
        if rng.random_bool(0.5) {
            v
        } else {
            -v
        }
    });
    let r = random_tensor(x.shape(), &mut rng);
    out.push((
        "relu",
        fd_error(&x, &relu_backward(&x, &r), |x| dot(&r, &relu(x))),
    ));

    let mut worst: f64 = 0.0;
    for label in 0..3 {
        let z = random_tensor(&[3], &mut rng).map(|v| 3.0 * v);
        let (probs, _) = softmax_predict(z.data());
        let g = Tensor::new(vec![3], cross_entropy(&probs, label).1).map_err(e)?;
        worst = worst.max(fd_error(&z, &g, |z| {
            cross_entropy(&softmax_predict(z.data()).0, label).0
        }));
    }
    out.push(("softmax+xent", worst));
    Ok(out)
}

fn cnn_suite() -> Check {
    let errors = layer_gradient_errors()?;
    for &(name, err) in &errors {
        ensure(err < 1e-4, || format!("{} relative error {:e}", name, err))?;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let samples: Vec<Sample> = (0..8)
        .map(|i| Sample {
            image: GrayImage::from_fn(64, 64, |_, _| rng.random_range(0.0..1.0)),
            label: i % 2,
        })
        .collect();
    let cfg = TrainConfig {
        augment: false,
        test_fraction: 0.0,
        epochs: 200,
        ..TrainConfig::default()
    };
    let mut trainer =
        Trainer::new(&samples, NetworkConfig::desk(), cfg).map_err(|e| e.to_string())?;
    let mut reached = None;
    for epoch in 1..=200 {
        trainer.run_epoch().map_err(|e| e.to_string())?;
        if accuracy(trainer.network(), trainer.train_set()).map_err(|e| e.to_string())? == 1.0 {
            reached = Some(epoch);
            break;
        }
    }
    let epoch = reached.ok_or("8 images not memorized within 200 epochs")?;

    let augmented = build_augmented_set(&samples, &mut ChaCha8Rng::seed_from_u64(2), 64, 0.5)
        .map_err(|e| e.to_string())?;
    ensure(augmented.len() == 16 * samples.len(), || {
        format!("{} augmented samples", augmented.len())
    })?;

    let worst = errors.iter().map(|&(_, e)| e).fold(0.0, f64::max);
    Ok(format!(
        "max layer rel. error {:.1e}; memorized at epoch {}; augmented {} -> {}",
        worst,
        epoch,
        samples.len(),
        augmented.len()
    ))
}

fn bm3d() -> Check {
    let clean = denoise_phantom::<f64>(128);
    let noisy = add_gaussian_noise(&clean, 25.0 / 255.0, 7);
    let profile = Bm3dProfile::for_sigma(25.0);
    let t = Instant::now();
    let basic = hard_stage(&noisy, 25.0, &profile).map_err(|e| e.to_string())?;
    let fin = wiener_stage(&noisy, &basic, 25.0, &profile).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let p = |img: &GrayImage| psnr(&clean, img).map_err(|e| e.to_string());
    let (pn, pb, pf) = (p(&noisy)?, p(&basic)?, p(&fin)?);
    ensure(pf >= pn + 2.0, || {
        format!("final {:.2} dB vs noisy {:.2} dB", pf, pn)
    })?;
    ensure(pf >= pb, || {
        format!("wiener {:.2} dB below hard {:.2} dB", pf, pb)
    })?;
    within(elapsed, 30.0)?;
    Ok(format!(
        "PSNR noisy {:.2}, hard {:.2}, wiener {:.2} dB in {:.2?}",
        pn, pb, pf, elapsed
    ))
}

fn mias_paths() -> Option<(PathBuf, PathBuf)> {
    let dir = PathBuf::from(std::env::var_os("MIAS_DIR")?);
    let info = std::env::var_os("MIAS_INFO")
        .map(PathBuf::from)
        .unwrap_or_else(|| dir.join("Info.txt"));
    Some((dir, info))
}

fn end_to_end(dir: &Path, info: &Path) -> Check {
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::default();
    cfg.set("pipeline.max_side", "256")?;
    let set = load_dataset::<f64>(dir, info).map_err(|e| e.to_string())?;
    let abnormal = set.iter().filter(|l| l.label == 1).count();
    ensure(set.len() == MIAS_TOTAL && abnormal == MIAS_ABNORMAL, || {
        format!("{} images, {} abnormal", set.len(), abnormal)
    })?;
    let t = Instant::now();
    for item in &set {
        segment(&item.image, &cfg).map_err(|e| format!("{}: {:#}", item.id(), e))?;
    }
    let seg_time = t.elapsed();

    let model = work.path().join("model.bin");
    train_cmd(Some(dir), Some(info), &model, &cfg, &mut std::io::sink())
        .map_err(|e| format!("{:#}", e))?;
    let models = [model];
    let args = EvaluateArgs {
        models: &models,
        data: Some(dir),
        info: Some(info),
        all: false,
        json: true,
        out_dir: None,
    };
    let report = evaluate_cmd(&args, &cfg, &mut std::io::sink()).map_err(|e| format!("{:#}", e))?;
    let acc = report.accuracy.unwrap_or(0.0);
    let show = |v: Option<f64>| v.map_or("undefined".to_string(), |x| format!("{:.3}", x));
    let summary = format!(
        "segmented {} images in {:.0?}; achieved AC {} AUC {} precision {} (published: 0.78, 0.69, 0.93)",
        set.len(),
        seg_time,
        show(report.accuracy),
        show(report.auc),
        show(report.precision)
    );
    ensure(acc > 0.63, || {
        format!(
            "accuracy {:.3} does not beat the majority baseline; {}",
            acc, summary
        )
    })?;
    Ok(summary)
}

fn determinism() -> Check {
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (data, info) = common::write_dataset(root.path(), 10);
    let mut cfg = PipelineConfig::default();
    for (k, v) in [
        ("train.epochs", "2"),
        ("train.batch_size", "8"),
        ("pipeline.seed", "13"),
    ] {
        cfg.set(k, v)?;
    }
    let err = |e: anyhow::Error| format!("{:#}", e);
    let run = |tag: &str| -> Result<(Vec<u8>, Vec<u8>, Value), String> {
        let out = root.path().join(tag);
        let model = out.join("model.bin");
        train_cmd(Some(&data), Some(&info), &model, &cfg, &mut std::io::sink()).map_err(err)?;
        let seg_dir = out.join("seg");
        segment_cmd(
            &data.join("mdb002.pgm"),
            &seg_dir,
            None,
            false,
            &cfg,
            &mut std::io::sink(),
        )
        .map_err(err)?;
        let models = [model.clone()];
        let args = EvaluateArgs {
            models: &models,
            data: Some(&data),
            info: Some(&info),
            all: true,
            json: true,
            out_dir: Some(&out),
        };
        evaluate_cmd(&args, &cfg, &mut std::io::sink()).map_err(err)?;
        let read = |p: PathBuf| fs::read(&p).map_err(|e| format!("{}: {}", p.display(), e));
        let report: Value =
            serde_json::from_slice(&read(out.join("report.json"))?).map_err(|e| e.to_string())?;
        Ok((read(model)?, read(seg_dir.join("mask.pgm"))?, report))
    };
    let a = run("a")?;
    let b = run("b")?;
    ensure(a.0 == b.0, || "checkpoints differ".into())?;
    ensure(a.1 == b.1, || "masks differ".into())?;
    ensure(a.2 == b.2, || "reports differ".into())?;
    Ok(format!(
        "checkpoint ({} bytes), mask and report identical across runs",
        a.0.len()
    ))
}

fn outcome(check: Check) -> Outcome {
    match check {
        Ok(s) => Outcome::Pass(s),
        Err(s) => Outcome::Fail(s),
    }
}

#[test]
fn acceptance_criteria() {
    let criteria: Vec<Criterion> = vec![
        ("metrics oracle", Box::new(|| outcome(metrics_oracle()))),
        (
            "published figures",
            Box::new(|| outcome(published_figures())),
        ),
        ("otsu equivalence", Box::new(|| outcome(otsu_equivalence()))),
        ("fuzzy c-means", Box::new(|| outcome(fcm()))),
        (
            "level-set phantom",
            Box::new(|| outcome(level_set_phantom())),
        ),
        ("dirac quadrature", Box::new(|| outcome(dirac_quadrature()))),
        (
            "cnn gradients and training",
            Box::new(|| outcome(cnn_suite())),
        ),
        ("bm3d phantom", Box::new(|| outcome(bm3d()))),
        (
            "end-to-end mias",
            Box::new(|| match mias_paths() {
                Some((dir, info)) => outcome(end_to_end(&dir, &info)),
                None => Outcome::Skip("MIAS_DIR not set".into()),
            }),
        ),
        ("determinism", Box::new(|| outcome(determinism()))),
    ];
    let mut failed = Vec::new();
    let stdout = std::io::stdout();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let line = match run() {
            Outcome::Pass(s) => format!("criterion {:>2} PASS  {}: {}", i + 1, name, s),
            Outcome::Skip(s) => format!("criterion {:>2} SKIP  {}: {}", i + 1, name, s),
            Outcome::Fail(s) => {
                failed.push(i + 1);
                format!("criterion {:>2} FAIL  {}: {}", i + 1, name, s)
            }
        };
        // bypass the test harness capture so the summary always shows
        let _ = writeln!(stdout.lock(), "{}", line);
    }
    assert!(failed.is_empty(), "failed criteria: {:?}", failed);
}
