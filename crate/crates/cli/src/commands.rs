//! Subcommand implementations. Each writes its artifacts to disk and its
//! report lines to `out`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mammo_core::cnn::{
    ensemble_predict, load_checkpoint, save_checkpoint, stratified_split, train, Network, Sample,
    ABNORMAL,
};
use mammo_core::dataset::{ground_truth_union, load_dataset_with, parse_info, LabeledImage};
use mammo_core::metrics::{auc, compute_metrics, confusion, roc_curve, MetricReport};
use mammo_core::pnm::{load_pgm, save, Overlay};
use mammo_core::{resize_bilinear, GrayImage};
use serde_json::json;

use crate::config::PipelineConfig;
use crate::pipeline::{preprocess, segment};

pub const CONFIG_ECHO: &str = "config.txt";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_image(path: &Path) -> Result<GrayImage> {
    load_pgm(path).with_context(|| format!("loading image {}", path.display()))
}

fn label_name(label: usize) -> &'static str {
    if label == ABNORMAL {
        "abnormal"
    } else {
        "normal"
    }
}

/// Sidecar file next to a model checkpoint, e.g. `model.config.txt`.
pub fn model_sidecar(model: &Path, suffix: &str) -> PathBuf {
    let stem = model
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    model.with_file_name(format!("{}.{}", stem, suffix))
}

pub fn preprocess_cmd(
    input: &Path,
    out_dir: &Path,
    cfg: &PipelineConfig,
    out: &mut dyn Write,
) -> Result<()> {
    let image = read_image(input)?;
    ensure_dir(out_dir)?;
    let pre = preprocess(&image, cfg)?;
    let e = &pre.enhanced;
    let files = [
        ("denoised.pgm", &pre.denoised),
        ("median.pgm", &e.median),
        ("normalized.pgm", &e.normalized),
        ("enhanced.pgm", &e.artifact_free),
        ("pectoral_removed.pgm", &e.result),
    ];
    for (name, img) in files {
        save(img, out_dir.join(name)).with_context(|| format!("writing {}", name))?;
    }
    save(&e.pectoral, out_dir.join("pectoral_mask.pgm")).context("writing pectoral_mask.pgm")?;
    write_text(&out_dir.join(CONFIG_ECHO), &cfg.echo())?;
    writeln!(
        out,
        "{}",
        json!({
            "image": input.display().to_string(),
            "output": out_dir.display().to_string(),
            "pectoral_pixels": e.pectoral.count(),
        })
    )?;
    Ok(())
}

fn data_paths<'a>(
    data: Option<&'a Path>,
    info: Option<&'a Path>,
    cfg: &'a PipelineConfig,
) -> Result<(&'a Path, &'a Path)> {
    let data = data.or(cfg.paths.data.as_deref());
    let info = info.or(cfg.paths.info.as_deref());
    match (data, info) {
        (Some(d), Some(i)) => Ok((d, i)),
        _ => bail!(
            "dataset directory and info file are required (--data/--info or paths.data/paths.info)"
        ),
    }
}

/// Load the dataset with every image resized to `size`x`size`.
fn load_resized(data: &Path, info: &Path, size: usize) -> Result<Vec<LabeledImage<f64>>> {
    load_dataset_with(data, info, |img| resize_bilinear(&img, size, size))
        .context("loading dataset")
}

pub fn train_cmd(
    data: Option<&Path>,
    info: Option<&Path>,
    model_path: &Path,
    cfg: &PipelineConfig,
    out: &mut dyn Write,
) -> Result<()> {
    let (data, info) = data_paths(data, info, cfg)?;
    let net_cfg = cfg.network_config()?;
    let set = load_resized(data, info, cfg.source_size()?)?;
    let samples: Vec<Sample<f64>> = set
        .into_iter()
        .map(|l| Sample {
            image: l.image,
            label: l.label,
        })
        .collect();
    let (network, history) =
        train(&samples, net_cfg, cfg.train_config()).context("training stage")?;
    if let Some(dir) = model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        ensure_dir(dir)?;
    }
    save_checkpoint(&network, model_path).context("writing checkpoint")?;
    let history_path = model_sidecar(model_path, "history.jsonl");
    let file = fs::File::create(&history_path)
        .with_context(|| format!("writing {}", history_path.display()))?;
    history.write_json_lines(std::io::BufWriter::new(file))?;
    write_text(&model_sidecar(model_path, CONFIG_ECHO), &cfg.echo())?;
    if let Some(last) = history.epochs.last() {
        writeln!(out, "{}", serde_json::to_string(last)?)?;
    }
    Ok(())
}

fn load_models(paths: &[PathBuf]) -> Result<Vec<Network<f64>>> {
    if paths.is_empty() {
        bail!("at least one --model is required");
    }
    paths
        .iter()
        .map(|p| load_checkpoint(p).with_context(|| format!("loading model {}", p.display())))
        .collect()
}

pub fn classify_cmd(models: &[PathBuf], inputs: &[PathBuf], out: &mut dyn Write) -> Result<()> {
    let nets = load_models(models)?;
    for input in inputs {
        let image = read_image(input)?;
        let (probs, label) = ensemble_predict(&nets, &image).context("classification stage")?;
        writeln!(
            out,
            "{}",
            json!({
                "image": input.display().to_string(),
                "label": label_name(label),
                "p_normal": probs[0],
                "p_abnormal": probs[ABNORMAL],
            })
        )?;
    }
    Ok(())
}

/// Dice against the union of the annotated circles for the image's id
/// (the input file stem).
fn ground_truth_dice(input: &Path, info: &Path, mask: &mammo_core::BinaryMask) -> Result<f64> {
    let id = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .context("input path has no file name")?;
    let text = fs::read_to_string(info).with_context(|| format!("reading {}", info.display()))?;
    let records: Vec<_> = parse_info(&text)?
        .into_iter()
        .filter(|r| r.id == id)
        .collect();
    let truth = ground_truth_union(&records, mask.width(), mask.height())?
        .with_context(|| format!("no lesion geometry for {} in {}", id, info.display()))?;
    Ok(mask.dice(&truth)?)
}

pub fn segment_cmd(
    input: &Path,
    out_dir: &Path,
    gt: Option<&Path>,
    verbose: bool,
    cfg: &PipelineConfig,
    out: &mut dyn Write,
) -> Result<()> {
    let image = read_image(input)?;
    ensure_dir(out_dir)?;
    let seg = segment(&image, cfg)?;
    save(&seg.mask, out_dir.join("mask.pgm")).context("writing mask.pgm")?;
    let contour = seg.mask.contour();
    save(
        &Overlay {
            base: &image,
            contour: &contour,
        },
        out_dir.join("overlay.ppm"),
    )
    .context("writing overlay.ppm")?;
    let mut diag = String::new();
    for s in &seg.evolution.stats {
        diag.push_str(&s.to_line());
        diag.push('\n');
    }
    write_text(&out_dir.join("phi_diagnostics.txt"), &diag)?;
    if verbose {
        out.write_all(diag.as_bytes())?;
    }
    write_text(&out_dir.join(CONFIG_ECHO), &cfg.echo())?;

    let dice = gt
        .map(|info| ground_truth_dice(input, info, &seg.mask))
        .transpose()
        .context("ground-truth stage")?;
    let summary = json!({
        "image": input.display().to_string(),
        "mask_pixels": seg.mask.count(),
        "level_set_iterations": seg.evolution.iterations,
        "clustering_iterations": seg.clusters.iterations,
        "dice": dice,
    });
    write_text(&out_dir.join("segment.json"), &format!("{}\n", summary))?;
    writeln!(out, "{}", summary)?;
    Ok(())
}

pub struct EvaluateArgs<'a> {
    pub models: &'a [PathBuf],
    pub data: Option<&'a Path>,
    pub info: Option<&'a Path>,
    pub all: bool,
    pub json: bool,
    pub out_dir: Option<&'a Path>,
}

/// Metrics on the held-out split (or every image) of the dataset.
pub fn evaluate_cmd(
    args: &EvaluateArgs,
    cfg: &PipelineConfig,
    out: &mut dyn Write,
) -> Result<MetricReport> {
    let (data, info) = data_paths(args.data, args.info, cfg)?;
    let nets = load_models(args.models)?;
    let size = nets[0].config().input_size;
    let set = load_resized(data, info, size)?;
    let labels: Vec<usize> = set.iter().map(|l| l.label).collect();
    let train_cfg = cfg.train_config();
    let indices: Vec<usize> = if args.all {
        (0..set.len()).collect()
    } else {
        stratified_split(&labels, train_cfg.test_fraction, train_cfg.seed).test
    };
    if indices.is_empty() {
        bail!(
            "evaluation split is empty (train.test_fraction = {})",
            train_cfg.test_fraction
        );
    }
    let mut pairs = Vec::with_capacity(indices.len());
    let mut scored = Vec::with_capacity(indices.len());
    for &i in &indices {
        let (probs, label) =
            ensemble_predict(&nets, &set[i].image).context("classification stage")?;
        let truth = set[i].label == ABNORMAL;
        pairs.push((label == ABNORMAL, truth));
        scored.push((probs[ABNORMAL], truth));
    }
    let counts = confusion(&pairs)?;
    let mut report = compute_metrics(&counts)?;
    report.auc = roc_curve(&scored).ok().map(|c| auc(&c));
    if args.json {
        writeln!(out, "{}", report.to_json())?;
    } else {
        writeln!(
            out,
            "images {}  tp {}  fp {}  tn {}  fn {}",
            indices.len(),
            counts.tp,
            counts.fp,
            counts.tn,
            counts.fn_
        )?;
        out.write_all(report.table().as_bytes())?;
    }
    if let Some(dir) = args.out_dir {
        ensure_dir(dir)?;
        write_text(&dir.join("report.json"), &format!("{}\n", report.to_json()))?;
        write_text(&dir.join(CONFIG_ECHO), &cfg.echo())?;
    }
    Ok(report)
}
