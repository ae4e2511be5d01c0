use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use mammo_cli::commands::{
    classify_cmd, evaluate_cmd, model_sidecar, preprocess_cmd, segment_cmd, train_cmd,
    EvaluateArgs, CONFIG_ECHO,
};
use mammo_cli::PipelineConfig;

/// Mammogram classification and tumor segmentation.
#[derive(Parser)]
#[command(name = "mammo", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set levelset.nu=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Denoise and enhance one image.
    Preprocess {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Noise level on the 8-bit scale.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Train the classifier on a MIAS-layout dataset.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        info: Option<PathBuf>,
        /// Checkpoint path.
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Network profile: desk or full.
        #[arg(long)]
        profile: Option<String>,
        #[arg(long)]
        no_augment: bool,
    },
    /// Print label and probabilities per image as JSON lines. Several
    /// models vote.
    Classify {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Segment the tumor in one image.
    Segment {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        /// Info file with the lesion circle; prints Dice against it.
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        sigma: Option<f64>,
        /// Downscale so the longer side is at most this many pixels.
        #[arg(long)]
        max_side: Option<usize>,
    },
    /// Classification metrics on the held-out split.
    Evaluate {
        #[arg(long = "model", required = true)]
        models: Vec<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        info: Option<PathBuf>,
        /// Evaluate every image instead of the held-out split.
        #[arg(long)]
        all: bool,
        /// Print the report as JSON instead of a table.
        #[arg(long)]
        json: bool,
        /// Directory for report.json and the config echo.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn base_config(common: &Common, fallback: Option<&Path>) -> Result<PipelineConfig, Failure> {
    let mut cfg = match (&common.config, fallback) {
        (Some(path), _) => {
            PipelineConfig::load(path).with_context(|| format!("config {}", path.display()))?
        }
        (None, Some(path)) if path.is_file() => {
            PipelineConfig::load(path).with_context(|| format!("config {}", path.display()))?
        }
        _ => PipelineConfig::default(),
    };
    for item in &common.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("--set expects KEY=VALUE, got {:?}", item)))?;
        cfg.set(key.trim(), value.trim()).map_err(Failure::Usage)?;
    }
    Ok(cfg)
}

fn flag(cfg: &mut PipelineConfig, key: &str, value: Option<String>) -> Result<(), Failure> {
    match value {
        Some(v) => cfg
            .set(key, &v)
            .map_err(|e| Failure::Usage(format!("{}: {}", key, e))),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let fallback = match &cli.command {
        Command::Evaluate { models, .. } => models.first().map(|m| model_sidecar(m, CONFIG_ECHO)),
        _ => None,
    };
    let mut cfg = base_config(&cli.common, fallback.as_deref())?;
    match cli.command {
        Command::Preprocess {
            input,
            output,
            sigma,
        } => {
            flag(&mut cfg, "denoise.sigma", sigma.map(|v| v.to_string()))?;
            cfg.validate().context("configuration")?;
            preprocess_cmd(&input, &output, &cfg, &mut out)?;
        }
        Command::Train {
            data,
            info,
            output,
            epochs,
            seed,
            profile,
            no_augment,
        } => {
            flag(&mut cfg, "train.epochs", epochs.map(|v| v.to_string()))?;
            flag(&mut cfg, "pipeline.seed", seed.map(|v| v.to_string()))?;
            flag(&mut cfg, "network.profile", profile)?;
            if no_augment {
                flag(&mut cfg, "train.augment", Some("false".into()))?;
            }
            cfg.validate().context("configuration")?;
            train_cmd(data.as_deref(), info.as_deref(), &output, &cfg, &mut out)?;
        }
        Command::Classify { models, inputs } => classify_cmd(&models, &inputs, &mut out)?,
        Command::Segment {
            input,
            output,
            gt,
            sigma,
            max_side,
        } => {
            flag(&mut cfg, "denoise.sigma", sigma.map(|v| v.to_string()))?;
            flag(
                &mut cfg,
                "pipeline.max_side",
                max_side.map(|v| v.to_string()),
            )?;
            cfg.validate().context("configuration")?;
            segment_cmd(
                &input,
                &output,
                gt.as_deref(),
                cli.common.verbose,
                &cfg,
                &mut out,
            )?;
        }
        Command::Evaluate {
            models,
            data,
            info,
            all,
            json,
            output,
        } => {
            cfg.validate().context("configuration")?;
            let args = EvaluateArgs {
                models: &models,
                data: data.as_deref(),
                info: info.as_deref(),
                all,
                json,
                out_dir: output.as_deref(),
            };
            evaluate_cmd(&args, &cfg, &mut out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.common.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {}", msg);
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {:#}", e);
            ExitCode::from(2)
        }
    }
}
