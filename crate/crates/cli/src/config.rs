//! Line-oriented `section.key = value` configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mammo_core::cnn::{NetworkConfig, TrainConfig};
use mammo_core::denoise::{Bm3dProfile, HIGH_NOISE_SIGMA};
use mammo_core::enhance::EnhanceConfig;
use mammo_core::levelset::LevelSetConfig;
use mammo_core::sfcm::SfcmConfig;
use mammo_core::{Error, Result};

/// A value that can be written to and read back from a config line.
pub trait ConfigValue: Sized {
    fn parse_value(text: &str) -> std::result::Result<Self, String>;
    fn render(&self) -> String;
}

macro_rules! plain_value {
    ($($ty:ty),*) => {$(
        impl ConfigValue for $ty {
            fn parse_value(text: &str) -> std::result::Result<Self, String> {
                text.parse().map_err(|_| format!("cannot parse {:?} as {}", text, stringify!($ty)))
            }

            fn render(&self) -> String {
                self.to_string()
            }
        }
    )*};
}

plain_value!(f64, usize, u64, bool);

impl ConfigValue for Option<PathBuf> {
    fn parse_value(text: &str) -> std::result::Result<Self, String> {
        Ok((!text.is_empty()).then(|| PathBuf::from(text)))
    }

    fn render(&self) -> String {
        self.as_ref()
            .map(|p| p.display().to_string())
            .unwrap_or_default()
    }
}

/// `auto` leaves the value to be derived from other settings.
impl ConfigValue for Option<usize> {
    fn parse_value(text: &str) -> std::result::Result<Self, String> {
        if text == "auto" {
            Ok(None)
        } else {
            usize::parse_value(text).map(Some)
        }
    }

    fn render(&self) -> String {
        self.map_or_else(|| "auto".to_string(), |v| v.to_string())
    }
}

impl ConfigValue for Option<f64> {
    fn parse_value(text: &str) -> std::result::Result<Self, String> {
        if text == "auto" {
            Ok(None)
        } else {
            f64::parse_value(text).map(Some)
        }
    }

    fn render(&self) -> String {
        self.map_or_else(|| "auto".to_string(), |v| v.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkProfile {
    Desk,
    Full,
}

impl ConfigValue for NetworkProfile {
    fn parse_value(text: &str) -> std::result::Result<Self, String> {
        match text {
            "desk" => Ok(NetworkProfile::Desk),
            "full" => Ok(NetworkProfile::Full),
            _ => Err(format!(
                "unknown network profile {:?} (expected desk or full)",
                text
            )),
        }
    }

    fn render(&self) -> String {
        match self {
            NetworkProfile::Desk => "desk".into(),
            NetworkProfile::Full => "full".into(),
        }
    }
}

/// A struct whose fields are addressable as `section.field`.
trait Keyed {
    /// `Ok(false)` if `key` is not a field of this section.
    fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String>;
    fn entries(&self) -> Vec<(&'static str, String)>;
}

macro_rules! keyed {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl Keyed for $ty {
            fn set(&mut self, key: &str, value: &str) -> std::result::Result<bool, String> {
                match key {
                    $(stringify!($field) => {
                        self.$field = ConfigValue::parse_value(value)?;
                        Ok(true)
                    })*
                    _ => Ok(false),
                }
            }

            fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$((stringify!($field), self.$field.render())),*]
            }
        }
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSection {
    /// Seeds clustering initialization, the train/test split, weight
    /// initialization and augmentation.
    pub seed: u64,
    /// Longest side used for segmentation; larger inputs are downscaled
    /// and the mask is scaled back. 0 keeps the native resolution.
    pub max_side: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseSection {
    pub enabled: bool,
    /// Noise standard deviation on the 8-bit scale.
    pub sigma: f64,
    /// Sigma at which the high-noise thresholds take over.
    pub high_noise_cutoff: f64,
}

/// Explicit block-matching settings; unset fields follow the profile
/// chosen from the noise level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bm3dOverrides {
    pub k_hard: Option<usize>,
    pub k_wie: Option<usize>,
    pub n_hard: Option<usize>,
    pub n_wie: Option<usize>,
    pub lambda_3d: Option<f64>,
    pub tau_hard: Option<f64>,
    pub tau_wie: Option<f64>,
    pub search_radius: Option<usize>,
    pub step: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSection {
    pub profile: NetworkProfile,
    /// Side of the network input; `auto` uses the profile's size.
    pub input_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    /// Training images are resized to this square side when loaded, before
    /// augmentation; `auto` is twice the network input.
    pub source_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSection {
    pub data: Option<PathBuf>,
    pub info: Option<PathBuf>,
}

keyed!(PipelineSection { seed, max_side });
keyed!(DenoiseSection {
    enabled,
    sigma,
    high_noise_cutoff
});
keyed!(Bm3dOverrides {
    k_hard,
    k_wie,
    n_hard,
    n_wie,
    lambda_3d,
    tau_hard,
    tau_wie,
    search_radius,
    step
});
keyed!(EnhanceConfig {
    median_window,
    r1,
    r2,
    pectoral_tolerance,
    pectoral_area_cap
});
keyed!(SfcmConfig {
    clusters,
    fuzziness,
    p,
    q,
    window_radius,
    tol,
    max_iter
});
keyed!(LevelSetConfig {
    epsilon,
    b0,
    tau,
    mu,
    lambda,
    nu,
    iterations,
    smoothing_sigma,
    grad_floor,
    early_stop_frac,
    early_stop_patience,
});
keyed!(NetworkSection {
    profile,
    input_size
});
keyed!(TrainConfig {
    learning_rate,
    epochs,
    batch_size,
    momentum,
    augment,
    test_fraction
});
keyed!(DataSection { source_size });
keyed!(PathSection { data, info });

/// Every setting of the command-line pipeline. All fields have defaults,
/// so an empty file is a valid configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub pipeline: PipelineSection,
    pub denoise: DenoiseSection,
    pub bm3d: Bm3dOverrides,
    pub enhance: EnhanceConfig,
    pub sfcm: SfcmConfig,
    pub levelset: LevelSetConfig,
    pub network: NetworkSection,
    pub train: TrainConfig,
    pub data: DataSection,
    pub paths: PathSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineSection {
                seed: 0,
                max_side: 0,
            },
            denoise: DenoiseSection {
                enabled: true,
                sigma: 10.0,
                high_noise_cutoff: HIGH_NOISE_SIGMA,
            },
            bm3d: Bm3dOverrides::default(),
            enhance: EnhanceConfig::default(),
            sfcm: SfcmConfig::default(),
            levelset: LevelSetConfig::default(),
            network: NetworkSection {
                profile: NetworkProfile::Desk,
                input_size: None,
            },
            train: TrainConfig::default(),
            data: DataSection { source_size: None },
            paths: PathSection {
                data: None,
                info: None,
            },
        }
    }
}

impl PipelineConfig {
    fn sections(&self) -> [(&'static str, &dyn Keyed); 10] {
        [
            ("pipeline", &self.pipeline),
            ("denoise", &self.denoise),
            ("bm3d", &self.bm3d),
            ("enhance", &self.enhance),
            ("sfcm", &self.sfcm),
            ("levelset", &self.levelset),
            ("network", &self.network),
            ("train", &self.train),
            ("data", &self.data),
            ("paths", &self.paths),
        ]
    }

    fn section_mut(&mut self, name: &str) -> Option<&mut dyn Keyed> {
        Some(match name {
            "pipeline" => &mut self.pipeline,
            "denoise" => &mut self.denoise,
            "bm3d" => &mut self.bm3d,
            "enhance" => &mut self.enhance,
            "sfcm" => &mut self.sfcm,
            "levelset" => &mut self.levelset,
            "network" => &mut self.network,
            "train" => &mut self.train,
            "data" => &mut self.data,
            "paths" => &mut self.paths,
            _ => return None,
        })
    }

    /// Set `section.key` from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| format!("key {:?} is not of the form section.key", key))?;
        let target = self
            .section_mut(section)
            .ok_or_else(|| format!("unknown section {:?}", section))?;
        if target.set(field, value.trim())? {
            Ok(())
        } else {
            Err(format!("unknown key {:?}", key))
        }
    }

    /// Apply `section.key = value` lines on top of the current values.
    /// Blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let (key, value) = line.split_once('=').ok_or_else(|| {
                parse_err(format!("expected `section.key = value`, found {:?}", line))
            })?;
            self.set(key.trim(), value.trim()).map_err(parse_err)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            context: format!("reading config {}", path.display()),
            source: e,
        })?;
        Self::parse(&text)
    }

    /// Every setting, one `section.key = value` line each, in a fixed order.
    pub fn echo(&self) -> String {
        let mut out = String::new();
        for (name, section) in self.sections() {
            for (key, value) in section.entries() {
                let _ = writeln!(out, "{}.{} = {}", name, key, value);
            }
        }
        out
    }

    pub fn bm3d_profile(&self) -> Bm3dProfile {
        let mut p =
            Bm3dProfile::for_sigma_with_cutoff(self.denoise.sigma, self.denoise.high_noise_cutoff);
        let o = &self.bm3d;
        macro_rules! apply {
            ($($f:ident),*) => {$(if let Some(v) = o.$f { p.$f = v; })*};
        }
        apply!(
            k_hard,
            k_wie,
            n_hard,
            n_wie,
            lambda_3d,
            tau_hard,
            tau_wie,
            search_radius,
            step
        );
        p
    }

    pub fn sfcm_config(&self) -> SfcmConfig {
        SfcmConfig {
            seed: self.pipeline.seed,
            ..self.sfcm.clone()
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.pipeline.seed,
            ..self.train.clone()
        }
    }

    pub fn network_config(&self) -> Result<NetworkConfig> {
        let mut cfg = match self.network.profile {
            NetworkProfile::Desk => NetworkConfig::desk(),
            NetworkProfile::Full => NetworkConfig::full(),
        };
        if let Some(size) = self.network.input_size {
            cfg.input_size = size;
        }
        cfg.shapes()?;
        Ok(cfg)
    }

    pub fn source_size(&self) -> Result<usize> {
        Ok(self
            .data
            .source_size
            .unwrap_or(2 * self.network_config()?.input_size))
    }

    /// Check every section for out-of-range values.
    pub fn validate(&self) -> Result<()> {
        if !(self.denoise.sigma > 0.0 && self.denoise.sigma.is_finite()) {
            return Err(Error::Argument(format!(
                "denoise.sigma = {} must be positive",
                self.denoise.sigma
            )));
        }
        self.bm3d_profile().validate()?;
        self.enhance.validate()?;
        self.sfcm_config().validate()?;
        self.levelset.validate()?;
        self.train_config().validate()?;
        self.network_config()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_default() {
        assert_eq!(
            PipelineConfig::parse("").unwrap(),
            PipelineConfig::default()
        );
        PipelineConfig::default().validate().unwrap();
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(
            "# comment\nlevelset.nu = -0.75\n\nbm3d.tau_hard = 900\npaths.data = /tmp/x y\npipeline.seed = 9\nnetwork.profile = full\ntrain.augment=false\n",
        )
        .unwrap();
        assert_eq!(cfg.levelset.nu, -0.75);
        assert_eq!(cfg.bm3d_profile().tau_hard, 900.0);
        assert_eq!(cfg.bm3d_profile().tau_wie, 2500.0);
        assert_eq!(cfg.paths.data.as_deref(), Some(Path::new("/tmp/x y")));
        assert_eq!(cfg.sfcm_config().seed, 9);
        assert_eq!(cfg.train_config().seed, 9);
        assert!(!cfg.train.augment);
        let text = cfg.echo();
        assert!(text.contains("bm3d.k_hard = auto\n"));
        assert_eq!(PipelineConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn errors_carry_line_numbers() {
        for (text, line) in [
            ("levelset.nu = 1\nlevelset.bogus = 2", 2),
            ("nonsense", 1),
            ("sfcm.clusters = many", 1),
        ] {
            match PipelineConfig::parse(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line),
                other => panic!("{:?}", other),
            }
        }
    }

    #[test]
    fn high_noise_profile_follows_sigma() {
        let cfg = PipelineConfig::parse("denoise.sigma = 45").unwrap();
        assert_eq!(cfg.bm3d_profile().tau_hard, 5000.0);
    }
}
