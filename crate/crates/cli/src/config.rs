//! Flat `key=value` run configuration.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use pfadn_core::lcdgt::RigConfig;
use pfadn_core::mosaic::{RandomFieldConfig, SynthConfig};
use pfadn_core::pfadn::{LossWeights, PfadnConfig, TrainConfig};

use crate::CliError;

/// Every recognized key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("synth.tile", "128", "tile side in pixels (even)"),
    ("synth.train_fraction", "0.75", "fraction of samples in the train split"),
    ("synth.dolp_min", "0.2", "lower end of the random DoLP field"),
    ("synth.dolp_max", "1.0", "upper end of the random DoLP field"),
    ("synth.angle_frequency", "4", "highest AoLP field frequency, cycles per tile"),
    ("synth.dolp_frequency", "4", "highest DoLP field frequency, cycles per tile"),
    ("synth.harmonics", "8", "sinusoids per random field"),
    ("synth.quantize_12bit", "false", "quantize mosaics to 12 bits"),
    ("model.tile", "128", "network tile side"),
    ("model.mconv_layers", "3", "MConv blocks"),
    ("model.mconv_depth", "16", "feature maps per MConv branch"),
    ("model.shrink", "12", "intensity branch shrink width"),
    ("model.mapping_layers", "4", "intensity branch 3x3 mapping layers"),
    ("model.expand", "56", "intensity branch expand width"),
    ("model.angle_widths", "32,16", "angle branch 3x3 layer widths"),
    ("train.lr", "1e-4", "Adam learning rate"),
    ("train.batch_size", "8", "samples per step"),
    ("train.epochs", "10", "epochs to run in this invocation"),
    ("train.patience", "3", "epochs without validation gain before the rate drops"),
    ("train.lr_factor", "0.5", "rate multiplier on a plateau"),
    ("train.val_fraction", "0.1", "tail of the train split held out for validation"),
    ("train.gamma", "0.5", "loss weight of the L1/SSIM mix against L2"),
    ("train.beta", "0.84", "SSIM weight inside the L1/SSIM mix"),
    ("eval.min_dolp", "0.02", "angle pixels below this DoLP are not scored"),
    ("rig.poses", "5", "synthetic capture poses"),
    ("rig.alpha_deg", "37", "screen polarizer angle in degrees"),
    ("rig.noise", "0", "raw-frame noise standard deviation"),
    ("rig.corner_noise", "0", "corner noise standard deviation in pixels"),
    ("rig.camera_height", "96", "camera rows"),
    ("rig.camera_width", "128", "camera columns"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key=value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            match cfg.values.get_mut(k) {
                Some(slot) => *slot = v.to_string(),
                None => return Err(CliError::Usage(format!("config line {}: unknown key {k:?}", n + 1))),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
                Self::parse(&text)
            }
        }
    }

    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("key is listed in KEYS")
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {v:?}")))
    }

    fn list(&self, key: &str) -> Result<Vec<usize>, CliError> {
        self.raw(key)
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("config key {key}: cannot parse {s:?}")))
            })
            .collect()
    }

    pub fn synth(&self, seed: u64) -> Result<SynthConfig, CliError> {
        let harmonics = self.get("synth.harmonics")?;
        let field = |freq: f64| RandomFieldConfig {
            num_harmonics: harmonics,
            max_frequency: freq,
            ..RandomFieldConfig::default()
        };
        Ok(SynthConfig {
            tile: self.get("synth.tile")?,
            angle_field: field(self.get("synth.angle_frequency")?),
            dolp_field: field(self.get("synth.dolp_frequency")?),
            dolp_range: (self.get("synth.dolp_min")?, self.get("synth.dolp_max")?),
            quantize_12bit: self.get("synth.quantize_12bit")?,
            train_fraction: self.get("synth.train_fraction")?,
            seed,
        })
    }

    pub fn model(&self) -> Result<PfadnConfig, CliError> {
        Ok(PfadnConfig {
            tile: self.get("model.tile")?,
            mconv_layers: self.get("model.mconv_layers")?,
            mconv_depth: self.get("model.mconv_depth")?,
            shrink: self.get("model.shrink")?,
            mapping_layers: self.get("model.mapping_layers")?,
            expand: self.get("model.expand")?,
            angle_widths: self.list("model.angle_widths")?,
        })
    }

    pub fn train(&self, seed: u64) -> Result<TrainConfig, CliError> {
        let cfg = TrainConfig {
            lr: self.get("train.lr")?,
            loss: LossWeights {
                gamma: self.get("train.gamma")?,
                beta: self.get("train.beta")?,
            },
            batch_size: self.get("train.batch_size")?,
            epochs: self.get("train.epochs")?,
            seed,
            patience: self.get("train.patience")?,
            lr_factor: self.get("train.lr_factor")?,
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn rig(&self, seed: u64) -> Result<RigConfig, CliError> {
        let alpha: f64 = self.get("rig.alpha_deg")?;
        let cfg = RigConfig {
            camera: (self.get("rig.camera_height")?, self.get("rig.camera_width")?),
            poses: self.get("rig.poses")?,
            alpha: alpha.to_radians(),
            noise_sigma: self.get("rig.noise")?,
            corner_noise: self.get("rig.corner_noise")?,
            seed,
            ..RigConfig::default()
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_overrides() {
        let cfg = RunConfig::parse("# header\ntrain.lr = 0.001  # faster\n\nsynth.tile=64\n").unwrap();
        assert_eq!(cfg.get::<f64>("train.lr").unwrap(), 1e-3);
        assert_eq!(cfg.get::<usize>("synth.tile").unwrap(), 64);
        assert_eq!(cfg.get::<usize>("train.batch_size").unwrap(), 8);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(RunConfig::parse("train.lrr=1"), Err(CliError::Usage(_))));
        assert!(matches!(RunConfig::parse("no equals sign"), Err(CliError::Usage(_))));
    }

    #[test]
    fn defaults_build() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.model().unwrap(), PfadnConfig::default());
        assert_eq!(cfg.train(3).unwrap().seed, 3);
        assert!(cfg.synth(0).is_ok());
        assert!(cfg.rig(0).is_ok());
    }

    #[test]
    fn bad_value_rejected() {
        let cfg = RunConfig::parse("train.batch_size=eight").unwrap();
        assert!(cfg.train(0).is_err());
    }
}
