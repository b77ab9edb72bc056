//! Flat key-value run configuration with command-line overrides.

use std::path::{Path, PathBuf};

use fmdl::losses::Reduction;
use fmdl::maskgen::ThresholdConfig;
use fmdl::net::{BackboneKind, ModelConfig};
use fmdl::residual::NoiseFilter;
use fmdl::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::failure::{CliResult, Failure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

/// Every recognised key. Unknown keys are rejected when the file is read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub manifest: Option<PathBuf>,
    pub precision: Precision,

    pub num_classes: usize,
    pub head_channels: usize,
    pub aggregation: bool,
    pub backbone: BackboneKind,
    pub input_size: usize,
    pub classifier_hidden: usize,

    pub lr: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub batch_size: usize,
    pub epochs_step1: usize,
    pub epochs_step2: usize,
    pub seed: u64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub sigma: Option<f64>,
    pub noise_filter: NoiseFilter,
    pub noise_reduction: Reduction,
    pub real_replication: usize,

    /// Difference threshold used when masks are derived from pairs.
    pub mask_threshold: f64,
    pub morph_cleanup: bool,
}

impl Default for Settings {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        let th = ThresholdConfig::default();
        Settings {
            manifest: None,
            precision: Precision::F32,
            num_classes: m.num_classes,
            head_channels: m.head_channels,
            aggregation: m.aggregation,
            backbone: m.backbone,
            input_size: m.input_size,
            classifier_hidden: m.classifier_hidden,
            lr: t.lr,
            weight_decay: t.weight_decay,
            adam_beta1: t.adam_beta1,
            adam_beta2: t.adam_beta2,
            batch_size: t.batch_size,
            epochs_step1: t.epochs_step1,
            epochs_step2: t.epochs_step2,
            seed: t.seed,
            lambda1: t.lambda1,
            lambda2: t.lambda2,
            sigma: t.sigma,
            noise_filter: t.noise_filter,
            noise_reduction: t.noise_reduction,
            real_replication: t.real_replication,
            mask_threshold: th.threshold,
            morph_cleanup: th.morph_cleanup,
        }
    }
}

impl Settings {
    /// Read `path` (if any), then apply `key=value` overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Failure::usage(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .ok_or_else(|| Failure::usage(format!("override '{o}' is not key=value")))?;
            let key = key.trim();
            let value = value.trim();
            let parsed = format!("v = {value}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(value.to_string()));
            table.insert(key.to_string(), parsed);
        }
        let settings: Settings = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Failure::usage(format!("config: {}", e.message())))?;
        settings.model_config().validate()?;
        settings.train_config().validate()?;
        settings.threshold().validate()?;
        Ok(settings)
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            num_classes: self.num_classes,
            head_channels: self.head_channels,
            aggregation: self.aggregation,
            backbone: self.backbone,
            input_size: self.input_size,
            classifier_hidden: self.classifier_hidden,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            batch_size: self.batch_size,
            epochs_step1: self.epochs_step1,
            epochs_step2: self.epochs_step2,
            seed: self.seed,
            lambda1: self.lambda1,
            lambda2: self.lambda2,
            sigma: self.sigma,
            noise_filter: self.noise_filter,
            noise_reduction: self.noise_reduction,
            real_replication: self.real_replication,
        }
    }

    pub fn threshold(&self) -> ThresholdConfig {
        ThresholdConfig {
            threshold: self.mask_threshold,
            morph_cleanup: self.morph_cleanup,
        }
    }
}

/// Serialize `value` as TOML into `dir/config.toml`.
pub fn write_snapshot<S: Serialize>(dir: &Path, value: &S) -> CliResult<()> {
    let text = toml::to_string(value).map_err(|e| Failure::data(format!("config snapshot: {e}")))?;
    let path = dir.join("config.toml");
    std::fs::write(&path, text).map_err(|e| Failure::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "lr = 0.001\nbatch_size = 4\nbackbone = \"tiny\"\n").unwrap();
        let s = Settings::load(Some(&p), &["batch_size=8".into(), "noise_filter=srm".into()]).unwrap();
        assert_eq!(s.lr, 0.001);
        assert_eq!(s.batch_size, 8);
        assert_eq!(s.backbone, BackboneKind::Tiny);
        assert_eq!(s.noise_filter, NoiseFilter::Srm);
        assert!(Settings::load(None, &["learning_rate=1".into()]).is_err());
        assert!(Settings::load(None, &["lr".into()]).is_err());
        assert!(Settings::load(None, &["batch_size=0".into()]).is_err());
    }

    #[test]
    fn snapshot_round_trips() {
        let s = Settings {
            sigma: Some(10.0),
            manifest: Some("m.jsonl".into()),
            ..Settings::default()
        };
        let dir = tempfile::tempdir().unwrap();
        write_snapshot(dir.path(), &s).unwrap();
        let back = Settings::load(Some(&dir.path().join("config.toml")), &[]).unwrap();
        assert_eq!(back, s);
    }
}
