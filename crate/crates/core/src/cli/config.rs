//! Experiment configuration: a flat `key = value` file, environment
//! overrides (`ECGVIZ_<KEY>` with dots mapped to underscores), then
//! command-line flag overrides, resolved into one typed struct.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::kvtext;
use crate::model::TrainOptions;
use crate::saliency::{Convention, MaskConfig};
use crate::signal::RhythmClass;

/// Environment-variable prefix for config overrides.
pub const ENV_PREFIX: &str = "ECGVIZ_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataSource {
    Synthetic,
    CsvDir,
    PhysionetDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Classifier,
    CamNet,
    LstmVis,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Classifier => "classifier",
            ModelKind::CamNet => "camnet",
            ModelKind::LstmVis => "lstmvis",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelScale {
    Desk,
    Paper,
}

/// Command-line overrides applied on top of file and environment values.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub class: Option<String>,
    pub top_k: Option<usize>,
    pub convention: Option<String>,
    pub workers: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data_source: DataSource,
    pub data_dir: Option<PathBuf>,
    pub synth_per_class: usize,
    pub synth_duration_s: f64,
    pub split_per_class: usize,
    pub model: ModelKind,
    pub model_scale: ModelScale,
    pub train: TrainOptions,
    pub mask: MaskConfig,
    pub saliency_class: Option<RhythmClass>,
    pub top_k: usize,
    pub workers: usize,
    /// The fully resolved key/value view, hashed into run manifests.
    pub resolved: BTreeMap<String, String>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut map = kvtext::parse(&text)?;
        apply_env_overrides(&mut map);
        apply_flag_overrides(&mut map, overrides);
        Self::from_map(map)
    }

    fn from_map(map: BTreeMap<String, String>) -> Result<ExperimentConfig> {
        let seed: u64 = kvtext::get_parsed(&map, "seed")
            .map_err(|_| Error::Config("seed is mandatory (integer)".to_string()))?;
        let out = PathBuf::from(kvtext::get(&map, "out")?);
        let data_source = match kvtext::get(&map, "data.source").unwrap_or("synthetic") {
            "synthetic" => DataSource::Synthetic,
            "csv" => DataSource::CsvDir,
            "physionet" => DataSource::PhysionetDir,
            other => {
                return Err(Error::Config(format!(
                    "data.source must be synthetic, csv, or physionet (got {other:?})"
                )))
            }
        };
        let data_dir = map.get("data.dir").map(PathBuf::from);
        if matches!(data_source, DataSource::CsvDir | DataSource::PhysionetDir) {
            let dir = data_dir
                .as_ref()
                .ok_or_else(|| Error::Config("data.dir is required for file sources".into()))?;
            if !dir.is_dir() {
                return Err(Error::Config(format!(
                    "data.dir {} does not exist",
                    dir.display()
                )));
            }
        }
        let model = match map.get("model").map(String::as_str).unwrap_or("classifier") {
            "classifier" => ModelKind::Classifier,
            "camnet" => ModelKind::CamNet,
            "lstmvis" => ModelKind::LstmVis,
            other => {
                return Err(Error::Config(format!(
                    "model must be classifier, camnet, or lstmvis (got {other:?})"
                )))
            }
        };
        let model_scale = match map.get("model.scale").map(String::as_str).unwrap_or("desk") {
            "desk" => ModelScale::Desk,
            "paper" => ModelScale::Paper,
            other => {
                return Err(Error::Config(format!(
                    "model.scale must be desk or paper (got {other:?})"
                )))
            }
        };
        let get_or = |key: &str, default: f64| -> Result<f64> {
            match map.get(key) {
                Some(raw) => raw
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid value for {key:?}: {raw:?}"))),
                None => Ok(default),
            }
        };
        let get_usize_or = |key: &str, default: usize| -> Result<usize> {
            match map.get(key) {
                Some(raw) => raw
                    .parse()
                    .map_err(|_| Error::Config(format!("invalid value for {key:?}: {raw:?}"))),
                None => Ok(default),
            }
        };
        let defaults = TrainOptions::default();
        let train = TrainOptions {
            lr: get_or("train.lr", defaults.lr)?,
            momentum: get_or("train.momentum", defaults.momentum)?,
            batch_size: get_usize_or("train.batch", defaults.batch_size)?,
            epochs: get_usize_or("train.epochs", defaults.epochs)?,
            seed,
            bn_momentum: get_or("train.bn_momentum", defaults.bn_momentum)?,
        };
        let mask_defaults = MaskConfig::default();
        let mask = MaskConfig {
            sparsity_weight: get_or("mask.lambda1", mask_defaults.sparsity_weight)?,
            smoothness_weight: get_or("mask.lambda2", mask_defaults.smoothness_weight)?,
            step_size: get_or("mask.step", mask_defaults.step_size)?,
            iterations: get_usize_or("mask.iterations", mask_defaults.iterations)?,
            replacement: get_or("mask.k", mask_defaults.replacement)?,
            convention: match map.get("mask.convention") {
                Some(token) => Convention::parse(token)?,
                None => Convention::default(),
            },
        };
        mask.validate()?;
        let saliency_class = match map.get("saliency.class") {
            Some(name) => Some(RhythmClass::from_name(name).ok_or_else(|| {
                Error::Config(format!("unknown class {name:?} in saliency.class"))
            })?),
            None => None,
        };
        Ok(ExperimentConfig {
            seed,
            out,
            data_source,
            data_dir,
            synth_per_class: get_usize_or("synth.per_class", 500)?,
            synth_duration_s: get_or("synth.duration", 40.0)?,
            split_per_class: get_usize_or("split.per_class", 400)?,
            model,
            model_scale,
            train,
            mask,
            saliency_class,
            top_k: get_usize_or("saliency.top_k", 4)?,
            workers: get_usize_or("workers", 0)?,
            resolved: map,
        })
    }

    /// The dataset directory commands read from / write into.
    pub fn dataset_dir(&self) -> PathBuf {
        match (&self.data_source, &self.data_dir) {
            (DataSource::CsvDir, Some(dir)) => dir.clone(),
            _ => self.out.join("dataset"),
        }
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        match self.resolved.get("eval.checkpoint") {
            Some(path) => PathBuf::from(path),
            None => self.out.join("model.ckpt"),
        }
    }
}

fn apply_env_overrides(map: &mut BTreeMap<String, String>) {
    let known_keys = [
        "seed",
        "out",
        "data.source",
        "data.dir",
        "synth.per_class",
        "synth.duration",
        "split.per_class",
        "model",
        "model.scale",
        "train.lr",
        "train.momentum",
        "train.batch",
        "train.epochs",
        "train.bn_momentum",
        "eval.checkpoint",
        "mask.lambda1",
        "mask.lambda2",
        "mask.step",
        "mask.iterations",
        "mask.k",
        "mask.convention",
        "saliency.class",
        "saliency.top_k",
        "workers",
    ];
    for key in known_keys {
        let env_key = format!("{ENV_PREFIX}{}", key.replace('.', "_").to_uppercase());
        if let Ok(value) = std::env::var(&env_key) {
            map.insert(key.to_string(), value);
        }
    }
}

fn apply_flag_overrides(map: &mut BTreeMap<String, String>, overrides: &Overrides) {
    if let Some(seed) = overrides.seed {
        map.insert("seed".to_string(), seed.to_string());
    }
    if let Some(out) = &overrides.out {
        map.insert("out".to_string(), out.display().to_string());
    }
    if let Some(class) = &overrides.class {
        map.insert("saliency.class".to_string(), class.clone());
    }
    if let Some(top_k) = overrides.top_k {
        map.insert("saliency.top_k".to_string(), top_k.to_string());
    }
    if let Some(convention) = &overrides.convention {
        map.insert("mask.convention".to_string(), convention.clone());
    }
    if let Some(workers) = overrides.workers {
        map.insert("workers".to_string(), workers.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path, body: &str) -> PathBuf {
        let path = dir.join("exp.conf");
        std::fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn minimal_config_with_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), "seed = 7\nout = runs/a\n");
        let cfg = ExperimentConfig::load(&path, &Overrides::default()).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.lr, 0.005);
        assert_eq!(cfg.train.momentum, 0.7);
        assert_eq!(cfg.train.batch_size, 16);
        assert_eq!(cfg.train.epochs, 30);
        assert_eq!(cfg.mask.sparsity_weight, 1.0);
        assert_eq!(cfg.mask.smoothness_weight, 0.001);
        assert_eq!(cfg.mask.step_size, 0.001);
        assert_eq!(cfg.mask.iterations, 500);
        assert_eq!(cfg.mask.convention, Convention::Deletion);
        assert_eq!(cfg.top_k, 4);
    }

    #[test]
    fn seed_is_mandatory() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), "out = runs/a\n");
        assert!(matches!(
            ExperimentConfig::load(&path, &Overrides::default()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn flag_overrides_beat_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), "seed = 7\nout = runs/a\nsaliency.top_k = 2\n");
        let overrides = Overrides {
            seed: Some(99),
            top_k: Some(6),
            convention: Some("literal".to_string()),
            ..Overrides::default()
        };
        let cfg = ExperimentConfig::load(&path, &overrides).unwrap();
        assert_eq!(cfg.seed, 99);
        assert_eq!(cfg.top_k, 6);
        assert_eq!(cfg.mask.convention, Convention::Literal);
    }

    #[test]
    fn env_overrides_apply() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(dir.path(), "seed = 7\nout = runs/a\n");
        std::env::set_var("ECGVIZ_TRAIN_EPOCHS", "3");
        let cfg = ExperimentConfig::load(&path, &Overrides::default()).unwrap();
        std::env::remove_var("ECGVIZ_TRAIN_EPOCHS");
        assert_eq!(cfg.train.epochs, 3);
    }

    #[test]
    fn missing_data_dir_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write_config(
            dir.path(),
            "seed = 1\nout = runs/a\ndata.source = csv\ndata.dir = /does/not/exist\n",
        );
        assert!(ExperimentConfig::load(&path, &Overrides::default()).is_err());
    }
}
