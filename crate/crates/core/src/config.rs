//! Flat `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Later assignments win, so command-line
//! flags are applied with [`ExperimentConfig::set`] after loading the file.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::TiePolicy;
use crate::model::{ModelFamily, ModelSpec, NormOrder};
use crate::propagation::{Normalization, PropagationConfig, PropagationMode};
use crate::trainer::{NegativeMode, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    Filtered,
    Candidates,
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "filtered" => Ok(Self::Filtered),
            "candidates" => Ok(Self::Candidates),
            _ => Err(Error::Config(format!("unknown protocol {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub data: Option<PathBuf>,
    pub model: ModelFamily,
    pub dim: usize,
    pub gamma: f64,
    pub norm: NormOrder,
    pub groups: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub negatives: usize,
    pub negative_mode: NegativeMode,
    pub filtered_negatives: bool,
    pub norm_clip: Option<f64>,
    pub checkpoint_fractions: Vec<f64>,
    pub alpha: f64,
    pub hops: usize,
    pub mode: PropagationMode,
    pub normalization: Normalization,
    pub protocol: ProtocolKind,
    pub candidates: Option<PathBuf>,
    pub filter_candidates: bool,
    pub tie: TiePolicy,
    pub split: String,
    pub seed: u64,
    pub threads: usize,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub alphas: Vec<f64>,
    pub max_hops: usize,
    /// Keys assigned through [`ExperimentConfig::set`], from a file or a flag.
    assigned: BTreeSet<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let prop = PropagationConfig::default();
        Self {
            data: None,
            model: ModelFamily::TransE,
            dim: 100,
            gamma: 1.0,
            norm: NormOrder::L2,
            groups: 1,
            lr: train.learning_rate,
            epochs: train.epochs,
            batch_size: train.batch_size,
            negatives: train.negatives_per_positive,
            negative_mode: train.negative_mode,
            filtered_negatives: train.filtered_negatives,
            norm_clip: train.norm_clip,
            checkpoint_fractions: vec![1.0],
            alpha: prop.alpha,
            hops: prop.hops,
            mode: prop.mode,
            normalization: prop.normalization,
            protocol: ProtocolKind::Filtered,
            candidates: None,
            filter_candidates: false,
            tie: TiePolicy::Average,
            split: "test".into(),
            seed: 0,
            threads: 0,
            checkpoint: None,
            out: None,
            alphas: vec![prop.alpha],
            max_hops: 3,
            assigned: BTreeSet::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value {value:?} for {key}"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_file(path)?;
        Ok(cfg)
    }

    pub fn merge_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.merge_str(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: PathBuf::from("<config>"),
                line: i + 1,
                message: format!("expected key=value, got {line:?}"),
            })?;
            self.set(key.trim(), value.trim()).map_err(|e| Error::Parse {
                path: PathBuf::from("<config>"),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Assigns one key. Unknown keys are errors so typos do not pass silently.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let path = |v: &str| Some(PathBuf::from(v));
        match key {
            "data" => self.data = path(value),
            "model" => self.model = value.parse()?,
            "dim" => self.dim = parse(key, value)?,
            "gamma" | "margin" => self.gamma = parse(key, value)?,
            "norm" => self.norm = value.parse()?,
            "groups" => self.groups = parse(key, value)?,
            "lr" => self.lr = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "negatives" => self.negatives = parse(key, value)?,
            "negative_mode" => {
                self.negative_mode = match value {
                    "head" => NegativeMode::CorruptHead,
                    "tail" => NegativeMode::CorruptTail,
                    "both" => NegativeMode::BothUniform,
                    _ => return Err(Error::Config(format!("unknown negative_mode {value:?}"))),
                }
            }
            "filtered_negatives" => self.filtered_negatives = parse_bool(key, value)?,
            "norm_clip" => {
                self.norm_clip = match value {
                    "" | "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "checkpoint_fractions" => self.checkpoint_fractions = parse_list(key, value)?,
            "alpha" => self.alpha = parse(key, value)?,
            "hops" => self.hops = parse(key, value)?,
            "mode" => self.mode = value.parse()?,
            "normalization" => {
                self.normalization = match value {
                    "joint" => Normalization::Joint,
                    "separate" => Normalization::Separate,
                    _ => return Err(Error::Config(format!("unknown normalization {value:?}"))),
                }
            }
            "protocol" => self.protocol = value.parse()?,
            "candidates" => self.candidates = path(value),
            "filter_candidates" => self.filter_candidates = parse_bool(key, value)?,
            "tie" => self.tie = value.parse()?,
            "split" => self.split = value.to_string(),
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "checkpoint" => self.checkpoint = path(value),
            "out" => self.out = path(value),
            "alphas" => self.alphas = parse_list(key, value)?,
            "max_hops" => self.max_hops = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
        }
        self.assigned.insert(if key == "margin" { "gamma" } else { key }.to_string());
        Ok(())
    }

    /// Whether `key` was assigned explicitly rather than left at its default.
    pub fn is_set(&self, key: &str) -> bool {
        self.assigned.contains(key)
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let spec = ModelSpec::new(self.model, self.dim)
            .with_margin(self.gamma)
            .with_norm(self.norm)
            .with_groups(self.groups);
        spec.validate()?;
        Ok(spec)
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            learning_rate: self.lr,
            batch_size: self.batch_size,
            negatives_per_positive: self.negatives,
            epochs: self.epochs,
            seed: self.seed,
            negative_mode: self.negative_mode,
            filtered_negatives: self.filtered_negatives,
            norm_clip: self.norm_clip,
            checkpoint_fractions: self.checkpoint_fractions.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn propagation_config(&self) -> Result<PropagationConfig> {
        let cfg = PropagationConfig {
            normalization: self.normalization,
            ..PropagationConfig::new(self.alpha, self.hops).with_mode(self.mode)
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn data_dir(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset directory given (data=...)".into()))
    }

    /// Checks every typed view, so bad values surface before any data is read.
    pub fn validate(&self) -> Result<()> {
        self.model_spec()?;
        self.train_config()?;
        self.propagation_config()?;
        self.validate_sweep()
    }

    pub fn validate_sweep(&self) -> Result<()> {
        for &a in &self.alphas {
            if !(0.0..1.0).contains(&a) {
                return Err(Error::Config(format!("alpha {a} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let mut cfg = ExperimentConfig::default();
        cfg.merge_str("# comment\nmodel = rotate\ndim=16\n\nalpha=0.9\nalphas=0.5, 0.9\n")
            .unwrap();
        assert_eq!(cfg.model, ModelFamily::RotatE);
        assert_eq!(cfg.dim, 16);
        assert_eq!(cfg.alphas, vec![0.5, 0.9]);
        cfg.set("alpha", "0.95").unwrap();
        assert_eq!(cfg.alpha, 0.95);
        assert!(cfg.is_set("model") && !cfg.is_set("seed"));
        assert!(cfg.model_spec().is_ok());
    }

    #[test]
    fn rejects_bad_lines_with_line_numbers() {
        let mut cfg = ExperimentConfig::default();
        match cfg.merge_str("dim=4\nnot a pair\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(cfg.merge_str("colour=blue").is_err());
        assert!(cfg.merge_str("dim=four").is_err());
    }

    #[test]
    fn validation_happens_on_typed_views() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("alpha", "1.5").unwrap();
        assert!(cfg.propagation_config().is_err());
        cfg.set("model", "rotate").unwrap();
        cfg.set("dim", "7").unwrap();
        assert!(cfg.model_spec().is_err());
        cfg.set("alphas", "0.2,1.0").unwrap();
        assert!(cfg.validate_sweep().is_err());
    }
}
