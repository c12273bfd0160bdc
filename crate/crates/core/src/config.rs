//! Line-oriented `key = value` run configuration.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::MaskMode;
use crate::seqembed::CbowConfig;
use crate::train::{Ablation, TrainConfig};

/// Every tunable of a run. One seed drives embeddings, splits and training.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub train: TrainConfig,
    pub cbow: CbowConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let parts = RunConfig {
            seed: 0,
            train: TrainConfig::default(),
            cbow: CbowConfig::default(),
        };
        parts.seeded(0)
    }
}

pub const KEYS: [&str; 22] = [
    "seed",
    "train.learning_rate",
    "train.weight_decay",
    "train.epochs",
    "train.folds",
    "train.beta1",
    "train.beta2",
    "train.epsilon",
    "train.ablation",
    "model.hidden",
    "model.layers",
    "model.heads",
    "model.pe_dim",
    "model.mlp_widths",
    "model.seq_len",
    "model.token_dim",
    "model.mask_mode",
    "cbow.window",
    "cbow.negatives",
    "cbow.epochs",
    "cbow.learning_rate",
    "cbow.min_learning_rate",
];

fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse '{value}'")))
}

impl RunConfig {
    /// Configuration with every component seed set to `seed`.
    pub fn seeded(mut self, seed: u64) -> RunConfig {
        self.seed = seed;
        self.train.seed = seed;
        self.cbow.seed = seed;
        self
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        let m = &mut t.model;
        match key {
            "seed" => *self = self.clone().seeded(num(key, value)?),
            "train.learning_rate" => t.learning_rate = num(key, value)?,
            "train.weight_decay" => t.weight_decay = num(key, value)?,
            "train.epochs" => t.epochs = num(key, value)?,
            "train.folds" => t.folds = num(key, value)?,
            "train.beta1" => t.beta1 = num(key, value)?,
            "train.beta2" => t.beta2 = num(key, value)?,
            "train.epsilon" => t.epsilon = num(key, value)?,
            "train.ablation" => t.ablation = Ablation::parse(value)?,
            "model.hidden" => m.hidden = num(key, value)?,
            "model.layers" => m.layers = num(key, value)?,
            "model.heads" => m.heads = num(key, value)?,
            "model.pe_dim" => m.pe_dim = num(key, value)?,
            "model.mlp_widths" => {
                let parts: Vec<&str> = value.split(',').map(str::trim).collect();
                if parts.len() != 2 {
                    return Err(Error::Config(format!("{key}: expected two widths, got '{value}'")));
                }
                m.mlp_widths = [num(key, parts[0])?, num(key, parts[1])?];
            }
            "model.seq_len" => m.seq_len = num(key, value)?,
            "model.token_dim" => m.token_dim = num(key, value)?,
            "model.mask_mode" => m.mask_mode = MaskMode::parse(value)?,
            "cbow.window" => self.cbow.window = num(key, value)?,
            "cbow.negatives" => self.cbow.negatives_per_positive = num(key, value)?,
            "cbow.epochs" => self.cbow.epochs = num(key, value)?,
            "cbow.learning_rate" => self.cbow.learning_rate = num(key, value)?,
            "cbow.min_learning_rate" => {
                let v: f64 = num(key, value)?;
                if v != crate::seqembed::MIN_LEARNING_RATE {
                    return Err(Error::Config(format!(
                        "{key}: only {} is supported",
                        crate::seqembed::MIN_LEARNING_RATE
                    )));
                }
            }
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let m = &t.model;
        Some(match key {
            "seed" => self.seed.to_string(),
            "train.learning_rate" => format!("{:?}", t.learning_rate),
            "train.weight_decay" => format!("{:?}", t.weight_decay),
            "train.epochs" => t.epochs.to_string(),
            "train.folds" => t.folds.to_string(),
            "train.beta1" => format!("{:?}", t.beta1),
            "train.beta2" => format!("{:?}", t.beta2),
            "train.epsilon" => format!("{:?}", t.epsilon),
            "train.ablation" => t.ablation.as_str().to_string(),
            "model.hidden" => m.hidden.to_string(),
            "model.layers" => m.layers.to_string(),
            "model.heads" => m.heads.to_string(),
            "model.pe_dim" => m.pe_dim.to_string(),
            "model.mlp_widths" => format!("{},{}", m.mlp_widths[0], m.mlp_widths[1]),
            "model.seq_len" => m.seq_len.to_string(),
            "model.token_dim" => m.token_dim.to_string(),
            "model.mask_mode" => m.mask_mode.as_str().to_string(),
            "cbow.window" => self.cbow.window.to_string(),
            "cbow.negatives" => self.cbow.negatives_per_positive.to_string(),
            "cbow.epochs" => self.cbow.epochs.to_string(),
            "cbow.learning_rate" => format!("{:?}", self.cbow.learning_rate),
            "cbow.min_learning_rate" => format!("{:?}", crate::seqembed::MIN_LEARNING_RATE),
            _ => return None,
        })
    }

    /// Apply `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are skipped; unknown or repeated keys are errors.
    pub fn apply_text(mut self, text: &str, path: &Path) -> Result<RunConfig> {
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(format!("expected 'key = value', got '{line}'")))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(parse_err(format!("key '{k}' repeated")));
            }
            self.set(k, v).map_err(|e| parse_err(e.to_string()))?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn parse(text: &str, path: &Path) -> Result<RunConfig> {
        RunConfig::default().apply_text(text, path)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text, path)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.cbow.validate()
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter().map(|&k| (k, self.get(k).expect("every key has a value"))).collect()
    }

    /// Canonical text: every key in fixed order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.to_text().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}
