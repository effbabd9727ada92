use std::path::{Path, PathBuf};

use super::{LabelColumn, NormMode};
use crate::affinity::{PerplexityConfig, UmapGraphConfig};
use crate::error::{DreError, Result};
use crate::loss::{KernelConfigs, TsneKernelConfig, UmapKernelConfig};
use crate::nn::AdamConfig;
use crate::scalar::Scalar;
use crate::trainer::{StagePlan, TrainConfig};

/// Flat `key = value` run configuration. Lines starting with `#` are
/// comments; unknown or repeated keys are errors.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub perplexity: f64,
    pub perplexity_tolerance: f64,
    pub perplexity_max_iter: usize,
    pub umap_k: usize,
    pub umap_tolerance: f64,
    pub umap_max_iter: usize,
    pub alpha: f64,
    pub umap_a: f64,
    pub umap_b: f64,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub plan: StagePlan,
    pub normalize: NormMode,
    pub csv_header: bool,
    pub label_column: Option<LabelColumn>,
    pub log_every: usize,
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub log: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 2500,
            perplexity: 30.0,
            perplexity_tolerance: 1e-3,
            perplexity_max_iter: 100,
            umap_k: 15,
            umap_tolerance: 1e-3,
            umap_max_iter: 100,
            alpha: 1.0,
            umap_a: 1.0,
            umap_b: 1.0,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-7,
            plan: StagePlan::dre(),
            normalize: NormMode::None,
            csv_header: false,
            label_column: None,
            log_every: 1,
            data: None,
            labels: None,
            out: None,
            log: None,
        }
    }
}

fn parse_num<V: std::str::FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .parse()
        .map_err(|_| DreError::InvalidConfig(format!("`{key}`: cannot parse `{value}`")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub const KEYS: [&'static str; 24] = [
        "seed",
        "batch_size",
        "perplexity",
        "perplexity_tolerance",
        "perplexity_max_iter",
        "umap_k",
        "umap_tolerance",
        "umap_max_iter",
        "alpha",
        "umap_a",
        "umap_b",
        "learning_rate",
        "adam_beta1",
        "adam_beta2",
        "adam_epsilon",
        "plan",
        "normalize",
        "csv_header",
        "label_column",
        "log_every",
        "data",
        "labels",
        "out",
        "log",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse_num(key, v)?,
            "batch_size" => self.batch_size = parse_num(key, v)?,
            "perplexity" => self.perplexity = parse_num(key, v)?,
            "perplexity_tolerance" => self.perplexity_tolerance = parse_num(key, v)?,
            "perplexity_max_iter" => self.perplexity_max_iter = parse_num(key, v)?,
            "umap_k" => self.umap_k = parse_num(key, v)?,
            "umap_tolerance" => self.umap_tolerance = parse_num(key, v)?,
            "umap_max_iter" => self.umap_max_iter = parse_num(key, v)?,
            "alpha" => self.alpha = parse_num(key, v)?,
            "umap_a" => self.umap_a = parse_num(key, v)?,
            "umap_b" => self.umap_b = parse_num(key, v)?,
            "learning_rate" => self.learning_rate = parse_num(key, v)?,
            "adam_beta1" => self.adam_beta1 = parse_num(key, v)?,
            "adam_beta2" => self.adam_beta2 = parse_num(key, v)?,
            "adam_epsilon" => self.adam_epsilon = parse_num(key, v)?,
            "plan" => self.plan = v.parse()?,
            "normalize" => self.normalize = v.parse()?,
            "csv_header" => self.csv_header = parse_num(key, v)?,
            "label_column" => {
                self.label_column = if v.is_empty() {
                    None
                } else if let Ok(i) = v.parse::<usize>() {
                    Some(LabelColumn::Index(i))
                } else {
                    Some(LabelColumn::Name(v.to_string()))
                }
            }
            "log_every" => self.log_every = parse_num(key, v)?,
            "data" => self.data = opt_path(v),
            "labels" => self.labels = opt_path(v),
            "out" => self.out = opt_path(v),
            "log" => self.log = opt_path(v),
            other => return Err(DreError::InvalidConfig(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "perplexity" => self.perplexity.to_string(),
            "perplexity_tolerance" => self.perplexity_tolerance.to_string(),
            "perplexity_max_iter" => self.perplexity_max_iter.to_string(),
            "umap_k" => self.umap_k.to_string(),
            "umap_tolerance" => self.umap_tolerance.to_string(),
            "umap_max_iter" => self.umap_max_iter.to_string(),
            "alpha" => self.alpha.to_string(),
            "umap_a" => self.umap_a.to_string(),
            "umap_b" => self.umap_b.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "adam_beta1" => self.adam_beta1.to_string(),
            "adam_beta2" => self.adam_beta2.to_string(),
            "adam_epsilon" => self.adam_epsilon.to_string(),
            "plan" => self.plan.to_string(),
            "normalize" => self.normalize.to_string(),
            "csv_header" => self.csv_header.to_string(),
            "label_column" => match &self.label_column {
                None => String::new(),
                Some(LabelColumn::Index(i)) => i.to_string(),
                Some(LabelColumn::Name(n)) => n.clone(),
            },
            "log_every" => self.log_every.to_string(),
            "data" => show_path(&self.data),
            "labels" => show_path(&self.labels),
            "out" => show_path(&self.out),
            "log" => show_path(&self.log),
            _ => return None,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| DreError::InvalidConfig(format!("line {}: expected key = value", n + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(DreError::InvalidConfig(format!("line {}: `{k}` set twice", n + 1)));
            }
            cfg.set(k, v)
                .map_err(|e| DreError::InvalidConfig(format!("line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every key with its current value, in [`Self::KEYS`] order.
    pub fn pairs(&self) -> Vec<(String, String)> {
        Self::KEYS
            .iter()
            .map(|k| (k.to_string(), self.get(k).expect("known key")))
            .collect()
    }

    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn train_config<T: Scalar>(&self) -> TrainConfig<T> {
        TrainConfig {
            batch_size: self.batch_size,
            seed: self.seed,
            perplexity: PerplexityConfig {
                perplexity: T::lit(self.perplexity),
                tolerance: T::lit(self.perplexity_tolerance),
                max_iter: self.perplexity_max_iter,
            },
            umap_graph: UmapGraphConfig {
                k: self.umap_k,
                tolerance: T::lit(self.umap_tolerance),
                max_iter: self.umap_max_iter,
            },
            kernels: KernelConfigs {
                tsne: TsneKernelConfig { alpha: T::lit(self.alpha) },
                umap: UmapKernelConfig {
                    a: T::lit(self.umap_a),
                    b: T::lit(self.umap_b),
                },
            },
            adam: AdamConfig {
                lr: T::lit(self.learning_rate),
                beta1: T::lit(self.adam_beta1),
                beta2: T::lit(self.adam_beta2),
                epsilon: T::lit(self.adam_epsilon),
            },
            plan: self.plan.clone(),
            log_every: self.log_every,
        }
    }
}
