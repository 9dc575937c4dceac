use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{DistanceKind, Family, ScorerSpec};
use crate::search::{HistoryLimit, SearchConfig};

/// Flat key-value experiment description, read from TOML. Unknown keys are errors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub family: Family,
    /// Context length `m` of the limited-context family.
    pub context: usize,
    /// Including the end token.
    pub vocab_size: usize,
    pub feature_dim: usize,
    pub frames: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub init_scale: f64,
    pub recurrence_gain: f64,
    pub seed: u64,
    pub instances: usize,
    /// Instance searched by the `search` command.
    pub instance: usize,
    pub k_values: Vec<HistoryLimit>,
    pub beam_sizes: Vec<usize>,
    pub max_length: usize,
    pub alpha: f64,
    pub beta: f64,
    pub distance: DistanceKind,
    pub finished_in_beam: bool,
    pub include_gt: bool,
    /// Overrides every oracle check tolerance.
    pub tolerance: Option<f64>,
    pub output: Option<String>,

    pub teacher_seed: u64,
    pub teacher_init_scale: f64,
    pub temperature: f64,
    pub train_size: usize,
    pub heldout_size: usize,
    pub pretrain_epochs: usize,
    pub pretrain_learning_rate: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub train_k: HistoryLimit,
    pub train_beam: usize,
    pub decode_beam: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            family: Family::Recurrent,
            context: 2,
            vocab_size: 5,
            feature_dim: 3,
            frames: 4,
            hidden_dim: 8,
            embed_dim: 4,
            init_scale: 1.0,
            recurrence_gain: 1.0,
            seed: 1,
            instances: 16,
            instance: 0,
            k_values: vec![
                HistoryLimit::Finite(1),
                HistoryLimit::Finite(2),
                HistoryLimit::Finite(4),
                HistoryLimit::Finite(8),
                HistoryLimit::Infinite,
            ],
            beam_sizes: vec![8],
            max_length: 8,
            alpha: 0.1,
            beta: 0.035,
            distance: DistanceKind::Squared,
            finished_in_beam: false,
            include_gt: true,
            tolerance: None,
            output: None,
            teacher_seed: 7,
            teacher_init_scale: 3.0,
            temperature: 0.3,
            train_size: 32,
            heldout_size: 32,
            pretrain_epochs: 30,
            pretrain_learning_rate: 0.2,
            epochs: 50,
            learning_rate: 1.0,
            batch_size: 0,
            patience: 5,
            train_k: HistoryLimit::Finite(2),
            train_beam: 4,
            decode_beam: 4,
        }
    }
}

fn invalid(field: &str, message: impl std::fmt::Display) -> Error {
    Error::InvalidConfig(format!("{field}: {message}"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(invalid("vocab_size", "needs at least one token besides the end token"));
        }
        if self.family == Family::Limited && self.context == 0 {
            return Err(invalid("context", "must be at least 1 for the limited family"));
        }
        if self.feature_dim == 0 || self.frames == 0 {
            return Err(invalid("feature_dim", "inputs need at least one frame and one feature"));
        }
        if self.hidden_dim == 0 || self.embed_dim == 0 {
            return Err(invalid("hidden_dim", "layer sizes must be positive"));
        }
        if self.instances == 0 {
            return Err(invalid("instances", "must be at least 1"));
        }
        if self.k_values.is_empty() {
            return Err(invalid("k_values", "list is empty"));
        }
        if self.beam_sizes.is_empty() || self.beam_sizes.contains(&0) {
            return Err(invalid("beam_sizes", "must be a non-empty list of positive sizes"));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("init_scale", self.init_scale)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(name, format!("must be finite and >= 0, got {v}")));
            }
        }
        if let Some(t) = self.tolerance {
            if !(t.is_finite() && t >= 0.0) {
                return Err(invalid("tolerance", format!("must be finite and >= 0, got {t}")));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(invalid("learning_rate", "must be finite and >= 0"));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(invalid("temperature", "must be positive"));
        }
        if self.train_size == 0 || self.train_beam == 0 || self.decode_beam == 0 || self.patience == 0 {
            return Err(invalid("train_size", "train_size, train_beam, decode_beam and patience must be positive"));
        }
        for &k in &self.k_values {
            self.search_config(k, self.beam_sizes[0]).validate().map_err(|e| invalid("k_values", e))?;
        }
        self.search_config(self.train_k, self.train_beam).validate().map_err(|e| invalid("max_length", e))?;
        Ok(())
    }

    /// Scorer description for the configured family with a given seed.
    pub fn scorer_spec(&self, seed: u64) -> ScorerSpec {
        ScorerSpec {
            family: self.family,
            vocab_size: self.vocab_size,
            context: if self.family == Family::Limited { self.context } else { 0 },
            embed_dim: self.embed_dim,
            hidden_dim: self.hidden_dim,
            feature_dim: self.feature_dim,
            init_scale: self.init_scale,
            recurrence_gain: self.recurrence_gain,
            eos_floor: 1e-4,
            length_cap: self.max_length + 2,
            seed,
        }
    }

    pub fn search_config(&self, k: HistoryLimit, b: usize) -> SearchConfig {
        SearchConfig {
            beam_size: b,
            history_limit: k,
            max_length: self.max_length,
            finished_in_beam: self.finished_in_beam,
            distance: self.distance,
        }
    }
}
