//! Hand-specified scorers without trainable parameters.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn log_probs(vocab_size: usize, probs: &[f64]) -> Result<Vec<f64>> {
    if probs.len() != vocab_size {
        return Err(Error::VocabMismatch(vocab_size, probs.len()));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidModel("probabilities must be finite and non-negative".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidModel(format!("probabilities sum to {total}, not 1")));
    }
    Ok(probs.iter().map(|p| p.ln()).collect())
}

/// Emits the same distribution at every step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemorylessScorer {
    pub vocab_size: usize,
    pub eos_id: usize,
    pub log_probs: Vec<f64>,
}

impl MemorylessScorer {
    pub fn new(eos_id: usize, probs: &[f64]) -> Result<Self> {
        if eos_id >= probs.len() {
            return Err(Error::InvalidModel("eos id outside vocabulary".into()));
        }
        Ok(MemorylessScorer { vocab_size: probs.len(), eos_id, log_probs: log_probs(probs.len(), probs)? })
    }

    /// Constant end probability `q`, remaining mass split evenly.
    pub fn constant_eos(vocab_size: usize, eos_id: usize, q: f64) -> Result<Self> {
        let rest = if vocab_size > 1 { (1.0 - q) / (vocab_size - 1) as f64 } else { 0.0 };
        let probs: Vec<f64> = (0..vocab_size).map(|w| if w == eos_id { q } else { rest }).collect();
        MemorylessScorer::new(eos_id, &probs)
    }
}

/// Distribution looked up by the full prefix, with a fallback default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrefixTableScorer {
    pub vocab_size: usize,
    pub eos_id: usize,
    pub default: Vec<f64>,
    pub entries: Vec<(Vec<usize>, Vec<f64>)>,
    #[serde(skip)]
    index: HashMap<Vec<usize>, usize>,
}

impl PrefixTableScorer {
    pub fn new(eos_id: usize, default_probs: &[f64]) -> Result<Self> {
        if eos_id >= default_probs.len() {
            return Err(Error::InvalidModel("eos id outside vocabulary".into()));
        }
        Ok(PrefixTableScorer {
            vocab_size: default_probs.len(),
            eos_id,
            default: log_probs(default_probs.len(), default_probs)?,
            entries: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn with_entry(mut self, prefix: Vec<usize>, probs: &[f64]) -> Result<Self> {
        if prefix.iter().any(|&t| t >= self.vocab_size) {
            return Err(Error::InvalidToken { token: *prefix.iter().max().unwrap_or(&0), size: self.vocab_size });
        }
        let lp = log_probs(self.vocab_size, probs)?;
        match self.index.get(&prefix) {
            Some(&i) => self.entries[i].1 = lp,
            None => {
                self.index.insert(prefix.clone(), self.entries.len());
                self.entries.push((prefix, lp));
            }
        }
        Ok(self)
    }

    pub(crate) fn reindex(&mut self) {
        self.index = self.entries.iter().enumerate().map(|(i, (p, _))| (p.clone(), i)).collect();
    }

    pub fn lookup(&self, prefix: &[usize]) -> &[f64] {
        match self.index.get(prefix) {
            Some(&i) => &self.entries[i].1,
            None => &self.default,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TableState {
    pub history: Vec<usize>,
}
