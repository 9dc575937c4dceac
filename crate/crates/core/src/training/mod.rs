//! Sequence-level training of the acoustic side of a combined scorer.
//!
//! The criterion is the log posterior of the ground truth under the
//! globally renormalized combined model, with the normalizer replaced by the
//! mass of the recombination lattice found by beam search.

mod criterion;
mod task;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use criterion::{
    compute_criterion, criterion_gradient, finite_difference_gradient, max_relative_error, rescored_criterion,
    CriterionResult, TrainingExample,
};
pub use task::{generate_task, pretrain_ml, TaskConfig};

use crate::error::{Error, Result};
use crate::models::CombinedScorer;
use crate::parallel::{ordered_map, sum_in_order};
use crate::search::{search, HistoryLimit, SearchConfig};
use crate::sequence::edit_distance;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Examples per update; 0 means the whole training set.
    pub batch_size: usize,
    /// Consecutive epochs of falling mean `F` tolerated before aborting.
    pub patience: usize,
    pub include_gt: bool,
    /// Search that builds the denominator lattice.
    pub search: SearchConfig,
    /// Search used for the held-out error rate (best surviving path).
    pub decode: SearchConfig,
}

impl SgdConfig {
    pub fn new(search: SearchConfig) -> Self {
        SgdConfig {
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 0,
            patience: 5,
            include_gt: true,
            decode: SearchConfig::new(4, HistoryLimit::Infinite, search.max_length),
            search,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be finite and >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be at least 1".into()));
        }
        self.search.validate()?;
        self.decode.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mean_f: f64,
    pub token_error_rate: f64,
    pub num_recombinations_mean: f64,
}

pub const METRICS_CSV_HEADER: &str = "epoch,mean_F,token_error_rate,num_recombinations_mean";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochMetrics>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(METRICS_CSV_HEADER);
        s.push('\n');
        for m in &self.epochs {
            writeln!(s, "{},{:.12},{:.12},{:.6}", m.epoch, m.mean_f, m.token_error_rate, m.num_recombinations_mean)
                .expect("writing to a string");
        }
        s
    }
}

/// Edit errors of the best decoded sequence over reference tokens, end token excluded.
pub fn token_error_rate(combined: &CombinedScorer, data: &[TrainingExample], decode: &SearchConfig) -> Result<f64> {
    let eos = combined.eos_id();
    let per: Vec<Result<(usize, usize)>> = ordered_map(data, |_, ex| {
        let result = search(combined, &ex.x, decode)?;
        let hyp = result.best().map(|b| b.tokens.body(eos).to_vec()).unwrap_or_default();
        let reference = ex.target.body(eos);
        Ok((edit_distance(&hyp, reference), reference.len()))
    });
    let (mut errors, mut total) = (0, 0);
    for p in per {
        let (e, t) = p?;
        errors += e;
        total += t;
    }
    Ok(if total == 0 { errors as f64 } else { errors as f64 / total as f64 })
}

/// Mean `F` and mean recombination count over `data`.
pub fn mean_criterion(
    combined: &CombinedScorer,
    data: &[TrainingExample],
    config: &SearchConfig,
    include_gt: bool,
) -> Result<(f64, f64)> {
    let per = ordered_map(data, |_, ex| compute_criterion(combined, ex, config, include_gt));
    let (mut f, mut r) = (0.0, 0.0);
    for p in per {
        let p = p?;
        f += p.f;
        r += p.num_recombinations as f64;
    }
    let n = data.len().max(1) as f64;
    Ok((f / n, r / n))
}

fn metrics(
    combined: &CombinedScorer,
    epoch: usize,
    train: &[TrainingExample],
    heldout: &[TrainingExample],
    config: &SgdConfig,
) -> Result<EpochMetrics> {
    let (mean_f, num_recombinations_mean) = mean_criterion(combined, train, &config.search, config.include_gt)?;
    Ok(EpochMetrics {
        epoch,
        mean_f,
        token_error_rate: token_error_rate(combined, heldout, &config.decode)?,
        num_recombinations_mean,
    })
}

/// One gradient-ascent step on mean `F` over `batch`; returns the batch's mean `F`.
pub fn sgd_step(combined: &mut CombinedScorer, batch: &[TrainingExample], config: &SgdConfig) -> Result<f64> {
    let model: &CombinedScorer = combined;
    let results = ordered_map(batch, |_, ex| criterion_gradient(model, ex, &config.search, config.include_gt));
    let results: Vec<CriterionResult> = results.into_iter().collect::<Result<_>>()?;
    let grads: Vec<Vec<f64>> = results.iter().map(|r| r.gradient.clone()).collect();
    let total = sum_in_order(&grads, combined.am.param_count());
    let scale = config.learning_rate / batch.len().max(1) as f64;
    for (p, g) in combined.am.params_mut().iter_mut().zip(&total) {
        *p += scale * g;
    }
    Ok(results.iter().map(|r| r.f).sum::<f64>() / batch.len().max(1) as f64)
}

/// SGD on mean `F`; row 0 of the log describes the starting model.
pub fn train(
    combined: &mut CombinedScorer,
    train: &[TrainingExample],
    heldout: &[TrainingExample],
    config: &SgdConfig,
) -> Result<TrainingLog> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let batch = if config.batch_size == 0 { train.len() } else { config.batch_size };
    let mut log = TrainingLog::default();
    log.epochs.push(metrics(combined, 0, train, heldout, config)?);
    let mut falling = 0;
    for epoch in 1..=config.epochs {
        for chunk in train.chunks(batch) {
            sgd_step(combined, chunk, config)?;
        }
        let m = metrics(combined, epoch, train, heldout, config)?;
        let prev = log.epochs.last().expect("row 0 exists").mean_f;
        falling = if m.mean_f < prev { falling + 1 } else { 0 };
        log.epochs.push(m);
        if falling >= config.patience {
            return Err(Error::Diverged { epoch, patience: config.patience });
        }
    }
    Ok(log)
}
