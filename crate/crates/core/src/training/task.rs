use serde::{Deserialize, Serialize};

use super::criterion::TrainingExample;
use crate::error::{Error, Result};
use crate::models::{InputFeatures, Scorer, ScorerSpec};
use crate::parallel::{ordered_map, sum_in_order};
use crate::rng::{sample_log_dist, seeded_rng};
use crate::sequence::TokenSequence;

/// Synthetic pairs: random input frames, transcripts sampled from a hidden teacher.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub teacher: ScorerSpec,
    pub frames: usize,
    pub max_length: usize,
    pub train_size: usize,
    pub heldout_size: usize,
    /// Sampling temperature; below 1 sharpens the teacher.
    pub temperature: f64,
    pub data_seed: u64,
}

impl TaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 || self.teacher.feature_dim == 0 {
            return Err(Error::InvalidConfig("the task needs at least one frame and one feature".into()));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig(format!("temperature must be positive, got {}", self.temperature)));
        }
        if self.max_length == 0 || self.train_size == 0 {
            return Err(Error::InvalidConfig("max_length and train_size must be at least 1".into()));
        }
        Ok(())
    }
}

fn sample_example(teacher: &Scorer, cfg: &TaskConfig, stream: u64) -> Result<TrainingExample> {
    let mut rng = seeded_rng(cfg.data_seed, stream);
    let x = InputFeatures::random(&mut rng, cfg.frames, cfg.teacher.feature_dim)?;
    let eos = teacher.eos_id();
    let mut state = teacher.init_state(&x)?;
    let mut dist = teacher.log_distribution(&state)?;
    let mut tokens = Vec::new();
    loop {
        let t = if tokens.len() == cfg.max_length { eos } else { sample_log_dist(&mut rng, &dist, cfg.temperature) };
        tokens.push(t);
        if t == eos {
            break;
        }
        (state, dist) = teacher.step(&state, t)?;
    }
    TrainingExample::new(x, TokenSequence(tokens), eos)
}

/// Training and held-out sets; example `i` draws from stream `i` of the data seed.
pub fn generate_task(cfg: &TaskConfig) -> Result<(Vec<TrainingExample>, Vec<TrainingExample>)> {
    cfg.validate()?;
    let teacher = cfg.teacher.build()?;
    let n = cfg.train_size + cfg.heldout_size;
    let mut all = (0..n as u64).map(|i| sample_example(&teacher, cfg, i)).collect::<Result<Vec<_>>>()?;
    let heldout = all.split_off(cfg.train_size);
    Ok((all, heldout))
}

/// Full-batch gradient ascent on the mean per-sequence log-likelihood of the
/// targets under `model` alone. Returns the mean log-likelihood before each epoch.
pub fn pretrain_ml(
    model: &mut Scorer,
    data: &[TrainingExample],
    epochs: usize,
    learning_rate: f64,
) -> Result<Vec<f64>> {
    let mut history = Vec::with_capacity(epochs);
    let n = data.len().max(1) as f64;
    for _ in 0..epochs {
        let frozen: &Scorer = model;
        let per = ordered_map(data, |_, ex| -> Result<(f64, Vec<f64>)> {
            let mut grad = vec![0.0; frozen.param_count()];
            let ids = ex.target.ids();
            let v = frozen.vocab_size();
            let mut loglik = 0.0;
            for i in 0..ids.len() {
                loglik += frozen.prefix_distribution(&ex.x, &ids[..i])?[ids[i]];
                let mut g = vec![0.0; v];
                g[ids[i]] = 1.0;
                frozen.accumulate_gradient(&ex.x, &ids[..i], &g, &mut grad)?;
            }
            Ok((loglik, grad))
        });
        let per: Vec<(f64, Vec<f64>)> = per.into_iter().collect::<Result<_>>()?;
        history.push(per.iter().map(|p| p.0).sum::<f64>() / n);
        let grads: Vec<Vec<f64>> = per.into_iter().map(|p| p.1).collect();
        let total = sum_in_order(&grads, model.param_count());
        for (p, g) in model.params_mut().iter_mut().zip(&total) {
            *p += learning_rate * g / n;
        }
    }
    Ok(history)
}
