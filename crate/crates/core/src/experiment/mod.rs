//! Experiment drivers shared by the command-line tool and the browser demo:
//! seeded instances, k/b statistics sweeps, the oracle suite, training runs
//! and the small demo lattice.

mod check;
mod config;
mod sweep;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use check::{oracle_check, CheckOutcome, OracleReport};
pub use config::ExperimentConfig;
pub use sweep::{stats_sweep, sweep_csv, SweepRow};

use crate::demo::{demo_config, demo_input, demo_scorer, demo_vocabulary};
use crate::error::Result;
use crate::lattice::{serialize, LatticeStats};
use crate::models::{CombinedScorer, InputFeatures, ScorerSpec};
use crate::rng::seeded_rng;
use crate::search::{search, SearchConfig, SearchResult};
use crate::training::{generate_task, pretrain_ml, train, SgdConfig, TaskConfig, TrainingLog};

/// Seeded model and input for instance `index`.
///
/// Each instance reads its own random stream, so instance `i` is the same
/// whatever the instance count.
pub fn build_instance(cfg: &ExperimentConfig, index: usize) -> Result<(CombinedScorer, InputFeatures)> {
    let mut rng = seeded_rng(cfg.seed, index as u64);
    let am_seed: u64 = rng.gen();
    let lm_seed: u64 = rng.gen();
    let x = InputFeatures::random(&mut rng, cfg.frames, cfg.feature_dim)?;
    let am = cfg.scorer_spec(am_seed).build()?;
    let lm = if cfg.beta > 0.0 {
        let mut spec = ScorerSpec::recurrent(cfg.vocab_size, 0, lm_seed);
        spec.hidden_dim = cfg.hidden_dim;
        spec.init_scale = cfg.init_scale;
        Some(spec.build()?)
    } else {
        None
    };
    Ok((CombinedScorer::new(am, lm, cfg.alpha, cfg.beta)?, x))
}

/// Search on one configured instance with the first `k` and `b` of the sweep lists.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchReport {
    pub instance: usize,
    pub k: String,
    pub b: usize,
    pub finished: Vec<FinishedReport>,
    pub stats: LatticeStats,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FinishedReport {
    pub tokens: Vec<usize>,
    pub mass: f64,
    pub path_score: f64,
}

pub fn run_search(cfg: &ExperimentConfig) -> Result<(SearchResult, SearchReport)> {
    cfg.validate()?;
    let (combined, x) = build_instance(cfg, cfg.instance)?;
    let sc = cfg.search_config(cfg.k_values[0], cfg.beam_sizes[0]);
    let result = search(&combined, &x, &sc)?;
    let report = SearchReport {
        instance: cfg.instance,
        k: sc.history_limit.to_string(),
        b: sc.beam_size,
        finished: result
            .finished
            .iter()
            .map(|f| FinishedReport {
                tokens: f.tokens.0.clone(),
                mass: f.mass.value(),
                path_score: f.path_score.value(),
            })
            .collect(),
        stats: result.stats()?,
    };
    Ok((result, report))
}

/// The demo lattice, its sequences and its path count.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DemoOutput {
    pub lattice_text: String,
    pub sequences: Vec<String>,
    pub path_count: String,
    pub merges: Vec<String>,
}

pub fn fig1_demo() -> Result<DemoOutput> {
    let vocab = demo_vocabulary();
    let result = search(&demo_scorer()?, &demo_input(), &demo_config())?;
    let sequences = result.lattice.enumerate_paths(1 << 10)?.into_iter().map(|(s, _)| vocab.render(&s.0)).collect();
    let merges = result
        .merges
        .iter()
        .map(|m| {
            let removed: Vec<String> = m.removed.iter().map(|r| vocab.render(r)).collect();
            format!("{} <- {}", vocab.render(&m.survivor), removed.join(" "))
        })
        .collect();
    Ok(DemoOutput {
        lattice_text: serialize(&result.lattice),
        sequences,
        path_count: result.lattice.count_paths()?.to_string(),
        merges,
    })
}

impl DemoOutput {
    pub fn render(&self) -> String {
        let mut s = self.lattice_text.clone();
        s.push('\n');
        for m in &self.merges {
            s.push_str(&format!("merge {m}\n"));
        }
        for q in &self.sequences {
            s.push_str(&format!("path {q}\n"));
        }
        s.push_str(&format!("paths {}\n", self.path_count));
        s
    }
}

/// Outcome of [`run_training`].
#[derive(Clone, Debug)]
pub struct TrainingRun {
    pub pretrain_loglik: Vec<f64>,
    pub log: TrainingLog,
    pub model: CombinedScorer,
}

/// Synthetic teacher task, ML pretraining, then sequence training.
pub fn run_training(cfg: &ExperimentConfig) -> Result<TrainingRun> {
    cfg.validate()?;
    let mut teacher = cfg.scorer_spec(cfg.teacher_seed);
    teacher.init_scale = cfg.teacher_init_scale;
    let task = TaskConfig {
        teacher,
        frames: cfg.frames,
        max_length: cfg.max_length,
        train_size: cfg.train_size,
        heldout_size: cfg.heldout_size,
        temperature: cfg.temperature,
        data_seed: cfg.seed,
    };
    let (train_set, heldout) = generate_task(&task)?;
    let (mut combined, _) = build_instance(cfg, 0)?;
    let pretrain_loglik = pretrain_ml(&mut combined.am, &train_set, cfg.pretrain_epochs, cfg.pretrain_learning_rate)?;
    if let Some(lm) = combined.lm.as_mut() {
        pretrain_ml(lm, &train_set, cfg.pretrain_epochs, cfg.pretrain_learning_rate)?;
    }
    let mut sgd = SgdConfig::new(cfg.search_config(cfg.train_k, cfg.train_beam));
    sgd.learning_rate = cfg.learning_rate;
    sgd.epochs = cfg.epochs;
    sgd.batch_size = cfg.batch_size;
    sgd.patience = cfg.patience;
    sgd.include_gt = cfg.include_gt;
    sgd.decode = SearchConfig::new(cfg.decode_beam, crate::search::HistoryLimit::Infinite, cfg.max_length);
    let log = train(&mut combined, &train_set, &heldout, &sgd)?;
    Ok(TrainingRun { pretrain_loglik, log, model: combined })
}

#[cfg(test)]
mod tests;
