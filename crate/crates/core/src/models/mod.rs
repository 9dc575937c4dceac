//! Left-to-right sequence scorers and their log-linear combination.
//!
//! A scorer maps an input and a token prefix to a normalized log-distribution
//! over the next token. [`CombinedScorer`] mixes an input-conditioned model
//! and an input-free model as `alpha * log p_am + beta * log p_lm` per token.

mod head;
mod limited;
mod recurrent;
mod table;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use limited::{LimitedContextScorer, LimitedState};
pub use recurrent::{RecurrentScorer, RecurrentState};
pub use table::{MemorylessScorer, PrefixTableScorer, TableState};

use crate::error::{Error, Result};
use crate::logmath::{log_sum_raw, LogMass};
use crate::rng::symmetric;
use crate::sequence::TokenSequence;

/// `T x F` matrix of real input frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputFeatures {
    frames: Vec<Vec<f64>>,
}

impl InputFeatures {
    pub fn new(frames: Vec<Vec<f64>>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptyFeatures);
        }
        let dim = frames[0].len();
        if frames.iter().any(|r| r.len() != dim || r.iter().any(|v| !v.is_finite())) {
            return Err(Error::MalformedFeatures);
        }
        Ok(InputFeatures { frames })
    }

    /// `frames x dim` values uniform in `[-1, 1)`.
    pub fn random(rng: &mut ChaCha8Rng, frames: usize, dim: usize) -> Result<Self> {
        InputFeatures::new((0..frames).map(|_| (0..dim).map(|_| symmetric(rng, 1.0)).collect()).collect())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.frames[0].len()
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    /// Mean over frames.
    pub fn pooled(&self) -> Vec<f64> {
        let n = self.frames.len() as f64;
        (0..self.dim()).map(|j| self.frames.iter().map(|r| r[j]).sum::<f64>() / n).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Limited,
    Recurrent,
}

/// Everything needed to rebuild a seeded parametric scorer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerSpec {
    pub family: Family,
    pub vocab_size: usize,
    pub context: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub init_scale: f64,
    pub recurrence_gain: f64,
    pub eos_floor: f64,
    pub length_cap: usize,
    pub seed: u64,
}

impl ScorerSpec {
    pub fn limited(vocab_size: usize, context: usize, feature_dim: usize, seed: u64) -> Self {
        ScorerSpec {
            family: Family::Limited,
            vocab_size,
            context,
            embed_dim: 4,
            hidden_dim: 8,
            feature_dim,
            init_scale: 1.0,
            recurrence_gain: 1.0,
            eos_floor: 1e-4,
            length_cap: 64,
            seed,
        }
    }

    pub fn recurrent(vocab_size: usize, feature_dim: usize, seed: u64) -> Self {
        ScorerSpec { family: Family::Recurrent, context: 0, ..ScorerSpec::limited(vocab_size, 1, feature_dim, seed) }
    }

    /// The end token is always the last vocabulary entry.
    pub fn build(&self) -> Result<Scorer> {
        if !(0.0..1.0).contains(&self.eos_floor) {
            return Err(Error::InvalidModel(format!("eos floor {} outside [0, 1)", self.eos_floor)));
        }
        let eos = self.vocab_size.wrapping_sub(1);
        let mut scorer = match self.family {
            Family::Limited => Scorer::Limited(LimitedContextScorer::seeded(
                self.seed,
                self.vocab_size,
                eos,
                self.context,
                self.embed_dim,
                self.hidden_dim,
                self.feature_dim,
                self.init_scale,
            )?),
            Family::Recurrent => Scorer::Recurrent(RecurrentScorer::seeded(
                self.seed,
                self.vocab_size,
                eos,
                self.hidden_dim,
                self.feature_dim,
                self.init_scale,
                self.recurrence_gain,
            )?),
        };
        match &mut scorer {
            Scorer::Limited(s) => {
                s.eos_floor = self.eos_floor;
                s.length_cap = self.length_cap;
            }
            Scorer::Recurrent(s) => {
                s.eos_floor = self.eos_floor;
                s.length_cap = self.length_cap;
            }
            _ => unreachable!(),
        }
        Ok(scorer)
    }
}

/// A left-to-right scorer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Scorer {
    Limited(LimitedContextScorer),
    Recurrent(RecurrentScorer),
    Memoryless(MemorylessScorer),
    PrefixTable(PrefixTableScorer),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScorerState {
    Limited(LimitedState),
    Recurrent(RecurrentState),
    Table(TableState),
}

impl ScorerState {
    pub fn step_index(&self) -> usize {
        match self {
            ScorerState::Limited(s) => s.step,
            ScorerState::Recurrent(s) => s.step,
            ScorerState::Table(s) => s.history.len(),
        }
    }
}

fn wrong_state() -> Error {
    Error::InvalidModel("state was produced by a different scorer".into())
}

impl Scorer {
    pub fn vocab_size(&self) -> usize {
        match self {
            Scorer::Limited(s) => s.vocab_size,
            Scorer::Recurrent(s) => s.vocab_size,
            Scorer::Memoryless(s) => s.vocab_size,
            Scorer::PrefixTable(s) => s.vocab_size,
        }
    }

    pub fn eos_id(&self) -> usize {
        match self {
            Scorer::Limited(s) => s.eos_id,
            Scorer::Recurrent(s) => s.eos_id,
            Scorer::Memoryless(s) => s.eos_id,
            Scorer::PrefixTable(s) => s.eos_id,
        }
    }

    /// Number of trailing tokens the distribution depends on, if bounded.
    pub fn context_length(&self) -> Option<usize> {
        match self {
            Scorer::Limited(s) => Some(s.context),
            Scorer::Memoryless(_) => Some(0),
            Scorer::Recurrent(_) | Scorer::PrefixTable(_) => None,
        }
    }

    pub fn init_state(&self, x: &InputFeatures) -> Result<ScorerState> {
        Ok(match self {
            Scorer::Limited(s) => ScorerState::Limited(s.init_state(x)?),
            Scorer::Recurrent(s) => ScorerState::Recurrent(s.init_state(x)?),
            Scorer::Memoryless(_) | Scorer::PrefixTable(_) => ScorerState::Table(TableState { history: Vec::new() }),
        })
    }

    /// Log-distribution over the token following `state`.
    pub fn log_distribution(&self, state: &ScorerState) -> Result<Vec<f64>> {
        Ok(match (self, state) {
            (Scorer::Limited(s), ScorerState::Limited(st)) => s.log_distribution(st),
            (Scorer::Recurrent(s), ScorerState::Recurrent(st)) => s.log_distribution(st),
            (Scorer::Memoryless(s), ScorerState::Table(_)) => s.log_probs.clone(),
            (Scorer::PrefixTable(s), ScorerState::Table(st)) => s.lookup(&st.history).to_vec(),
            _ => return Err(wrong_state()),
        })
    }

    /// Appends `token` and returns the new state with its next-token log-distribution.
    pub fn step(&self, state: &ScorerState, token: usize) -> Result<(ScorerState, Vec<f64>)> {
        if token >= self.vocab_size() {
            return Err(Error::InvalidToken { token, size: self.vocab_size() });
        }
        let next = match (self, state) {
            (Scorer::Limited(s), ScorerState::Limited(st)) => ScorerState::Limited(s.advance(st, token)?),
            (Scorer::Recurrent(s), ScorerState::Recurrent(st)) => ScorerState::Recurrent(s.advance(st, token)?),
            (Scorer::Memoryless(_) | Scorer::PrefixTable(_), ScorerState::Table(st)) => {
                let mut history = st.history.clone();
                history.push(token);
                ScorerState::Table(TableState { history })
            }
            _ => return Err(wrong_state()),
        };
        let dist = self.log_distribution(&next)?;
        Ok((next, dist))
    }

    /// Log-distribution after replaying `prefix` from the initial state.
    pub fn prefix_distribution(&self, x: &InputFeatures, prefix: &[usize]) -> Result<Vec<f64>> {
        let mut state = self.init_state(x)?;
        for &t in prefix {
            state = self.step(&state, t)?.0;
        }
        self.log_distribution(&state)
    }

    pub fn params(&self) -> &[f64] {
        match self {
            Scorer::Limited(s) => &s.params,
            Scorer::Recurrent(s) => &s.params,
            Scorer::Memoryless(_) | Scorer::PrefixTable(_) => &[],
        }
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        match self {
            Scorer::Limited(s) => &mut s.params,
            Scorer::Recurrent(s) => &mut s.params,
            Scorer::Memoryless(_) | Scorer::PrefixTable(_) => &mut [],
        }
    }

    pub fn param_count(&self) -> usize {
        self.params().len()
    }

    /// Adds `sum_w g[w] * d log p(w | prefix, x) / d params` into `grad`.
    pub fn accumulate_gradient(&self, x: &InputFeatures, prefix: &[usize], g: &[f64], grad: &mut [f64]) -> Result<()> {
        if g.len() != self.vocab_size() {
            return Err(Error::VocabMismatch(self.vocab_size(), g.len()));
        }
        if grad.len() != self.param_count() {
            return Err(Error::InvalidModel("gradient buffer has the wrong length".into()));
        }
        match self {
            Scorer::Limited(s) => s.accumulate_gradient(x, prefix, g, grad),
            Scorer::Recurrent(s) => s.accumulate_gradient(x, prefix, g, grad),
            Scorer::Memoryless(_) | Scorer::PrefixTable(_) => Ok(()),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut s: Scorer = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    fn validate(&mut self) -> Result<()> {
        match self {
            Scorer::Limited(s) => s.validate(),
            Scorer::Recurrent(s) => s.validate(),
            Scorer::Memoryless(s) => {
                if s.log_probs.len() != s.vocab_size || s.eos_id >= s.vocab_size {
                    return Err(Error::InvalidModel("memoryless table does not match vocabulary".into()));
                }
                Ok(())
            }
            Scorer::PrefixTable(s) => {
                if s.default.len() != s.vocab_size
                    || s.eos_id >= s.vocab_size
                    || s.entries.iter().any(|(_, d)| d.len() != s.vocab_size)
                {
                    return Err(Error::InvalidModel("prefix table does not match vocabulary".into()));
                }
                s.reindex();
                Ok(())
            }
        }
    }
}

/// Paired decoding states of a [`CombinedScorer`].
#[derive(Clone, Debug, PartialEq)]
pub struct CombinedState {
    pub am: ScorerState,
    pub lm: Option<ScorerState>,
}

/// `alpha * log p_am + beta * log p_lm`, per token, unnormalized.
///
/// Only the input-conditioned model (`am`) is ever differentiated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CombinedScorer {
    pub am: Scorer,
    pub lm: Option<Scorer>,
    pub alpha: f64,
    pub beta: f64,
}

impl CombinedScorer {
    pub fn new(am: Scorer, lm: Option<Scorer>, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0 && beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidModel(format!("scales must be finite and non-negative, got {alpha}, {beta}")));
        }
        if let Some(lm) = &lm {
            if lm.vocab_size() != am.vocab_size() {
                return Err(Error::VocabMismatch(am.vocab_size(), lm.vocab_size()));
            }
            if lm.eos_id() != am.eos_id() {
                return Err(Error::InvalidModel("models disagree on the end token".into()));
            }
        }
        Ok(CombinedScorer { am, lm, alpha, beta })
    }

    /// Just the acoustic side, unscaled.
    pub fn am_only(am: Scorer) -> Self {
        CombinedScorer { am, lm: None, alpha: 1.0, beta: 0.0 }
    }

    pub fn vocab_size(&self) -> usize {
        self.am.vocab_size()
    }

    pub fn eos_id(&self) -> usize {
        self.am.eos_id()
    }

    /// Bound on the combined model's context, if both parts are limited.
    pub fn context_length(&self) -> Option<usize> {
        let am = self.am.context_length()?;
        match &self.lm {
            Some(lm) if self.beta != 0.0 => Some(am.max(lm.context_length()?)),
            _ => Some(am),
        }
    }

    pub fn combine(&self, am: &[f64], lm: Option<&[f64]>) -> Vec<f64> {
        let mut out: Vec<f64> =
            if self.alpha == 0.0 { vec![0.0; am.len()] } else { am.iter().map(|v| self.alpha * v).collect() };
        if let (Some(lm), true) = (lm, self.beta != 0.0) {
            for (o, l) in out.iter_mut().zip(lm) {
                *o += self.beta * l;
            }
        }
        out
    }

    /// Initial states and the combined scores of the first token.
    pub fn init(&self, x: &InputFeatures) -> Result<(CombinedState, Vec<f64>)> {
        let am = self.am.init_state(x)?;
        let am_dist = self.am.log_distribution(&am)?;
        let (lm, lm_dist) = match &self.lm {
            Some(m) => {
                let st = m.init_state(x)?;
                let d = m.log_distribution(&st)?;
                (Some(st), Some(d))
            }
            None => (None, None),
        };
        let scores = self.combine(&am_dist, lm_dist.as_deref());
        Ok((CombinedState { am, lm }, scores))
    }

    /// Advances both models by `token`; returns the next step's combined scores.
    pub fn step(&self, states: &CombinedState, token: usize) -> Result<(CombinedState, Vec<f64>)> {
        let (am, am_dist) = self.am.step(&states.am, token)?;
        let (lm, lm_dist) = match (&self.lm, &states.lm) {
            (Some(m), Some(st)) => {
                let (s, d) = m.step(st, token)?;
                (Some(s), Some(d))
            }
            (None, None) => (None, None),
            _ => return Err(wrong_state()),
        };
        let scores = self.combine(&am_dist, lm_dist.as_deref());
        Ok((CombinedState { am, lm }, scores))
    }

    /// Combined scores of the token following `prefix`.
    pub fn prefix_scores(&self, x: &InputFeatures, prefix: &[usize]) -> Result<Vec<f64>> {
        let (mut st, mut scores) = self.init(x)?;
        for &t in prefix {
            (st, scores) = self.step(&st, t)?;
        }
        Ok(scores)
    }

    /// Sum of per-token combined scores of a finished sequence, end token included.
    pub fn score_sequence(&self, x: &InputFeatures, w: &TokenSequence) -> Result<LogMass> {
        let eos = self.eos_id();
        if !w.is_finished(eos) {
            return Err(Error::UnfinishedSequence);
        }
        let (mut st, mut scores) = self.init(x)?;
        let mut total = 0.0;
        for (i, &t) in w.ids().iter().enumerate() {
            if t >= scores.len() {
                return Err(Error::InvalidToken { token: t, size: scores.len() });
            }
            total += scores[t];
            if i + 1 < w.len() {
                (st, scores) = self.step(&st, t)?;
            }
        }
        LogMass::new(total)
    }

    /// Adds `alpha * sum_w g[w] * d log p_am(w | prefix, x) / d theta_am` into `grad`.
    pub fn accumulate_am_gradient(
        &self,
        x: &InputFeatures,
        prefix: &[usize],
        g: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        if self.alpha == 0.0 {
            return Ok(());
        }
        let scaled: Vec<f64> = g.iter().map(|v| self.alpha * v).collect();
        self.am.accumulate_gradient(x, prefix, &scaled, grad)
    }
}

/// How [`distribution_distance`] aggregates the elementwise differences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// `sum_w (p(w) - q(w))^2`
    #[default]
    Squared,
    /// Square root of [`DistanceKind::Squared`].
    Euclidean,
}

/// Distance between two log-distributions, compared in the probability domain.
pub fn distribution_distance(p: &[f64], q: &[f64], kind: DistanceKind) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::VocabMismatch(p.len(), q.len()));
    }
    let d: f64 = p.iter().zip(q).map(|(a, b)| (a.exp() - b.exp()).powi(2)).sum();
    Ok(match kind {
        DistanceKind::Squared => d,
        DistanceKind::Euclidean => d.sqrt(),
    })
}

/// Normalized combined distribution of the next token, as log-probabilities.
pub fn normalized_log(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_raw(scores);
    scores.iter().map(|s| s - lse).collect()
}
