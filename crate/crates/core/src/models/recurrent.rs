//! Elman-style recurrent scorer with full-history dependence.
//!
//! ```text
//! h_0 = tanh(W_in pool(x) + b_0)
//! h_t = tanh(R h_{t-1} + emb(w_t) + b_h)
//! out = floored_log_softmax(W_out h_t + b_out)
//! ```
//!
//! Parameters are drawn uniformly from `[-init_scale, init_scale)`, except
//! `R` which uses `[-gain, gain) / sqrt(hidden_dim)`.

use serde::{Deserialize, Serialize};

use super::head::{floored_log_softmax, floored_log_softmax_backward};
use super::InputFeatures;
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, symmetric};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecurrentScorer {
    pub vocab_size: usize,
    pub eos_id: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub eos_floor: f64,
    pub length_cap: usize,
    pub seed: u64,
    pub params: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Layout {
    w_in: usize,
    b_0: usize,
    rec: usize,
    emb: usize,
    b_h: usize,
    w_out: usize,
    b_out: usize,
    total: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
    pub step: usize,
}

impl RecurrentScorer {
    #[allow(clippy::too_many_arguments)]
    pub fn seeded(
        seed: u64,
        vocab_size: usize,
        eos_id: usize,
        hidden_dim: usize,
        feature_dim: usize,
        init_scale: f64,
        recurrence_gain: f64,
    ) -> Result<Self> {
        if vocab_size == 0 || eos_id >= vocab_size {
            return Err(Error::InvalidModel("eos id outside vocabulary".into()));
        }
        if hidden_dim == 0 {
            return Err(Error::InvalidModel("hidden size must be positive".into()));
        }
        let mut s = RecurrentScorer {
            vocab_size,
            eos_id,
            hidden_dim,
            feature_dim,
            eos_floor: 1e-4,
            length_cap: 64,
            seed,
            params: Vec::new(),
        };
        let lay = s.layout();
        let rec_scale = recurrence_gain / (hidden_dim as f64).sqrt();
        let mut rng = seeded_rng(seed, 0);
        s.params = (0..lay.total)
            .map(|i| {
                let scale = if (lay.rec..lay.emb).contains(&i) { rec_scale } else { init_scale };
                symmetric(&mut rng, scale)
            })
            .collect();
        Ok(s)
    }

    fn layout(&self) -> Layout {
        let (v, h, f) = (self.vocab_size, self.hidden_dim, self.feature_dim);
        let w_in = 0;
        let b_0 = w_in + h * f;
        let rec = b_0 + h;
        let emb = rec + h * h;
        let b_h = emb + v * h;
        let w_out = b_h + h;
        let b_out = w_out + v * h;
        Layout { w_in, b_0, rec, emb, b_h, w_out, b_out, total: b_out + v }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.params.len() != self.param_count() {
            return Err(Error::InvalidModel(format!(
                "recurrent scorer expects {} parameters, got {}",
                self.param_count(),
                self.params.len()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        Ok(())
    }

    fn pooled(&self, x: &InputFeatures) -> Result<Vec<f64>> {
        if self.feature_dim == 0 {
            return Ok(Vec::new());
        }
        if x.dim() != self.feature_dim {
            return Err(Error::FeatureDim { expected: self.feature_dim, actual: x.dim() });
        }
        Ok(x.pooled())
    }

    fn initial_hidden(&self, pooled: &[f64]) -> Vec<f64> {
        let lay = self.layout();
        let f = self.feature_dim;
        (0..self.hidden_dim)
            .map(|i| {
                let row = &self.params[lay.w_in + i * f..lay.w_in + (i + 1) * f];
                (row.iter().zip(pooled).map(|(w, p)| w * p).sum::<f64>() + self.params[lay.b_0 + i]).tanh()
            })
            .collect()
    }

    fn next_hidden(&self, prev: &[f64], token: usize) -> Vec<f64> {
        let lay = self.layout();
        let h = self.hidden_dim;
        (0..h)
            .map(|i| {
                let row = &self.params[lay.rec + i * h..lay.rec + (i + 1) * h];
                (row.iter().zip(prev).map(|(w, a)| w * a).sum::<f64>()
                    + self.params[lay.emb + token * h + i]
                    + self.params[lay.b_h + i])
                    .tanh()
            })
            .collect()
    }

    fn logits(&self, hid: &[f64]) -> Vec<f64> {
        let lay = self.layout();
        let h = self.hidden_dim;
        (0..self.vocab_size)
            .map(|v| {
                let row = &self.params[lay.w_out + v * h..lay.w_out + (v + 1) * h];
                row.iter().zip(hid).map(|(w, a)| w * a).sum::<f64>() + self.params[lay.b_out + v]
            })
            .collect()
    }

    pub fn init_state(&self, x: &InputFeatures) -> Result<RecurrentState> {
        Ok(RecurrentState { hidden: self.initial_hidden(&self.pooled(x)?), step: 0 })
    }

    pub fn log_distribution(&self, state: &RecurrentState) -> Vec<f64> {
        floored_log_softmax(&self.logits(&state.hidden), self.eos_id, self.eos_floor)
    }

    pub fn advance(&self, state: &RecurrentState, token: usize) -> Result<RecurrentState> {
        if state.step >= self.length_cap {
            return Err(Error::LengthCap { cap: self.length_cap });
        }
        Ok(RecurrentState { hidden: self.next_hidden(&state.hidden, token), step: state.step + 1 })
    }

    /// Backpropagation through the whole prefix.
    pub fn accumulate_gradient(&self, x: &InputFeatures, prefix: &[usize], g: &[f64], grad: &mut [f64]) -> Result<()> {
        let lay = self.layout();
        let (hd, f, v) = (self.hidden_dim, self.feature_dim, self.vocab_size);
        let pooled = self.pooled(x)?;
        let mut hs = Vec::with_capacity(prefix.len() + 1);
        hs.push(self.initial_hidden(&pooled));
        for &t in prefix {
            let next = self.next_hidden(hs.last().expect("non-empty"), t);
            hs.push(next);
        }
        let last = hs.last().expect("non-empty");
        let dz = floored_log_softmax_backward(&self.logits(last), self.eos_id, self.eos_floor, g);

        let mut dh = vec![0.0; hd];
        for w in 0..v {
            grad[lay.b_out + w] += dz[w];
            for i in 0..hd {
                grad[lay.w_out + w * hd + i] += dz[w] * last[i];
                dh[i] += dz[w] * self.params[lay.w_out + w * hd + i];
            }
        }
        for t in (1..hs.len()).rev() {
            let (cur, prev) = (&hs[t], &hs[t - 1]);
            let token = prefix[t - 1];
            let dpre: Vec<f64> = dh.iter().zip(cur).map(|(d, a)| d * (1.0 - a * a)).collect();
            let mut dprev = vec![0.0; hd];
            for i in 0..hd {
                grad[lay.b_h + i] += dpre[i];
                grad[lay.emb + token * hd + i] += dpre[i];
                for j in 0..hd {
                    grad[lay.rec + i * hd + j] += dpre[i] * prev[j];
                    dprev[j] += dpre[i] * self.params[lay.rec + i * hd + j];
                }
            }
            dh = dprev;
        }
        let h0 = &hs[0];
        for i in 0..hd {
            let dpre = dh[i] * (1.0 - h0[i] * h0[i]);
            grad[lay.b_0 + i] += dpre;
            for j in 0..f {
                grad[lay.w_in + i * f + j] += dpre * pooled[j];
            }
        }
        Ok(())
    }
}
