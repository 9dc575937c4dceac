//! Feed-forward scorer over a fixed window of the last `m` tokens.
//!
//! ```text
//! c   = [emb(w_{n-1}); emb(w_{n-2}); ...; emb(w_{n-m})]   (PAD row before the start)
//! h   = tanh(W_ctx c + W_in pool(x) + w_step * n + b_h)
//! out = floored_log_softmax(W_out h + b_out)
//! ```
//!
//! `pool(x)` is the mean frame. A scorer with `feature_dim = 0` ignores the
//! input and acts as a language model.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::head::{floored_log_softmax, floored_log_softmax_backward};
use super::InputFeatures;
use crate::error::{Error, Result};
use crate::rng::{seeded_rng, symmetric};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitedContextScorer {
    pub vocab_size: usize,
    pub eos_id: usize,
    pub context: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub feature_dim: usize,
    pub eos_floor: f64,
    pub length_cap: usize,
    pub seed: u64,
    pub params: Vec<f64>,
}

#[derive(Clone, Copy, Debug)]
struct Layout {
    emb: usize,
    w_ctx: usize,
    w_in: usize,
    w_step: usize,
    b_h: usize,
    w_out: usize,
    b_out: usize,
    total: usize,
}

/// Decoding state: the last `m` tokens (most recent first) and the step.
#[derive(Clone, Debug)]
pub struct LimitedState {
    pub window: Vec<usize>,
    pub step: usize,
    cond: Arc<Vec<f64>>,
}

impl PartialEq for LimitedState {
    fn eq(&self, other: &Self) -> bool {
        self.window == other.window && self.step == other.step
    }
}

impl LimitedContextScorer {
    #[allow(clippy::too_many_arguments)]
    pub fn seeded(
        seed: u64,
        vocab_size: usize,
        eos_id: usize,
        context: usize,
        embed_dim: usize,
        hidden_dim: usize,
        feature_dim: usize,
        init_scale: f64,
    ) -> Result<Self> {
        if vocab_size == 0 || eos_id >= vocab_size {
            return Err(Error::InvalidModel("eos id outside vocabulary".into()));
        }
        if context == 0 || embed_dim == 0 || hidden_dim == 0 {
            return Err(Error::InvalidModel("context, embed and hidden sizes must be positive".into()));
        }
        let mut s = LimitedContextScorer {
            vocab_size,
            eos_id,
            context,
            embed_dim,
            hidden_dim,
            feature_dim,
            eos_floor: 1e-4,
            length_cap: 64,
            seed,
            params: Vec::new(),
        };
        let mut rng = seeded_rng(seed, 0);
        s.params = (0..s.layout().total).map(|_| symmetric(&mut rng, init_scale)).collect();
        Ok(s)
    }

    fn layout(&self) -> Layout {
        let (v, e, h, f, m) = (self.vocab_size, self.embed_dim, self.hidden_dim, self.feature_dim, self.context);
        let emb = 0;
        let w_ctx = emb + (v + 1) * e;
        let w_in = w_ctx + h * m * e;
        let w_step = w_in + h * f;
        let b_h = w_step + h;
        let w_out = b_h + h;
        let b_out = w_out + v * h;
        Layout { emb, w_ctx, w_in, w_step, b_h, w_out, b_out, total: b_out + v }
    }

    pub fn param_count(&self) -> usize {
        self.layout().total
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if self.params.len() != self.param_count() {
            return Err(Error::InvalidModel(format!(
                "limited-context scorer expects {} parameters, got {}",
                self.param_count(),
                self.params.len()
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        Ok(())
    }

    fn padding(&self) -> usize {
        self.vocab_size
    }

    fn condition(&self, x: &InputFeatures) -> Result<Vec<f64>> {
        let lay = self.layout();
        let h = self.hidden_dim;
        let mut cond = self.params[lay.b_h..lay.b_h + h].to_vec();
        if self.feature_dim > 0 {
            if x.dim() != self.feature_dim {
                return Err(Error::FeatureDim { expected: self.feature_dim, actual: x.dim() });
            }
            let pooled = x.pooled();
            for (i, c) in cond.iter_mut().enumerate() {
                let row = &self.params[lay.w_in + i * self.feature_dim..lay.w_in + (i + 1) * self.feature_dim];
                *c += row.iter().zip(&pooled).map(|(w, p)| w * p).sum::<f64>();
            }
        }
        Ok(cond)
    }

    pub fn init_state(&self, x: &InputFeatures) -> Result<LimitedState> {
        Ok(LimitedState { window: vec![self.padding(); self.context], step: 0, cond: Arc::new(self.condition(x)?) })
    }

    /// Window of the last `m` tokens of `prefix`, most recent first.
    pub fn window_of(&self, prefix: &[usize]) -> Vec<usize> {
        (0..self.context)
            .map(|s| if s < prefix.len() { prefix[prefix.len() - 1 - s] } else { self.padding() })
            .collect()
    }

    fn hidden(&self, window: &[usize], step: usize, cond: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lay = self.layout();
        let (e, m) = (self.embed_dim, self.context);
        let ctx: Vec<f64> =
            window.iter().flat_map(|&t| self.params[lay.emb + t * e..lay.emb + (t + 1) * e].iter().copied()).collect();
        let hid = (0..self.hidden_dim)
            .map(|i| {
                let row = &self.params[lay.w_ctx + i * m * e..lay.w_ctx + (i + 1) * m * e];
                let pre = row.iter().zip(&ctx).map(|(w, c)| w * c).sum::<f64>()
                    + cond[i]
                    + self.params[lay.w_step + i] * step as f64;
                pre.tanh()
            })
            .collect();
        (ctx, hid)
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

    pub fn log_distribution(&self, state: &LimitedState) -> Vec<f64> {
        let (_, hid) = self.hidden(&state.window, state.step, &state.cond);
        floored_log_softmax(&self.logits(&hid), self.eos_id, self.eos_floor)
    }

    pub fn advance(&self, state: &LimitedState, token: usize) -> Result<LimitedState> {
        if state.step >= self.length_cap {
            return Err(Error::LengthCap { cap: self.length_cap });
        }
        let mut window = Vec::with_capacity(self.context);
        window.push(token);
        window.extend_from_slice(&state.window[..self.context - 1]);
        Ok(LimitedState { window, step: state.step + 1, cond: Arc::clone(&state.cond) })
    }

    /// Adds `sum_w g[w] * d log p(w | prefix, x) / d params` into `grad`.
    pub fn accumulate_gradient(&self, x: &InputFeatures, prefix: &[usize], g: &[f64], grad: &mut [f64]) -> Result<()> {
        let lay = self.layout();
        let (e, m, hd, f, v) = (self.embed_dim, self.context, self.hidden_dim, self.feature_dim, self.vocab_size);
        let cond = self.condition(x)?;
        let window = self.window_of(prefix);
        let step = prefix.len();
        let (ctx, hid) = self.hidden(&window, step, &cond);
        let logits = self.logits(&hid);
        let dz = floored_log_softmax_backward(&logits, self.eos_id, self.eos_floor, g);

        let mut dh = vec![0.0; hd];
        for w in 0..v {
            grad[lay.b_out + w] += dz[w];
            for i in 0..hd {
                grad[lay.w_out + w * hd + i] += dz[w] * hid[i];
                dh[i] += dz[w] * self.params[lay.w_out + w * hd + i];
            }
        }
        let dpre: Vec<f64> = dh.iter().zip(&hid).map(|(d, a)| d * (1.0 - a * a)).collect();
        let pooled = if f > 0 { x.pooled() } else { Vec::new() };
        for i in 0..hd {
            grad[lay.b_h + i] += dpre[i];
            grad[lay.w_step + i] += dpre[i] * step as f64;
            for j in 0..f {
                grad[lay.w_in + i * f + j] += dpre[i] * pooled[j];
            }
            for j in 0..m * e {
                grad[lay.w_ctx + i * m * e + j] += dpre[i] * ctx[j];
                let (slot, k) = (j / e, j % e);
                grad[lay.emb + window[slot] * e + k] += dpre[i] * self.params[lay.w_ctx + i * m * e + j];
            }
        }
        Ok(())
    }
}
