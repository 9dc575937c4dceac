//! Softmax output layer with a floor on the sentence-end probability.
//!
//! If the raw softmax gives `p(eos) < floor`, the end probability is raised
//! to `floor` and every other token is rescaled by
//! `(1 - floor) / (1 - p(eos))`. The result still sums to one and every model
//! terminates with probability one.

use crate::logmath::{log_softmax_in_place, softmax};

pub(crate) fn floored_log_softmax(logits: &[f64], eos: usize, floor: f64) -> Vec<f64> {
    let mut l = logits.to_vec();
    log_softmax_in_place(&mut l);
    if floor > 0.0 && l[eos] < floor.ln() {
        let adjust = (-floor).ln_1p() - (-l[eos].exp()).ln_1p();
        for (w, v) in l.iter_mut().enumerate() {
            if w != eos {
                *v += adjust;
            }
        }
        l[eos] = floor.ln();
    }
    l
}

/// Given `g = dL/d(log-dist)`, returns `dL/d(logits)`.
pub(crate) fn floored_log_softmax_backward(logits: &[f64], eos: usize, floor: f64, g: &[f64]) -> Vec<f64> {
    let s = softmax(logits);
    let active = floor > 0.0 && s[eos] < floor;
    if !active {
        let total: f64 = g.iter().sum();
        return g.iter().zip(&s).map(|(gi, si)| gi - si * total).collect();
    }
    // p(eos) is the constant floor; the rest carry -ln(1 - s_eos).
    let total: f64 = g.iter().enumerate().filter(|&(w, _)| w != eos).map(|(_, v)| v).sum();
    let ratio = total * s[eos] / (1.0 - s[eos]);
    (0..logits.len())
        .map(|j| {
            let gj = if j == eos { 0.0 } else { g[j] };
            let delta = if j == eos { 1.0 } else { 0.0 };
            gj - s[j] * total + ratio * (delta - s[j])
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logmath::log_sum_raw;

    fn finite_diff(logits: &[f64], eos: usize, floor: f64, g: &[f64]) -> Vec<f64> {
        let h = 1e-6;
        (0..logits.len())
            .map(|j| {
                let mut p = logits.to_vec();
                let mut m = logits.to_vec();
                p[j] += h;
                m[j] -= h;
                let fp: f64 = floored_log_softmax(&p, eos, floor).iter().zip(g).map(|(a, b)| a * b).sum();
                let fm: f64 = floored_log_softmax(&m, eos, floor).iter().zip(g).map(|(a, b)| a * b).sum();
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn floor_keeps_normalization() {
        let logits = [3.0, 2.0, 1.0, -12.0];
        let l = floored_log_softmax(&logits, 3, 1e-4);
        assert!((l[3] - 1e-4f64.ln()).abs() < 1e-15);
        assert!(log_sum_raw(&l).abs() < 1e-12);
    }

    #[test]
    fn inactive_floor_is_plain_softmax() {
        let logits = [0.3, -0.2, 0.1];
        let l = floored_log_softmax(&logits, 2, 1e-4);
        let mut plain = logits.to_vec();
        log_softmax_in_place(&mut plain);
        assert_eq!(l, plain);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let g = [0.7, -1.3, 0.4, 2.0];
        for (logits, floor) in
            [([0.1, 0.5, -0.3, 0.2], 1e-4), ([3.0, 2.0, 1.0, -12.0], 1e-4), ([1.0, 0.0, 0.5, -1.0], 0.0)]
        {
            let a = floored_log_softmax_backward(&logits, 3, floor, &g);
            let n = finite_diff(&logits, 3, floor, &g);
            for (x, y) in a.iter().zip(&n) {
                assert!((x - y).abs() < 1e-7, "{a:?} vs {n:?}");
            }
        }
    }
}
