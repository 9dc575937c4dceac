//! Brute-force references for small vocabularies.
//!
//! Everything here enumerates sequences directly and shares no code with the
//! beam search beyond the scorer itself.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::logmath::LogMass;
use crate::models::{CombinedScorer, CombinedState, InputFeatures};
use crate::search::SearchResult;
use crate::sequence::TokenSequence;

/// Upper bound on the number of sequences an oracle may enumerate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub guard: u128,
}

impl Default for EnumerationBudget {
    /// Enough for a vocabulary of 6 (five letters and the end token) and 7 tokens.
    fn default() -> Self {
        EnumerationBudget { guard: sequence_count(6, 7) }
    }
}

impl EnumerationBudget {
    pub fn check(&self, vocab_size: usize, max_length: usize) -> Result<()> {
        let needed = sequence_count(vocab_size, max_length);
        if needed > self.guard {
            return Err(Error::BudgetExceeded { needed, guard: self.guard });
        }
        Ok(())
    }
}

/// Number of finished sequences with at most `max_length` non-end tokens.
pub fn sequence_count(vocab_size: usize, max_length: usize) -> u128 {
    let branch = vocab_size.saturating_sub(1) as u128;
    let mut total: u128 = 0;
    let mut layer: u128 = 1;
    for _ in 0..=max_length {
        total = total.saturating_add(layer);
        layer = layer.saturating_mul(branch);
    }
    total
}

/// Max-shifted log-sum-exp with Neumaier-compensated accumulation.
pub fn compensated_log_sum(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_infinite() {
        return max;
    }
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in values {
        let term = (v - max).exp();
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    max + (sum + comp).ln()
}

/// Visits every sequence with at most `max_length` content tokens, calling
/// `visit(tokens, score, finished)` for each prefix (finished ones end in the end token).
fn walk(
    combined: &CombinedScorer,
    x: &InputFeatures,
    max_length: usize,
    budget: EnumerationBudget,
    mut visit: impl FnMut(&[usize], f64, bool),
) -> Result<()> {
    budget.check(combined.vocab_size(), max_length)?;
    let eos = combined.eos_id();
    let (state, scores) = combined.init(x)?;
    let mut prefix = Vec::new();
    visit(&prefix, 0.0, false);
    #[allow(clippy::too_many_arguments)]
    fn rec(
        combined: &CombinedScorer,
        eos: usize,
        max_length: usize,
        prefix: &mut Vec<usize>,
        score: f64,
        state: &CombinedState,
        scores: &[f64],
        visit: &mut dyn FnMut(&[usize], f64, bool),
    ) -> Result<()> {
        prefix.push(eos);
        visit(prefix, score + scores[eos], true);
        prefix.pop();
        if prefix.len() == max_length {
            return Ok(());
        }
        for t in (0..scores.len()).filter(|&t| t != eos) {
            let (next, next_scores) = combined.step(state, t)?;
            prefix.push(t);
            visit(prefix, score + scores[t], false);
            rec(combined, eos, max_length, prefix, score + scores[t], &next, &next_scores, visit)?;
            prefix.pop();
        }
        Ok(())
    }
    rec(combined, eos, max_length, &mut prefix, 0.0, &state, &scores, &mut visit)
}

/// Exact log of the summed score of all finished sequences up to `max_length` tokens.
pub fn exact_normalizer(
    combined: &CombinedScorer,
    x: &InputFeatures,
    max_length: usize,
    budget: EnumerationBudget,
) -> Result<LogMass> {
    let mut scores = Vec::new();
    walk(combined, x, max_length, budget, |_, s, fin| {
        if fin {
            scores.push(s);
        }
    })?;
    LogMass::new(compensated_log_sum(&scores))
}

/// The `n` best finished sequences, best first; ties by token order.
pub fn exact_nbest(
    combined: &CombinedScorer,
    x: &InputFeatures,
    max_length: usize,
    n: usize,
    budget: EnumerationBudget,
) -> Result<Vec<(TokenSequence, LogMass)>> {
    let mut all = Vec::new();
    walk(combined, x, max_length, budget, |p, s, fin| {
        if fin {
            all.push((p.to_vec(), s));
        }
    })?;
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(n);
    all.into_iter().map(|(p, s)| Ok((TokenSequence(p), LogMass::new(s)?))).collect()
}

/// Log-sum of the scores of every length-`length` prefix ending in `suffix`.
///
/// The end token may only appear as the last token; a prefix ending in it is
/// a finished sequence.
pub fn exact_prefix_mass(
    combined: &CombinedScorer,
    x: &InputFeatures,
    length: usize,
    suffix: &[usize],
    budget: EnumerationBudget,
) -> Result<LogMass> {
    if suffix.len() > length {
        return Err(Error::InvalidConfig(format!(
            "suffix of {} tokens longer than the prefix length {length}",
            suffix.len()
        )));
    }
    let mut scores = Vec::new();
    walk(combined, x, length, budget, |p, s, _| {
        if p.len() == length && p.ends_with(suffix) {
            scores.push(s);
        }
    })?;
    LogMass::new(compensated_log_sum(&scores))
}

/// Plain beam search without recombination: keep the `beam_size - |finished|`
/// best extensions per step, force the end token after `max_length` tokens.
///
/// Returns the finished sequences in the order they were completed.
pub fn reference_beam_search(
    combined: &CombinedScorer,
    x: &InputFeatures,
    beam_size: usize,
    max_length: usize,
) -> Result<Vec<(TokenSequence, LogMass)>> {
    let eos = combined.eos_id();
    let (state, scores) = combined.init(x)?;
    let mut beam: Vec<(Vec<usize>, f64, CombinedState, Vec<f64>)> = vec![(Vec::new(), 0.0, state, scores)];
    let mut finished: Vec<(Vec<usize>, f64)> = Vec::new();
    while !beam.is_empty() {
        let mut cands: Vec<(Vec<usize>, f64, usize, usize)> = Vec::new();
        for (i, (p, m, _, s)) in beam.iter().enumerate() {
            for (t, &v) in s.iter().enumerate() {
                if p.len() >= max_length && t != eos {
                    continue;
                }
                let mut q = p.clone();
                q.push(t);
                cands.push((q, m + v, i, t));
            }
        }
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        cands.truncate(beam_size.saturating_sub(finished.len()));
        let mut next = Vec::new();
        for (q, m, i, t) in cands {
            if t == eos {
                finished.push((q, m));
            } else {
                let (st, sc) = combined.step(&beam[i].2, t)?;
                next.push((q, m, st, sc));
            }
        }
        beam = next;
    }
    finished.into_iter().map(|(p, m)| Ok((TokenSequence(p), LogMass::new(m)?))).collect()
}

/// Rebuilds the set of complete sequences a search lattice should encode
/// from the recorded merge events alone.
///
/// Every survivor stands for its own history and for those of the
/// hypotheses it absorbed, each extended from the set of its parent.
pub fn replay_merge_paths(result: &SearchResult, limit: usize) -> Result<BTreeSet<Vec<usize>>> {
    let mut absorbed: HashMap<&[usize], Vec<&[usize]>> = HashMap::new();
    for m in &result.merges {
        let entry = absorbed.entry(m.survivor.as_slice()).or_default();
        entry.extend(m.removed.iter().map(Vec::as_slice));
    }
    let mut memo: HashMap<Vec<usize>, BTreeSet<Vec<usize>>> = HashMap::new();

    fn paths(
        rep: &[usize],
        absorbed: &HashMap<&[usize], Vec<&[usize]>>,
        memo: &mut HashMap<Vec<usize>, BTreeSet<Vec<usize>>>,
        limit: usize,
    ) -> Result<BTreeSet<Vec<usize>>> {
        if rep.is_empty() {
            return Ok(BTreeSet::from([Vec::new()]));
        }
        if let Some(s) = memo.get(rep) {
            return Ok(s.clone());
        }
        let mut members: Vec<&[usize]> = vec![rep];
        if let Some(others) = absorbed.get(rep) {
            members.extend(others.iter().copied());
        }
        let mut out = BTreeSet::new();
        for m in members {
            let (parent, last) = m.split_at(m.len() - 1);
            for mut p in paths(parent, absorbed, memo, limit)? {
                p.push(last[0]);
                out.insert(p);
                if out.len() > limit {
                    return Err(Error::EnumerationLimit { count: format!("more than {limit}"), limit });
                }
            }
        }
        memo.insert(rep.to_vec(), out.clone());
        Ok(out)
    }

    let mut all = BTreeSet::new();
    for f in &result.finished {
        let ids = f.tokens.ids();
        let (parent, last) = ids.split_at(ids.len() - 1);
        for mut p in paths(parent, &absorbed, &mut memo, limit)? {
            p.push(last[0]);
            all.insert(p);
        }
        if all.len() > limit {
            return Err(Error::EnumerationLimit { count: format!("more than {limit}"), limit });
        }
    }
    Ok(all)
}
