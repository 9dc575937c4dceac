use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::logmath::{log_add_raw, LogMass};
use crate::models::{CombinedScorer, InputFeatures};
use crate::oracle::compensated_log_sum;
use crate::search::{search, SearchConfig};
use crate::sequence::TokenSequence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub x: InputFeatures,
    pub target: TokenSequence,
}

impl TrainingExample {
    pub fn new(x: InputFeatures, target: TokenSequence, eos: usize) -> Result<Self> {
        if !target.is_finished(eos) {
            return Err(Error::UnfinishedSequence);
        }
        Ok(TrainingExample { x, target })
    }
}

/// `F = numerator - denominator` for one example.
#[derive(Clone, Debug, PartialEq)]
pub struct CriterionResult {
    pub f: f64,
    pub numerator: LogMass,
    pub denominator: LogMass,
    /// Gradient of `F` over the acoustic model's parameters; empty if not requested.
    pub gradient: Vec<f64>,
    /// Whether the search lattice contains the ground truth as a path.
    pub target_in_lattice: bool,
    pub num_recombinations: usize,
}

/// Denominator over the lattice paths, optionally leaving out one path.
///
/// Walks the product of the lattice with a two-state "still on the excluded
/// path" tracker, so the excluded mass never has to be subtracted.
fn path_posteriors(lattice: &Lattice, exclude: Option<&[usize]>) -> Result<(f64, Vec<f64>)> {
    let n = lattice.nodes().len();
    let arcs = lattice.arcs();
    let excluded = exclude.unwrap_or(&[]);
    let on = |i: usize| n + i;
    let mut track_node = vec![lattice.root()];
    for &a in excluded {
        track_node.push(arcs[a].to);
    }
    let n_on = if exclude.is_some() { excluded.len() + 1 } else { 0 };

    // (from, to, arc)
    let mut product: Vec<(usize, usize, usize)> = arcs.iter().enumerate().map(|(i, a)| (a.from, a.to, i)).collect();
    let out = lattice.out_arcs();
    for (i, &u) in track_node.iter().enumerate().take(excluded.len()) {
        for &a in &out[u] {
            let to = if a == excluded[i] { on(i + 1) } else { arcs[a].to };
            product.push((on(i), to, a));
        }
    }
    let step = |p: usize| if p < n { lattice.nodes()[p].step } else { p - n };
    product.sort_by_key(|&(from, _, _)| step(from));

    let start = if exclude.is_some() { on(0) } else { lattice.root() };
    let mut alpha = vec![f64::NEG_INFINITY; n + n_on];
    alpha[start] = 0.0;
    for &(from, to, a) in &product {
        if alpha[from] > f64::NEG_INFINITY {
            alpha[to] = log_add_raw(alpha[to], alpha[from] + arcs[a].score);
        }
    }
    let mut beta = vec![f64::NEG_INFINITY; n + n_on];
    for f in lattice.final_nodes() {
        beta[f] = 0.0;
    }
    for &(from, to, a) in product.iter().rev() {
        if beta[to] > f64::NEG_INFINITY {
            beta[from] = log_add_raw(beta[from], arcs[a].score + beta[to]);
        }
    }
    let z = beta[start];
    let mut gamma = vec![0.0; arcs.len()];
    if z > f64::NEG_INFINITY {
        for &(from, to, a) in &product {
            let l = alpha[from] + arcs[a].score + beta[to] - z;
            if l > f64::NEG_INFINITY {
                gamma[a] += l.exp();
            }
        }
    }
    Ok((z, gamma))
}

fn check_example(combined: &CombinedScorer, example: &TrainingExample) -> Result<()> {
    let v = combined.vocab_size();
    if let Some(&t) = example.target.ids().iter().find(|&&t| t >= v) {
        return Err(Error::InvalidToken { token: t, size: v });
    }
    if !example.target.is_finished(combined.eos_id()) {
        return Err(Error::UnfinishedSequence);
    }
    Ok(())
}

fn evaluate(
    combined: &CombinedScorer,
    example: &TrainingExample,
    config: &SearchConfig,
    include_gt: bool,
    with_gradient: bool,
) -> Result<CriterionResult> {
    check_example(combined, example)?;
    let result = search(combined, &example.x, config)?;
    let lattice = &result.lattice;
    let numerator = combined.score_sequence(&example.x, &example.target)?.value();
    let gt_path = lattice.find_path(example.target.ids());

    // With the ground truth included, its own (exact) score stands in for
    // whatever score the lattice gave that path.
    let (log_rest, gamma) = path_posteriors(lattice, if include_gt { gt_path.as_deref() } else { None })?;
    let denominator = if include_gt { log_add_raw(log_rest, numerator) } else { log_rest };
    let f = numerator - denominator;

    let mut gradient = Vec::new();
    if with_gradient {
        // dF = w * (d numerator - sum_a gamma_a d s_a), w = P(rest) with the
        // ground truth included, 1 otherwise.
        let w = if include_gt { (log_rest - denominator).exp() } else { 1.0 };
        let v = combined.vocab_size();
        let mut by_prefix: BTreeMap<Vec<usize>, Vec<f64>> = BTreeMap::new();
        if w != 0.0 {
            let ids = example.target.ids();
            for i in 0..ids.len() {
                by_prefix.entry(ids[..i].to_vec()).or_insert_with(|| vec![0.0; v])[ids[i]] += w;
            }
            let reps = lattice.representative_prefixes()?;
            for (a, arc) in lattice.arcs().iter().enumerate() {
                if gamma[a] != 0.0 {
                    by_prefix.entry(reps[arc.from].clone()).or_insert_with(|| vec![0.0; v])[arc.token] -= w * gamma[a];
                }
            }
        }
        gradient = vec![0.0; combined.am.param_count()];
        for (prefix, g) in &by_prefix {
            combined.accumulate_am_gradient(&example.x, prefix, g, &mut gradient)?;
        }
    }
    Ok(CriterionResult {
        f,
        numerator: LogMass::new(numerator)?,
        denominator: LogMass::new(denominator)?,
        gradient,
        target_in_lattice: gt_path.is_some(),
        num_recombinations: result.recombination_count,
    })
}

/// `F` with the search lattice as the denominator. With `include_gt` the
/// ground truth's exact score always enters the denominator exactly once.
pub fn compute_criterion(
    combined: &CombinedScorer,
    example: &TrainingExample,
    config: &SearchConfig,
    include_gt: bool,
) -> Result<CriterionResult> {
    evaluate(combined, example, config, include_gt, false)
}

/// [`compute_criterion`] plus the gradient over the acoustic model's
/// parameters, with the lattice structure held fixed.
pub fn criterion_gradient(
    combined: &CombinedScorer,
    example: &TrainingExample,
    config: &SearchConfig,
    include_gt: bool,
) -> Result<CriterionResult> {
    evaluate(combined, example, config, include_gt, true)
}

/// `F` of an already searched lattice, rescored with `combined` and summed by
/// explicit path enumeration.
pub fn rescored_criterion(
    combined: &CombinedScorer,
    example: &TrainingExample,
    lattice: &Lattice,
    include_gt: bool,
    limit: usize,
) -> Result<f64> {
    let reps = lattice.representative_prefixes()?;
    let mut cache: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut arcs = lattice.arcs().to_vec();
    for arc in &mut arcs {
        if let std::collections::btree_map::Entry::Vacant(e) = cache.entry(arc.from) {
            e.insert(combined.prefix_scores(&example.x, &reps[arc.from])?);
        }
        arc.score = cache[&arc.from][arc.token];
    }
    let rescored = Lattice::from_parts(lattice.nodes().to_vec(), arcs, lattice.root())?;
    let numerator = combined.score_sequence(&example.x, &example.target)?.value();
    let mut scores: Vec<f64> = rescored
        .enumerate_paths(limit)?
        .into_iter()
        .filter(|(w, _)| !(include_gt && w == &example.target))
        .map(|(_, s)| s)
        .collect();
    if include_gt {
        scores.push(numerator);
    }
    Ok(numerator - compensated_log_sum(&scores))
}

/// Central finite differences of `F` over every acoustic-model parameter,
/// with the lattice from one search at the unperturbed parameters.
pub fn finite_difference_gradient(
    combined: &CombinedScorer,
    example: &TrainingExample,
    config: &SearchConfig,
    include_gt: bool,
    step: f64,
) -> Result<Vec<f64>> {
    let lattice = search(combined, &example.x, config)?.lattice;
    let limit = 1 << 20;
    let mut probe = combined.clone();
    let mut grad = Vec::with_capacity(combined.am.param_count());
    for i in 0..combined.am.param_count() {
        let orig = probe.am.params()[i];
        probe.am.params_mut()[i] = orig + step;
        let up = rescored_criterion(&probe, example, &lattice, include_gt, limit)?;
        probe.am.params_mut()[i] = orig - step;
        let down = rescored_criterion(&probe, example, &lattice, include_gt, limit)?;
        probe.am.params_mut()[i] = orig;
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

/// `|a - b| / max(|a|, |b|, floor)`, maximized over entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor)).fold(0.0, f64::max)
}
