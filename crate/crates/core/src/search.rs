//! Label-synchronous beam search with approximative recombination.
//!
//! Before every expansion the active hypotheses are grouped by their last `k`
//! tokens. In each group the hypothesis with the largest mass survives and
//! takes over the summed mass of the whole group; the others are dropped and
//! their incoming lattice arcs are redirected into the survivor's node. The
//! survivor's model state stands in for the removed histories from then on,
//! which is exact only when the model's context is at most `k` tokens.
//!
//! Ranking, survivor selection and pruning all use the aggregated mass. Ties
//! are broken by the lexicographic order of the token-id sequences.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{assemble_stats, Lattice, LatticeStats, NodeId};
use crate::logmath::{log_sum_raw, LogMass};
use crate::models::{
    distribution_distance, normalized_log, CombinedScorer, CombinedState, DistanceKind, InputFeatures,
};
use crate::sequence::TokenSequence;

/// Minimum shared history for recombination; `Infinite` disables it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HistoryLimit {
    Finite(usize),
    Infinite,
}

impl fmt::Display for HistoryLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HistoryLimit::Finite(k) => write!(f, "{k}"),
            HistoryLimit::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for HistoryLimit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinite" | "∞" => Ok(HistoryLimit::Infinite),
            other => match other.parse::<usize>() {
                Ok(k) if k >= 1 => Ok(HistoryLimit::Finite(k)),
                _ => {
                    Err(Error::InvalidConfig(format!("history limit must be a positive integer or \"inf\", got {s:?}")))
                }
            },
        }
    }
}

impl Serialize for HistoryLimit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            HistoryLimit::Finite(k) => s.serialize_u64(*k as u64),
            HistoryLimit::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for HistoryLimit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(k) if k >= 1 => Ok(HistoryLimit::Finite(k as usize)),
            Raw::Int(k) => Err(serde::de::Error::custom(format!("history limit must be >= 1, got {k}"))),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    pub beam_size: usize,
    pub history_limit: HistoryLimit,
    /// Maximum number of tokens before the end token is forced.
    pub max_length: usize,
    /// Keep finished hypotheses in the ranking pool, where later candidates
    /// can push them out. By default a finished hypothesis leaves the pool
    /// and permanently takes one of the `beam_size` slots.
    #[serde(default)]
    pub finished_in_beam: bool,
    #[serde(default)]
    pub distance: DistanceKind,
}

impl SearchConfig {
    pub fn new(beam_size: usize, history_limit: HistoryLimit, max_length: usize) -> Self {
        SearchConfig { beam_size, history_limit, max_length, finished_in_beam: false, distance: DistanceKind::Squared }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::InvalidConfig("beam_size must be at least 1".into()));
        }
        if self.max_length == 0 {
            return Err(Error::InvalidConfig("max_length must be at least 1".into()));
        }
        if self.history_limit == HistoryLimit::Finite(0) {
            return Err(Error::InvalidConfig("history_limit must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct PendingArc {
    from: NodeId,
    token: usize,
    score: f64,
}

/// A partial (or finished) sequence in the beam.
#[derive(Clone, Debug)]
pub struct Hypothesis {
    pub prefix: Vec<usize>,
    pub states: CombinedState,
    /// Combined scores of the next token given this hypothesis' context.
    pub next_scores: Vec<f64>,
    /// Score of the surviving path alone.
    pub path_score: f64,
    /// Log mass of every path merged into this hypothesis.
    pub mass: f64,
    pub finished: bool,
    pub node: Option<NodeId>,
    pending: Option<PendingArc>,
}

impl Hypothesis {
    /// A fresh hypothesis not yet attached to a lattice node; the arc from
    /// `parent` is created when it passes through recombination.
    pub fn detached(
        prefix: Vec<usize>,
        states: CombinedState,
        next_scores: Vec<f64>,
        mass: f64,
        parent: NodeId,
        arc_score: f64,
    ) -> Self {
        let token = *prefix.last().expect("detached hypothesis needs a token");
        Hypothesis {
            prefix,
            states,
            next_scores,
            path_score: mass,
            mass,
            finished: false,
            node: None,
            pending: Some(PendingArc { from: parent, token, score: arc_score }),
        }
    }
}

/// Active hypotheses at step `n` (prefix length `n - 1`) plus finished ones.
#[derive(Clone, Debug)]
pub struct Beam {
    pub step: usize,
    pub active: Vec<Hypothesis>,
    pub finished: Vec<Hypothesis>,
}

/// One recombination: the survivor and the histories it absorbed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub step: usize,
    pub survivor: Vec<usize>,
    pub removed: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FinishedHypothesis {
    pub tokens: TokenSequence,
    pub mass: LogMass,
    pub path_score: LogMass,
    pub node: NodeId,
}

#[derive(Clone, Debug)]
pub struct SearchResult {
    pub lattice: Lattice,
    pub finished: Vec<FinishedHypothesis>,
    pub total_mass: LogMass,
    pub recombination_count: usize,
    pub distance_samples: Vec<f64>,
    pub merges: Vec<MergeEvent>,
}

impl SearchResult {
    pub fn stats(&self) -> Result<LatticeStats> {
        assemble_stats(&self.lattice, self.recombination_count, &self.distance_samples)
    }

    /// Finished hypothesis with the highest surviving-path score.
    pub fn best(&self) -> Option<&FinishedHypothesis> {
        self.finished.iter().min_by(|a, b| b.path_score.cmp(&a.path_score).then_with(|| a.tokens.cmp(&b.tokens)))
    }
}

fn suffix(prefix: &[usize], k: HistoryLimit) -> &[usize] {
    match k {
        HistoryLimit::Finite(k) if prefix.len() > k => &prefix[prefix.len() - k..],
        _ => prefix,
    }
}

/// Partitions the active hypotheses (by index) into recombination groups.
///
/// Hypotheses share a group iff their prefixes are at least `k` long and end
/// in the same `k` tokens. Groups are ordered by their first member.
pub fn recombination_groups(beam: &Beam, k: HistoryLimit) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut by_key: HashMap<&[usize], usize> = HashMap::new();
    for (i, h) in beam.active.iter().enumerate() {
        let mergeable = matches!(k, HistoryLimit::Finite(k) if h.prefix.len() >= k);
        if !mergeable {
            groups.push(vec![i]);
            continue;
        }
        match by_key.get(suffix(&h.prefix, k)) {
            Some(&g) => groups[g].push(i),
            None => {
                by_key.insert(suffix(&h.prefix, k), groups.len());
                groups.push(vec![i]);
            }
        }
    }
    groups
}

fn rank(a_score: f64, a_key: &[usize], b_score: f64, b_key: &[usize]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a_key.cmp(b_key))
}

enum Source {
    Active(usize, usize),
    Finished(usize),
}

struct Candidate {
    source: Source,
    score: f64,
    key: Vec<usize>,
}

/// Search driver holding the lattice under construction and the statistics.
pub struct Decoder<'a> {
    combined: &'a CombinedScorer,
    config: SearchConfig,
    lattice: Lattice,
    recombination_count: usize,
    distance_samples: Vec<f64>,
    merges: Vec<MergeEvent>,
}

impl<'a> Decoder<'a> {
    pub fn new(combined: &'a CombinedScorer, config: SearchConfig) -> Result<Self> {
        config.validate()?;
        Ok(Decoder {
            combined,
            config,
            lattice: Lattice::with_root(),
            recombination_count: 0,
            distance_samples: Vec::new(),
            merges: Vec::new(),
        })
    }

    /// Beam at step 1 holding the empty prefix at the lattice root.
    pub fn initial_beam(&self, x: &InputFeatures) -> Result<Beam> {
        let (states, next_scores) = self.combined.init(x)?;
        let root = Hypothesis {
            prefix: Vec::new(),
            states,
            next_scores,
            path_score: 0.0,
            mass: 0.0,
            finished: false,
            node: Some(self.lattice.root()),
            pending: None,
        };
        Ok(Beam { step: 1, active: vec![root], finished: Vec::new() })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn recombination_count(&self) -> usize {
        self.recombination_count
    }

    pub fn distance_samples(&self) -> &[f64] {
        &self.distance_samples
    }

    /// Merges a group into its best member and attaches it to the lattice.
    pub fn recombine(&mut self, mut group: Vec<Hypothesis>) -> Hypothesis {
        assert!(!group.is_empty(), "recombination group must not be empty");
        let best = (0..group.len())
            .min_by(|&a, &b| rank(group[a].mass, &group[a].prefix, group[b].mass, &group[b].prefix))
            .expect("non-empty");
        let masses: Vec<f64> = group.iter().map(|h| h.mass).collect();
        let mut survivor = group.remove(best);
        if group.is_empty() && survivor.node.is_some() {
            return survivor;
        }
        let total = if group.is_empty() { survivor.mass } else { log_sum_raw(&masses) };
        let k_suffix = suffix(&survivor.prefix, self.config.history_limit).to_vec();
        let node = self.lattice.push_node(survivor.prefix.len(), k_suffix, total, false);
        if let Some(p) = survivor.pending.take() {
            self.lattice.push_arc(p.from, node, p.token, p.score, false, None);
        }
        if !group.is_empty() {
            let best_dist = normalized_log(&survivor.next_scores);
            let mut removed = Vec::with_capacity(group.len());
            for other in group {
                let d = distribution_distance(&best_dist, &normalized_log(&other.next_scores), self.config.distance)
                    .expect("same vocabulary");
                self.distance_samples.push(d);
                if let Some(p) = other.pending {
                    self.lattice.push_arc(p.from, node, p.token, p.score, true, Some(d));
                }
                removed.push(other.prefix);
            }
            self.recombination_count += removed.len();
            self.merges.push(MergeEvent {
                step: survivor.prefix.len() + 1,
                survivor: survivor.prefix.clone(),
                removed,
            });
        }
        survivor.mass = total;
        survivor.node = Some(node);
        survivor
    }

    /// Scores every (hypothesis, token) extension and keeps the best ones.
    pub fn expand_and_prune(&mut self, beam: Beam) -> Result<Beam> {
        let eos = self.combined.eos_id();
        let forced = beam.step > self.config.max_length;
        let capacity = if self.config.finished_in_beam {
            self.config.beam_size
        } else {
            self.config.beam_size.saturating_sub(beam.finished.len())
        };

        if beam.active.iter().any(|h| h.node.is_none()) {
            return Err(Error::InvalidConfig("hypothesis expanded before recombination".into()));
        }
        let mut candidates = Vec::new();
        for (i, h) in beam.active.iter().enumerate() {
            for (t, &s) in h.next_scores.iter().enumerate() {
                if forced && t != eos {
                    continue;
                }
                let mut key = h.prefix.clone();
                key.push(t);
                candidates.push(Candidate { source: Source::Active(i, t), score: h.mass + s, key });
            }
        }
        if self.config.finished_in_beam {
            for (j, f) in beam.finished.iter().enumerate() {
                candidates.push(Candidate { source: Source::Finished(j), score: f.mass, key: f.prefix.clone() });
            }
        }
        candidates.sort_by(|a, b| rank(a.score, &a.key, b.score, &b.key));
        candidates.truncate(capacity);

        let mut active = Vec::new();
        let mut finished = if self.config.finished_in_beam { Vec::new() } else { beam.finished.clone() };
        let mut kept_finished = vec![false; beam.finished.len()];
        for c in candidates {
            match c.source {
                Source::Finished(j) => {
                    kept_finished[j] = true;
                    finished.push(beam.finished[j].clone());
                }
                Source::Active(i, t) => {
                    let parent = &beam.active[i];
                    let from = parent.node.expect("checked above");
                    let arc = parent.next_scores[t];
                    if t == eos {
                        let final_suffix = suffix(&c.key, self.config.history_limit).to_vec();
                        let node = self.lattice.push_node(c.key.len(), final_suffix, c.score, true);
                        self.lattice.push_arc(from, node, t, arc, false, None);
                        finished.push(Hypothesis {
                            prefix: c.key,
                            states: parent.states.clone(),
                            next_scores: Vec::new(),
                            path_score: parent.path_score + arc,
                            mass: c.score,
                            finished: true,
                            node: Some(node),
                            pending: None,
                        });
                    } else {
                        let (states, next_scores) = self.combined.step(&parent.states, t)?;
                        active.push(Hypothesis {
                            prefix: c.key,
                            states,
                            next_scores,
                            path_score: parent.path_score + arc,
                            mass: c.score,
                            finished: false,
                            node: None,
                            pending: Some(PendingArc { from, token: t, score: arc }),
                        });
                    }
                }
            }
        }
        if self.config.finished_in_beam {
            for (j, f) in beam.finished.iter().enumerate() {
                if !kept_finished[j] {
                    if let Some(n) = f.node {
                        self.lattice.set_final(n, false);
                    }
                }
            }
        }
        Ok(Beam { step: beam.step + 1, active, finished })
    }

    /// Groups, merges, expands and prunes until no hypothesis is active.
    pub fn run(mut self, x: &InputFeatures) -> Result<SearchResult> {
        let mut beam = self.initial_beam(x)?;
        loop {
            let groups = recombination_groups(&beam, self.config.history_limit);
            let mut slots: Vec<Option<Hypothesis>> = beam.active.into_iter().map(Some).collect();
            beam.active = groups
                .into_iter()
                .map(|g| {
                    let members = g.into_iter().map(|i| slots[i].take().expect("each index once")).collect();
                    self.recombine(members)
                })
                .collect();
            if beam.active.is_empty() {
                break;
            }
            beam = self.expand_and_prune(beam)?;
        }
        let finished: Vec<FinishedHypothesis> = beam
            .finished
            .into_iter()
            .map(|h| {
                Ok(FinishedHypothesis {
                    tokens: TokenSequence(h.prefix),
                    mass: LogMass::new(h.mass)?,
                    path_score: LogMass::new(h.path_score)?,
                    node: h.node.expect("finished hypotheses own a final node"),
                })
            })
            .collect::<Result<_>>()?;
        let masses: Vec<f64> = finished.iter().map(|f| f.mass.value()).collect();
        Ok(SearchResult {
            lattice: self.lattice,
            total_mass: LogMass::new(log_sum_raw(&masses))?,
            finished,
            recombination_count: self.recombination_count,
            distance_samples: self.distance_samples,
            merges: self.merges,
        })
    }
}

/// Runs a full search for one input.
pub fn search(combined: &CombinedScorer, x: &InputFeatures, config: &SearchConfig) -> Result<SearchResult> {
    Decoder::new(combined, config.clone())?.run(x)
}

#[cfg(test)]
mod tests;
