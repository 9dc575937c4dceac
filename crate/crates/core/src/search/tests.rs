use super::*;
use crate::models::{MemorylessScorer, PrefixTableScorer, Scorer, ScorerSpec};
use proptest::prelude::*;

fn input() -> InputFeatures {
    InputFeatures::new(vec![vec![0.3, -0.2], vec![0.1, 0.4]]).unwrap()
}

fn memoryless(probs: &[f64]) -> CombinedScorer {
    let eos = probs.len() - 1;
    CombinedScorer::am_only(Scorer::Memoryless(MemorylessScorer::new(eos, probs).unwrap()))
}

fn limited(vocab: usize, context: usize, seed: u64) -> CombinedScorer {
    CombinedScorer::am_only(ScorerSpec::limited(vocab, context, 2, seed).build().unwrap())
}

fn recurrent(vocab: usize, seed: u64) -> CombinedScorer {
    CombinedScorer::am_only(ScorerSpec::recurrent(vocab, 2, seed).build().unwrap())
}

fn hyp(combined: &CombinedScorer, prefix: &[usize], mass: f64) -> Hypothesis {
    let (mut st, mut scores) = combined.init(&input()).unwrap();
    for &t in prefix {
        (st, scores) = combined.step(&st, t).unwrap();
    }
    Hypothesis {
        prefix: prefix.to_vec(),
        states: st,
        next_scores: scores,
        path_score: mass,
        mass,
        finished: false,
        node: None,
        pending: Some(PendingArc { from: 0, token: *prefix.last().unwrap_or(&0), score: mass }),
    }
}

fn beam_of(combined: &CombinedScorer, prefixes: &[&[usize]]) -> Beam {
    Beam {
        step: prefixes[0].len() + 1,
        active: prefixes.iter().map(|p| hyp(combined, p, -1.0)).collect(),
        finished: Vec::new(),
    }
}

/// Every sequence with at most `max_len` content tokens, end token appended.
fn all_sequences(vocab: usize, max_len: usize) -> Vec<Vec<usize>> {
    let eos = vocab - 1;
    let mut out = Vec::new();
    let mut frontier = vec![Vec::new()];
    for len in 0..=max_len {
        let mut next = Vec::new();
        for p in &frontier {
            let mut f: Vec<usize> = p.clone();
            f.push(eos);
            out.push(f);
            if len < max_len {
                for t in 0..eos {
                    let mut q = p.clone();
                    q.push(t);
                    next.push(q);
                }
            }
        }
        frontier = next;
    }
    out
}

#[test]
fn history_limit_parses_and_prints() {
    assert_eq!("3".parse::<HistoryLimit>().unwrap(), HistoryLimit::Finite(3));
    assert_eq!("inf".parse::<HistoryLimit>().unwrap(), HistoryLimit::Infinite);
    assert!("0".parse::<HistoryLimit>().is_err());
    assert!("x".parse::<HistoryLimit>().is_err());
    assert_eq!(HistoryLimit::Infinite.to_string(), "inf");
    let json = serde_json::to_string(&SearchConfig::new(2, HistoryLimit::Infinite, 5)).unwrap();
    let back: SearchConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back.history_limit, HistoryLimit::Infinite);
    let finite: SearchConfig = serde_json::from_str(r#"{"beam_size":2,"history_limit":4,"max_length":3}"#).unwrap();
    assert_eq!(finite.history_limit, HistoryLimit::Finite(4));
}

#[test]
fn invalid_configs_are_rejected() {
    let c = memoryless(&[0.5, 0.5]);
    for cfg in [
        SearchConfig::new(0, HistoryLimit::Infinite, 3),
        SearchConfig::new(2, HistoryLimit::Infinite, 0),
        SearchConfig::new(2, HistoryLimit::Finite(0), 3),
    ] {
        assert!(matches!(search(&c, &input(), &cfg), Err(Error::InvalidConfig(_))));
    }
}

#[test]
fn groups_follow_shared_suffixes() {
    let c = memoryless(&[0.2, 0.2, 0.2, 0.2, 0.2]);
    let (a, b, cc) = (0, 1, 2);
    let beam = beam_of(&c, &[&[b, a], &[b, b], &[cc, b]]);
    assert_eq!(recombination_groups(&beam, HistoryLimit::Finite(1)), vec![vec![0], vec![1, 2]]);
    assert_eq!(recombination_groups(&beam, HistoryLimit::Finite(2)), vec![vec![0], vec![1], vec![2]]);
    assert_eq!(recombination_groups(&beam, HistoryLimit::Infinite), vec![vec![0], vec![1], vec![2]]);

    let (x, y) = (3, 1);
    let beam = beam_of(&c, &[&[a, b, cc], &[x, b, cc], &[a, y, cc]]);
    assert_eq!(recombination_groups(&beam, HistoryLimit::Finite(2)), vec![vec![0, 1, 2]]);
    let beam = beam_of(&c, &[&[a, b, cc], &[x, b, cc], &[a, x, cc]]);
    assert_eq!(recombination_groups(&beam, HistoryLimit::Finite(2)), vec![vec![0, 1], vec![2]]);
    assert_eq!(recombination_groups(&beam, HistoryLimit::Finite(1)), vec![vec![0, 1, 2]]);
}

#[test]
fn short_prefixes_are_not_grouped() {
    let c = memoryless(&[0.5, 0.5]);
    let beam = beam_of(&c, &[&[0], &[0]]);
    assert_eq!(recombination_groups(&beam, HistoryLimit::Finite(2)), vec![vec![0], vec![1]]);
}

#[test]
fn recombination_sums_mass_and_keeps_the_best() {
    let c = memoryless(&[0.3, 0.3, 0.4]);
    let mut dec = Decoder::new(&c, SearchConfig::new(4, HistoryLimit::Finite(1), 3)).unwrap();
    let weak = hyp(&c, &[0, 1], 0.1f64.ln());
    let strong = hyp(&c, &[1, 1], 0.3f64.ln());
    let merged = dec.recombine(vec![weak, strong]);
    assert_eq!(merged.prefix, vec![1, 1]);
    assert!((merged.mass - 0.4f64.ln()).abs() < 1e-15);
    assert!((merged.path_score - 0.3f64.ln()).abs() < 1e-15);
    assert_eq!(dec.recombination_count(), 1);
    assert_eq!(dec.distance_samples(), &[0.0]);
    let node = merged.node.unwrap();
    let incoming: Vec<_> = dec.lattice().arcs().iter().filter(|a| a.to == node).collect();
    assert_eq!(incoming.len(), 2);
    assert_eq!(incoming.iter().filter(|a| a.merged).count(), 1);
}

#[test]
fn singleton_recombination_is_a_no_op_on_mass() {
    let c = memoryless(&[0.3, 0.3, 0.4]);
    let mut dec = Decoder::new(&c, SearchConfig::new(4, HistoryLimit::Finite(1), 3)).unwrap();
    let h = dec.recombine(vec![hyp(&c, &[0], -0.7)]);
    assert_eq!(h.mass, -0.7);
    assert_eq!(dec.recombination_count(), 0);
    assert!(dec.distance_samples().is_empty());
    assert_eq!(dec.lattice().nodes().len(), 2);
}

#[test]
fn ties_go_to_the_lexicographically_smaller_prefix() {
    let c = memoryless(&[0.3, 0.3, 0.4]);
    let mut dec = Decoder::new(&c, SearchConfig::new(4, HistoryLimit::Finite(1), 3)).unwrap();
    let merged = dec.recombine(vec![hyp(&c, &[1, 0], -1.0), hyp(&c, &[0, 0], -1.0)]);
    assert_eq!(merged.prefix, vec![0, 0]);
    assert!((merged.mass - (-1.0 + 2f64.ln())).abs() < 1e-15);
}

#[test]
fn distance_samples_measure_the_displaced_context() {
    let table = PrefixTableScorer::new(2, &[0.4, 0.4, 0.2])
        .unwrap()
        .with_entry(vec![0, 1], &[0.5, 0.3, 0.2])
        .unwrap()
        .with_entry(vec![1, 1], &[0.1, 0.7, 0.2])
        .unwrap();
    let c = CombinedScorer::am_only(Scorer::PrefixTable(table));
    let mut dec = Decoder::new(&c, SearchConfig::new(4, HistoryLimit::Finite(1), 3)).unwrap();
    dec.recombine(vec![hyp(&c, &[0, 1], -1.0), hyp(&c, &[1, 1], -2.0)]);
    let expected = 0.4f64.powi(2) * 2.0;
    assert!((dec.distance_samples()[0] - expected).abs() < 1e-12);
}

#[test]
fn greedy_search_follows_the_argmax() {
    let c = recurrent(4, 11);
    let x = input();
    let result = search(&c, &x, &SearchConfig::new(1, HistoryLimit::Infinite, 6)).unwrap();
    let mut prefix = Vec::new();
    loop {
        let s = c.prefix_scores(&x, &prefix).unwrap();
        let allowed = if prefix.len() == 6 { vec![3] } else { (0..4).collect() };
        let t = allowed.into_iter().max_by(|&a, &b| s[a].total_cmp(&s[b]).then(b.cmp(&a))).unwrap();
        prefix.push(t);
        if t == 3 {
            break;
        }
    }
    assert_eq!(result.finished.len(), 1);
    assert_eq!(result.finished[0].tokens.0, prefix);
}

#[test]
fn exhaustive_beam_finds_every_sequence() {
    let c = recurrent(4, 5);
    let x = input();
    let max_len = 4;
    let all = all_sequences(4, max_len);
    let result = search(&c, &x, &SearchConfig::new(all.len(), HistoryLimit::Infinite, max_len)).unwrap();
    assert_eq!(result.finished.len(), all.len());
    assert_eq!(result.recombination_count, 0);
    for f in &result.finished {
        let exact = c.score_sequence(&x, &f.tokens).unwrap();
        assert!((f.mass.value() - exact.value()).abs() < 1e-12);
    }
    let exact: Vec<f64> = all.into_iter().map(|w| c.score_sequence(&x, &TokenSequence(w)).unwrap().value()).collect();
    assert!((result.total_mass.value() - log_sum_raw(&exact)).abs() < 1e-12);
}

#[test]
fn small_beam_ranks_like_brute_force() {
    // With b = 2 and no recombination, the two survivors after each step are
    // the two best extensions of the previous survivors.
    let c = recurrent(3, 2);
    let x = input();
    let result = search(&c, &x, &SearchConfig::new(2, HistoryLimit::Infinite, 3)).unwrap();
    let mut beam: Vec<(Vec<usize>, f64)> = vec![(Vec::new(), 0.0)];
    let mut finished: Vec<(Vec<usize>, f64)> = Vec::new();
    while !beam.is_empty() {
        let mut cands = Vec::new();
        for (p, m) in &beam {
            let s = c.prefix_scores(&x, p).unwrap();
            for t in 0..3 {
                if p.len() == 3 && t != 2 {
                    continue;
                }
                let mut q = p.clone();
                q.push(t);
                cands.push((q, m + s[t]));
            }
        }
        cands.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        cands.truncate(2 - finished.len());
        beam.clear();
        for (q, m) in cands {
            if *q.last().unwrap() == 2 {
                finished.push((q, m));
            } else {
                beam.push((q, m));
            }
        }
    }
    let got: Vec<(Vec<usize>, f64)> = result.finished.iter().map(|f| (f.tokens.0.clone(), f.mass.value())).collect();
    assert_eq!(got, finished);
}

#[test]
fn without_recombination_the_lattice_is_a_tree() {
    let c = recurrent(5, 3);
    let result = search(&c, &input(), &SearchConfig::new(8, HistoryLimit::Infinite, 6)).unwrap();
    assert!(result.finished.len() <= 8);
    assert_eq!(result.recombination_count, 0);
    assert!(result.distance_samples.is_empty());
    assert_eq!(result.lattice.count_paths().unwrap(), result.finished.len().into());
    assert!(result.lattice.arcs().iter().all(|a| !a.merged));
}

#[test]
fn finished_in_beam_mode_caps_the_final_count() {
    let c = recurrent(4, 9);
    let mut cfg = SearchConfig::new(3, HistoryLimit::Infinite, 5);
    cfg.finished_in_beam = true;
    let result = search(&c, &input(), &cfg).unwrap();
    assert!(result.finished.len() <= 3);
    assert_eq!(result.lattice.final_nodes().count(), result.finished.len());
}

#[test]
fn forced_end_respects_max_length() {
    let c = memoryless(&[0.45, 0.45, 0.1]);
    let result = search(&c, &input(), &SearchConfig::new(3, HistoryLimit::Finite(1), 2)).unwrap();
    for f in &result.finished {
        assert!(f.tokens.len() <= 3);
    }
    for (s, _) in result.lattice.enumerate_paths(1000).unwrap() {
        assert!(s.len() <= 3 && *s.0.last().unwrap() == 2);
    }
}

#[test]
fn k_at_context_length_matches_unmerged_search() {
    // For an exhaustive beam the recombined lattice keeps the full mass.
    let c = limited(4, 2, 17);
    let x = input();
    let max_len = 4;
    let width = all_sequences(4, max_len).len();
    let full = search(&c, &x, &SearchConfig::new(width, HistoryLimit::Infinite, max_len)).unwrap();
    let merged = search(&c, &x, &SearchConfig::new(width, HistoryLimit::Finite(2), max_len)).unwrap();
    assert!(merged.recombination_count > 0);
    assert!((merged.lattice.total_mass().unwrap() - full.total_mass.value()).abs() < 1e-12);
    assert_eq!(merged.lattice.count_paths().unwrap(), full.finished.len().into());
    assert!(merged.distance_samples.iter().all(|&d| d == 0.0));
}

#[test]
fn search_is_deterministic() {
    let c = recurrent(5, 21);
    let cfg = SearchConfig::new(4, HistoryLimit::Finite(1), 6);
    let a = search(&c, &input(), &cfg).unwrap();
    let b = search(&c, &input(), &cfg).unwrap();
    assert_eq!(a.lattice, b.lattice);
    assert_eq!(a.distance_samples, b.distance_samples);
    assert_eq!(a.merges, b.merges);
}

fn check_invariants(result: &SearchResult, b: usize, k: HistoryLimit) -> std::result::Result<(), TestCaseError> {
    let l = &result.lattice;
    l.validate().map_err(|e| TestCaseError::fail(e.to_string()))?;
    let alpha = l.forward().unwrap();
    for n in l.nodes() {
        if alpha[n.id] > f64::NEG_INFINITY || n.mass > f64::NEG_INFINITY {
            prop_assert!((alpha[n.id] - n.mass).abs() < 1e-9, "node {} forward {} mass {}", n.id, alpha[n.id], n.mass);
        }
    }
    prop_assert!((l.total_mass().unwrap() - result.total_mass.value()).abs() < 1e-9);
    prop_assert_eq!(result.distance_samples.len(), result.recombination_count);
    let out = l.out_arcs();
    for arcs in &out {
        let mut tokens: Vec<usize> = arcs.iter().map(|&a| l.arcs()[a].token).collect();
        let n = tokens.len();
        tokens.sort();
        tokens.dedup();
        prop_assert_eq!(tokens.len(), n);
    }
    if k == HistoryLimit::Infinite {
        prop_assert!(result.finished.len() <= b);
        prop_assert_eq!(result.recombination_count, 0);
    }
    prop_assert!(l.count_paths().unwrap() >= result.finished.len().into());
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lattice_invariants_hold(
        seed in 0u64..1000,
        b in 1usize..6,
        k in prop_oneof![Just(HistoryLimit::Infinite), (1usize..4).prop_map(HistoryLimit::Finite)],
        rec in any::<bool>(),
    ) {
        let c = if rec { recurrent(4, seed) } else { limited(4, 2, seed) };
        let result = search(&c, &input(), &SearchConfig::new(b, k, 5)).unwrap();
        check_invariants(&result, b, k)?;
    }
}
