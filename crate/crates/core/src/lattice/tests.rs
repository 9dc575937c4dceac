use super::*;
use proptest::prelude::*;

fn chain(tokens: &[usize], score: f64) -> Lattice {
    let mut l = Lattice::with_root();
    let mut u = l.root();
    for (i, &t) in tokens.iter().enumerate() {
        let last = i + 1 == tokens.len();
        let v = l.push_node(i + 1, vec![t], 0.0, last);
        l.push_arc(u, v, t, score, false, None);
        u = v;
    }
    l
}

/// Two layers of two parallel arcs each, then an end arc.
fn layered() -> Lattice {
    let mut l = Lattice::with_root();
    let a = l.push_node(1, vec![0], 0.0, false);
    l.push_arc(0, a, 0, (0.5f64).ln(), false, None);
    l.push_arc(0, a, 1, (0.5f64).ln(), true, Some(0.0));
    let b = l.push_node(2, vec![0], 0.0, false);
    l.push_arc(a, b, 0, (0.25f64).ln(), false, None);
    l.push_arc(a, b, 1, (0.75f64).ln(), true, Some(0.125));
    let f = l.push_node(3, vec![2], 0.0, true);
    l.push_arc(b, f, 2, 0.0, false, None);
    l
}

/// Hand-built merge structure with 8 complete sequences over A..D (ids 0..3, end 4).
fn eight_paths() -> Lattice {
    let (a, b, c, d, eos) = (0, 1, 2, 3, 4);
    let mut l = Lattice::with_root();
    let nb = l.push_node(1, vec![b], 0.0, false);
    let nc = l.push_node(1, vec![c], 0.0, false);
    l.push_arc(0, nb, b, -1.0, false, None);
    l.push_arc(0, nc, c, -1.5, false, None);
    let nba = l.push_node(2, vec![a], 0.0, false);
    let nbb = l.push_node(2, vec![b], 0.0, false);
    l.push_arc(nb, nba, a, -0.5, false, None);
    l.push_arc(nb, nbb, b, -0.7, false, None);
    l.push_arc(nc, nbb, b, -0.4, true, Some(0.1));
    let nbaa = l.push_node(3, vec![a], 0.0, false);
    let nbbd = l.push_node(3, vec![d], 0.0, false);
    l.push_arc(nba, nbaa, a, -0.6, false, None);
    l.push_arc(nbb, nbbd, d, -0.8, false, None);
    l.push_arc(nba, nbbd, d, -1.1, true, Some(0.2));
    let leaves = [(nbaa, a), (nbaa, b), (nbbd, c), (nbbd, d)];
    for (i, &(from, t)) in leaves.iter().enumerate() {
        let n = l.push_node(4, vec![t], 0.0, false);
        l.push_arc(from, n, t, -0.3 - i as f64 * 0.1, false, None);
        let f = l.push_node(5, vec![eos], 0.0, true);
        l.push_arc(n, f, eos, -0.05, false, None);
    }
    l
}

#[test]
fn chain_has_one_path() {
    let l = chain(&[0, 1, 2], -0.5);
    assert_eq!(l.count_paths().unwrap(), BigUint::from(1u32));
    assert!((l.total_mass().unwrap() - (-1.5)).abs() < 1e-15);
}

#[test]
fn single_arc_lattice() {
    let l = chain(&[3], -0.25);
    assert_eq!(l.count_paths().unwrap(), BigUint::from(1u32));
    assert_eq!(l.enumerate_paths(10).unwrap(), vec![(TokenSequence(vec![3]), -0.25)]);
}

#[test]
fn layered_lattice_has_four_paths() {
    let l = layered();
    assert_eq!(l.count_paths().unwrap(), BigUint::from(4u32));
    assert!(l.total_mass().unwrap().abs() < 1e-15);
    let paths = l.enumerate_paths(4).unwrap();
    assert_eq!(paths.len(), 4);
    assert_eq!(paths[0].0, TokenSequence(vec![0, 0, 2]));
}

#[test]
fn eight_path_structure() {
    let l = eight_paths();
    assert_eq!(l.count_paths().unwrap(), BigUint::from(8u32));
    let spelled: Vec<String> = l
        .enumerate_paths(100)
        .unwrap()
        .into_iter()
        .map(|(s, _)| s.0[..4].iter().map(|&t| (b'A' + t as u8) as char).collect())
        .collect();
    let mut expected = vec!["BAAA", "BAAB", "BADC", "BBDC", "CBDC", "BADD", "BBDD", "CBDD"];
    expected.sort();
    assert_eq!(spelled, expected);
}

#[test]
fn enumeration_limit_is_enforced() {
    let err = eight_paths().enumerate_paths(7).unwrap_err();
    assert!(matches!(err, Error::EnumerationLimit { limit: 7, .. }));
}

#[test]
fn find_path_and_representatives() {
    let l = eight_paths();
    assert!(l.find_path(&[2, 1, 3, 2, 4]).is_some());
    assert!(l.find_path(&[2, 1, 3, 2]).is_none());
    assert!(l.find_path(&[0, 0]).is_none());
    let path = l.find_path(&[2, 1, 3, 3, 4]).unwrap();
    let node = l.arcs()[path[2]].to;
    assert_eq!(l.representative_prefix(node), vec![1, 1, 3]);
    let all = l.representative_prefixes().unwrap();
    for n in 0..l.nodes().len() {
        assert_eq!(all[n], l.representative_prefix(n));
    }
}

#[test]
fn forward_equals_backward_total() {
    let l = eight_paths();
    let alpha = l.forward().unwrap();
    let finals: Vec<f64> = l.final_nodes().map(|f| alpha[f]).collect();
    let fwd = crate::logmath::log_sum_raw(&finals);
    assert!((fwd - l.total_mass().unwrap()).abs() < 1e-12);
    let brute: Vec<f64> = l.enumerate_paths(100).unwrap().into_iter().map(|(_, s)| s).collect();
    assert!((crate::logmath::log_sum_raw(&brute) - fwd).abs() < 1e-12);
}

#[test]
fn round_trip_is_exact() {
    let l = eight_paths();
    let text = serialize(&l);
    assert!(text.starts_with("LATBEAM v1\n"));
    assert_eq!(deserialize(&text).unwrap(), l);
}

#[test]
fn parse_errors_name_the_line() {
    assert!(matches!(deserialize(""), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(deserialize("LATBEAM v2\n"), Err(Error::Parse { line: 1, .. })));
    let bad = "LATBEAM v1\nnodes 1 arcs 0 root 0\nnode 0 0 0 zero -\n";
    match deserialize(bad) {
        Err(Error::Parse { line, message }) => {
            assert_eq!(line, 3);
            assert!(message.contains("mass"), "{message}");
        }
        other => panic!("unexpected {other:?}"),
    }
    let trailing = "LATBEAM v1\nnodes 1 arcs 0 root 0\nnode 0 0 1 0 -\nnode 1 0 0 0 -\n";
    assert!(matches!(deserialize(trailing), Err(Error::Parse { line: 4, .. })));
}

#[test]
fn structural_errors_are_rejected() {
    let cyc = "LATBEAM v1\nnodes 2 arcs 2 root 0\nnode 0 0 0 0 -\nnode 1 1 0 0 -\narc 0 1 0 0 0 -\narc 1 0 0 0 0 -\n";
    assert!(deserialize(cyc).is_err());
    let unreachable = "LATBEAM v1\nnodes 2 arcs 0 root 0\nnode 0 0 0 0 -\nnode 1 1 1 0 -\n";
    assert!(matches!(deserialize(unreachable), Err(Error::InvalidLattice(_))));
}

#[test]
fn cycle_detected_by_topological_order() {
    let mut l = chain(&[0, 1], 0.0);
    l.push_arc(2, 1, 0, 0.0, false, None);
    assert!(matches!(l.topological_order(), Err(Error::Cycle)));
}

#[test]
fn stats_summarise_the_lattice() {
    let s = assemble_stats(&eight_paths(), 2, &[0.1, 0.2]).unwrap();
    assert_eq!(s.num_sequences, BigUint::from(8u32));
    assert!((s.num_sequences_log10 - 8f64.log10()).abs() < 1e-15);
    assert!((s.mean_distance.unwrap() - 0.15).abs() < 1e-15);
    assert_eq!(s.csv_row("inf", 4).split(',').count(), STATS_CSV_HEADER.split(',').count());
    let none = assemble_stats(&chain(&[0], 0.0), 0, &[]).unwrap();
    assert_eq!(none.mean_distance, None);
}

#[test]
fn big_log10_handles_huge_counts() {
    let n = BigUint::from(10u32).pow(40) * BigUint::from(3u32);
    assert!((big_log10(&n) - (40.0 + 3f64.log10())).abs() < 1e-12);
    assert_eq!(big_log10(&BigUint::zero()), f64::NEG_INFINITY);
}

/// Random layered DAG: every node at layer i gets arcs from some node at layer i-1.
fn arb_lattice() -> impl Strategy<Value = Lattice> {
    (1usize..5, prop::collection::vec((1usize..4, any::<u64>()), 1..5)).prop_map(|(_, layers)| {
        let mut l = Lattice::with_root();
        let mut prev = vec![l.root()];
        for (depth, &(width, seed)) in layers.iter().enumerate() {
            let mut s = seed;
            let mut next = Vec::new();
            for j in 0..width {
                let last = depth + 1 == layers.len();
                let v = l.push_node(depth + 1, vec![j], -(j as f64), last);
                let mut used = Vec::new();
                for (pi, &p) in prev.iter().enumerate() {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    if pi == 0 || (s >> 33) % 2 == 0 {
                        used.push(p);
                    }
                }
                for p in used {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                    let score = -((s >> 40) as f64 / (1u64 << 24) as f64);
                    l.push_arc(p, v, j, score, false, None);
                }
                next.push(v);
            }
            prev = next;
        }
        l
    })
}

proptest! {
    #[test]
    fn serialization_is_a_fixpoint(l in arb_lattice()) {
        let text = serialize(&l);
        let back = deserialize(&text).unwrap();
        prop_assert_eq!(&back, &l);
        prop_assert_eq!(serialize(&back), text);
    }

    #[test]
    fn count_matches_enumeration(l in arb_lattice()) {
        let count = l.count_paths().unwrap();
        let paths = l.enumerate_paths(1 << 16).unwrap();
        prop_assert_eq!(count, BigUint::from(paths.len()));
        let brute: Vec<f64> = paths.iter().map(|(_, s)| *s).collect();
        let total = l.total_mass().unwrap();
        prop_assert!((crate::logmath::log_sum_raw(&brute) - total).abs() < 1e-9);
    }

    #[test]
    fn truncated_text_never_panics(l in arb_lattice(), cut in 0usize..400) {
        let text = serialize(&l);
        let cut = cut.min(text.len());
        let _ = deserialize(&text[..cut]);
    }
}
