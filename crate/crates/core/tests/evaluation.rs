mod common;

use common::*;
use ndarray::Array2;
use proptest::prelude::*;
use udalab_core::diagnostics::{average_precision, evaluate_distances};

#[test]
fn ap_fixtures_exact() {
    for (pat, want) in AP_FIXTURES {
        let got = average_precision(&pattern(pat));
        assert!((got - want).abs() < 1e-15, "{pat}: {got} vs {want}");
    }
    assert!((average_precision(&pattern("+-+")) - 0.8333333333333333).abs() < 1e-15);
}

#[test]
fn distances_to_metrics_by_hand() {
    // Two queries, four gallery items. Query 0 (label 0): ranking g1 g0 g3 g2
    // with label-0 items g0, g2 → relevance -+-+ → AP 0.5, first hit at rank 2.
    // Query 1 (label 1): ranking g3 g1 ... with label-1 item g3 → AP 1.
    let d = Array2::from_shape_vec((2, 4), vec![0.2, 0.1, 0.9, 0.5, 0.8, 0.4, 0.9, 0.1]).unwrap();
    let m = evaluate_distances(d.view(), &[0, 1], &[0, 3, 0, 1]).unwrap();
    assert!((m.map - 0.75).abs() < 1e-15);
    assert_eq!(m.rank1, 0.5);
    assert_eq!(m.rank5, 1.0);
    assert_eq!(m.rank10, 1.0);
}

#[test]
fn perfect_separation_scores_one() {
    let q = [0, 1, 2];
    let g = [0, 0, 1, 1, 2, 2];
    let d = Array2::from_shape_fn((3, 6), |(i, j)| if q[i] == g[j] { 0.1 } else { 1.0 + j as f64 });
    let m = evaluate_distances(d.view(), &q, &g).unwrap();
    assert_eq!((m.map, m.rank1, m.rank5, m.rank10), (1.0, 1.0, 1.0, 1.0));
}

proptest! {
    #[test]
    fn cmc_is_monotone_and_bounded(seed in 0u64..5000, nq in 1usize..8, ng in 1usize..30, classes in 1usize..5) {
        use rand::Rng;
        let mut r = rng(seed);
        let q: Vec<usize> = (0..nq).map(|_| r.random_range(0..classes)).collect();
        // Every class appears in the gallery so each query has a match.
        let g: Vec<usize> = (0..ng + classes).map(|j| if j < classes { j } else { r.random_range(0..classes) }).collect();
        let d = gaussian(nq, g.len(), &mut r).mapv(f64::abs);
        let m = evaluate_distances(d.view(), &q, &g).unwrap();
        prop_assert!(m.rank1 <= m.rank5 && m.rank5 <= m.rank10);
        prop_assert!((0.0..=1.0).contains(&m.map));
        prop_assert!((0.0..=1.0).contains(&m.rank10));
    }

    #[test]
    fn query_without_match_is_an_error(nq in 1usize..4) {
        let d = Array2::zeros((nq, 2));
        let q = vec![9; nq];
        prop_assert!(evaluate_distances(d.view(), &q, &[0, 1]).is_err());
    }

    #[test]
    fn ap_is_in_unit_interval_and_one_iff_hits_lead(bits in proptest::collection::vec(any::<bool>(), 1..30)) {
        let ap = average_precision(&bits);
        prop_assert!((0.0..=1.0).contains(&ap));
        let hits = bits.iter().filter(|&&b| b).count();
        let leading = bits.iter().take_while(|&&b| b).count();
        prop_assert_eq!(ap == 1.0, hits > 0 && leading == hits);
    }
}
