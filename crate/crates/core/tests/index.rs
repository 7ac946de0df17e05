use graphchain_core::index::{brute_force, euclidean, occluded, IndexParams, TauMgIndex, VectorSet};
use graphchain_core::Exec;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn arb_set(max_n: usize, dim: usize) -> impl Strategy<Value = VectorSet> {
    prop::collection::vec(prop::collection::vec(-10i8..10, dim), 1..=max_n).prop_map(move |rows| {
        let rows: Vec<Vec<f32>> = rows.into_iter().map(|r| r.into_iter().map(|x| x as f32 * 0.37).collect()).collect();
        VectorSet::from_rows(dim, &rows).unwrap()
    })
}

fn hypot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |acc, (x, y)| (acc).hypot(*x as f64 - *y as f64))
}

fn random_set(seed: u64, n: usize, dim: usize) -> VectorSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f32>> = (0..n).map(|_| (0..dim).map(|_| rng.random::<f32>()).collect()).collect();
    VectorSet::from_rows(dim, &rows).unwrap()
}

proptest! {
    #[test]
    fn built_edges_pass_the_occlusion_rule(set in arb_set(40, 3), tau in 0.0f32..0.5) {
        let index = TauMgIndex::build(&set, &IndexParams::new(tau).with_max_degree(usize::MAX)).unwrap();
        for u in 0..set.len() as u32 {
            let kept = index.built_neighbors(u);
            for (p, &v) in kept.iter().enumerate() {
                prop_assert_ne!(u, v);
                let duv = hypot(set.get(u), set.get(v));
                for &w in &kept[..p] {
                    prop_assert!(hypot(set.get(u), set.get(w)) <= duv + 1e-4);
                    let margin = 1e-4;
                    let inside = hypot(set.get(u), set.get(w)) < duv - margin && hypot(set.get(v), set.get(w)) < duv - 3.0 * tau as f64 - margin;
                    prop_assert!(!inside, "{} -> {} occluded by {}", u, v, w);
                }
            }
        }
        prop_assert!(index.is_reachable_from_entry());
        prop_assert!(index.audit(&set, usize::MAX).unwrap().violations.is_empty());
    }

    #[test]
    fn self_queries_return_the_point(set in arb_set(40, 4)) {
        let index = TauMgIndex::build(&set, &IndexParams::new(0.0)).unwrap();
        for id in 0..set.len() as u32 {
            let hit = index.search(&set, set.get(id), 1, 8).unwrap()[0];
            prop_assert_eq!(hit.distance, 0.0);
        }
    }

    #[test]
    fn results_are_sorted_and_distinct(set in arb_set(50, 4), q in prop::collection::vec(-4.0f32..4.0, 4), k in 1usize..10) {
        let index = TauMgIndex::build(&set, &IndexParams::new(0.05)).unwrap();
        let got = index.search(&set, &q, k, 16).unwrap();
        prop_assert_eq!(got.len(), k.min(set.len()));
        prop_assert!(got.windows(2).all(|w| w[0].distance <= w[1].distance));
        let ids: std::collections::BTreeSet<_> = got.iter().map(|r| r.id).collect();
        prop_assert_eq!(ids.len(), got.len());
        for r in &got {
            prop_assert!((r.distance as f64 - hypot(set.get(r.id), &q)).abs() < 1e-4);
        }
    }

    #[test]
    fn brute_force_is_exact(set in arb_set(60, 3), q in prop::collection::vec(-4.0f32..4.0, 3), k in 1usize..8) {
        let got = brute_force(&set, &q, k).unwrap();
        let mut all: Vec<(f32, u32)> = (0..set.len() as u32).map(|i| (euclidean(set.get(i), &q), i)).collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want: Vec<u32> = all.iter().take(k).map(|p| p.1).collect();
        prop_assert_eq!(got.iter().map(|r| r.id).collect::<Vec<_>>(), want);
    }

    #[test]
    fn text_form_round_trips(set in arb_set(30, 2)) {
        let index = TauMgIndex::build(&set, &IndexParams::new(0.1)).unwrap();
        prop_assert_eq!(TauMgIndex::parse(&index.to_text()).unwrap(), index);
    }
}

#[test]
fn occlusion_examples() {
    assert!(occluded(&[0.0, 0.0], &[4.0, 0.0], &[2.0, 0.0], 0.1).unwrap());
    assert!(occluded(&[0.0, 0.0], &[2.0, 0.0], &[1.0, 0.5], 0.0).unwrap());
    assert!(!occluded(&[0.0, 0.0], &[2.0, 0.0], &[1.0, 0.5], 0.4).unwrap());
    assert!(occluded(&[0.0], &[1.0], &[1.0, 2.0], 0.0).is_err());
}

#[test]
fn larger_tau_keeps_at_least_as_many_edges() {
    let set = random_set(21, 300, 6);
    let counts: Vec<usize> = [0.0, 0.02, 0.05, 0.1, 0.2]
        .iter()
        .map(|&tau| TauMgIndex::build(&set, &IndexParams::new(tau).with_max_degree(usize::MAX)).unwrap().edge_count())
        .collect();
    assert!(counts.windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
}

#[test]
fn parallel_and_sequential_builds_agree() {
    let set = random_set(22, 400, 8);
    let a = TauMgIndex::build(&set, &IndexParams::new(0.03).with_exec(Exec::Parallel)).unwrap();
    let b = TauMgIndex::build(&set, &IndexParams::new(0.03).with_exec(Exec::Sequential)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn recall_against_brute_force() {
    let set = random_set(23, 1500, 12);
    let queries = random_set(24, 100, 12);
    let index = TauMgIndex::build(&set, &IndexParams::new(0.05)).unwrap();
    let mut hits = 0;
    for q in queries.iter() {
        let want: Vec<u32> = brute_force(&set, q, 5).unwrap().iter().map(|r| r.id).collect();
        let got: Vec<u32> = index.search(&set, q, 5, 48).unwrap().iter().map(|r| r.id).collect();
        hits += got.iter().filter(|id| want.contains(id)).count();
    }
    assert!(hits as f64 / 500.0 >= 0.95, "recall@5 {}", hits as f64 / 500.0);
}

#[test]
fn mismatched_inputs_are_rejected() {
    let set = random_set(25, 10, 3);
    let index = TauMgIndex::build(&set, &IndexParams::new(0.0)).unwrap();
    assert!(index.search(&set, &[0.0, 1.0], 1, 4).is_err());
    assert!(index.audit(&random_set(26, 11, 3), 32).is_err());
    assert!(VectorSet::from_rows(2, &[vec![1.0, 2.0, 3.0]]).is_err());
}
