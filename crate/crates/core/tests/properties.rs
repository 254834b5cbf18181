#![allow(clippy::needless_range_loop)]

mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sevmil::bag::{decode_bag, encode_bag, Bag};
use sevmil::hierarchy::Hierarchy;
use sevmil::losses::{
    build_loss_weights, combined_loss, cross_entropy, hierarchy_alignment, js_divergence, msce,
    softmax, HyperParams,
};
use sevmil::metrics::{ascc, asmc, build_confusion_weights, Asmc, ConfusionMatrix};
use sevmil::remix::{cluster_instances, random_mix, sfr, SfrParams};

fn hierarchy_strategy() -> impl Strategy<Value = Hierarchy> {
    (1usize..=3, 2usize..=8, any::<u64>()).prop_map(|(levels, finest, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        common::random_hierarchy(&mut rng, levels, finest)
    })
}

fn logits_for(h: &Hierarchy, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    h.class_counts()
        .iter()
        .map(|&n| common::random_logits(&mut rng, n, 4.0))
        .collect()
}

fn bag_strategy(max_n: usize, dim: usize) -> impl Strategy<Value = Vec<f32>> {
    (1..=max_n).prop_flat_map(move |n| proptest::collection::vec(-10.0f32..10.0, n * dim))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn losses_ignore_logit_shifts(h in hierarchy_strategy(), seed in any::<u64>(), shift in -50.0f64..50.0, leaf in 0usize..8) {
        let z = logits_for(&h, seed);
        let leaf = leaf % h.num_classes(h.finest()).unwrap();
        let t = h.labels_for(leaf).unwrap();
        let shifted: Vec<Vec<f64>> = z.iter().map(|l| l.iter().map(|v| v + shift).collect()).collect();
        let w = build_loss_weights(&h, 1.6).unwrap();
        let hp = HyperParams::default();
        for (a, b) in [
            (cross_entropy(&z, &t).unwrap().value, cross_entropy(&shifted, &t).unwrap().value),
            (msce(&z, &t, &w).unwrap().value, msce(&shifted, &t, &w).unwrap().value),
            (combined_loss(&z, &t, &w, &h, &hp).unwrap().value, combined_loss(&shifted, &t, &w, &h, &hp).unwrap().value),
        ] {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
        }
    }

    #[test]
    fn msce_is_at_least_ce(h in hierarchy_strategy(), seed in any::<u64>(), leaf in 0usize..8) {
        // every loss weight is >= 1, so the per-level weight is too
        let z = logits_for(&h, seed);
        let leaf = leaf % h.num_classes(h.finest()).unwrap();
        let t = h.labels_for(leaf).unwrap();
        let w = build_loss_weights(&h, 1.6).unwrap();
        let ce = cross_entropy(&z, &t).unwrap().value;
        prop_assert!(msce(&z, &t, &w).unwrap().value >= ce - 1e-12);
    }

    #[test]
    fn alignment_is_bounded_and_symmetric(h in hierarchy_strategy(), seed in any::<u64>()) {
        let z = logits_for(&h, seed);
        let ha = hierarchy_alignment(&z, &h).unwrap().value;
        prop_assert!(ha >= -1e-15);
        prop_assert!(ha <= (h.num_levels().saturating_sub(1)) as f64 * std::f64::consts::LN_2 + 1e-12);
        let p = softmax(&z[0]);
        let q = softmax(&z[0].iter().rev().copied().collect::<Vec<_>>());
        prop_assert!((js_divergence(&p, &q) - js_divergence(&q, &p)).abs() < 1e-15);
    }

    #[test]
    fn aggregation_preserves_mass(h in hierarchy_strategy(), seed in any::<u64>()) {
        let z = logits_for(&h, seed);
        for level in 1..h.num_levels() {
            let coarse = h.aggregate_to_parent(level, &softmax(&z[level])).unwrap();
            prop_assert!((coarse.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert_eq!(coarse.len(), h.num_classes(level - 1).unwrap());
        }
    }

    #[test]
    fn metric_ranges_and_penalty_monotonicity(cells in proptest::collection::vec(0u64..5, 16), p in 0.0f64..5.0) {
        let h = Hierarchy::single_chain(4);
        let counts: Vec<Vec<u64>> = cells.chunks(4).map(<[u64]>::to_vec).collect();
        let cm = ConfusionMatrix::from_counts(0, counts).unwrap();
        prop_assume!(cm.total() > 0);
        let lo = build_confusion_weights(&h, 0, p).unwrap();
        let hi = build_confusion_weights(&h, 0, p + 1.0).unwrap();
        let a = ascc(&cm, &lo).unwrap();
        prop_assert!(a > 0.0 && a <= 1.0);
        prop_assert!(ascc(&cm, &hi).unwrap() <= a);
        match (asmc(&cm, &lo).unwrap(), asmc(&cm, &hi).unwrap()) {
            (Asmc::Value(x), Asmc::Value(y)) => prop_assert!(x > 0.0 && x <= 1.0 && y <= x),
            (Asmc::Undefined, Asmc::Undefined) => prop_assert_eq!(cm.misclassified(), 0),
            _ => prop_assert!(false, "asmc definedness changed with P"),
        }
        prop_assert_eq!(a == 1.0, cm.misclassified() == 0);
    }

    #[test]
    fn confusion_csv_round_trip(cells in proptest::collection::vec(0u64..1000, 9)) {
        let counts: Vec<Vec<u64>> = cells.chunks(3).map(<[u64]>::to_vec).collect();
        let cm = ConfusionMatrix::from_counts(0, counts).unwrap();
        prop_assert_eq!(ConfusionMatrix::from_csv(&cm.to_csv(), 0, 3).unwrap(), cm);
    }

    #[test]
    fn bag_bytes_round_trip(features in bag_strategy(30, 3)) {
        let bag = Bag::new("p", 3, features, vec![0]).unwrap();
        let bytes = encode_bag(&bag);
        prop_assert_eq!(bytes.len(), 16 + 4 * bag.features().len());
        let (n, d, back) = decode_bag(&bytes, std::path::Path::new("p")).unwrap();
        prop_assert_eq!((n, d), (bag.len(), 3));
        prop_assert_eq!(back, bag.features().to_vec());
    }

    #[test]
    fn sfr_invariants(a in bag_strategy(25, 4), b in bag_strategy(25, 4), l in 2usize..12, t in 0usize..5, k in 1usize..11) {
        let h = Hierarchy::single_chain(2);
        let a = Bag::new("a", 4, a, vec![1]).unwrap();
        let b = Bag::new("b", 4, b, vec![0]).unwrap();
        let params = SfrParams { num_clusters: l, refine_iters: t, top_k: k.min(l - 1), ..SfrParams::default() };
        let out = sfr(&a, &b, &h, &params).unwrap();
        // recipient kept whole and first, then donor instances verbatim
        prop_assert!(out.bag.len() >= b.len() && out.bag.len() <= a.len() + b.len());
        prop_assert_eq!(&out.bag.features()[..b.features().len()], b.features());
        for (j, &i) in out.selected.iter().enumerate() {
            prop_assert_eq!(out.bag.instance(b.len() + j), a.instance(i));
        }
        prop_assert!(out.selected.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(out.bag.labels.clone(), a.labels.clone());
        let asg = out.assignment.unwrap();
        prop_assert_eq!(asg.sizes().iter().sum::<usize>(), a.len() + b.len());
        prop_assert!(asg.cluster_of.iter().all(|&c| c < l));
    }

    #[test]
    fn sfr_ignores_power_of_two_scaling(a in bag_strategy(20, 3), b in bag_strategy(20, 3), exps in proptest::collection::vec(-8i32..8, 40)) {
        let a = Bag::new("a", 3, a, vec![1]).unwrap();
        let b = Bag::new("b", 3, b, vec![0]).unwrap();
        let scale = |bag: &Bag, off: usize| {
            let f: Vec<f32> = bag
                .instances()
                .enumerate()
                .flat_map(|(i, x)| {
                    let c = 2f32.powi(exps[(i + off) % exps.len()]);
                    x.iter().map(move |v| v * c).collect::<Vec<_>>()
                })
                .collect();
            Bag::new(bag.id.clone(), bag.dim(), f, bag.labels.clone()).unwrap()
        };
        let params = SfrParams { num_clusters: 5, refine_iters: 3, top_k: 2, ..SfrParams::default() };
        let (x, _, _) = cluster_instances(&a, &b, &params);
        let (y, _, _) = cluster_instances(&scale(&a, 0), &scale(&b, 7), &params);
        prop_assert_eq!(x.cluster_of, y.cluster_of);
    }

    #[test]
    fn random_mix_sample_size(a in bag_strategy(40, 2), frac in 0.001f64..1.0, seed in any::<u64>()) {
        let h = Hierarchy::single_chain(2);
        let a = Bag::new("a", 2, a, vec![1]).unwrap();
        let b = Bag::new("b", 2, vec![0.5, 0.5], vec![0]).unwrap();
        let out = random_mix(&a, &b, &h, frac, seed).unwrap();
        prop_assert_eq!(out.selected.len(), ((frac * a.len() as f64).ceil() as usize).clamp(1, a.len()));
        prop_assert!(out.selected.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(out.bag.len(), 1 + out.selected.len());
    }
}
