use proptest::prelude::*;
use rep_core::graph::load_triplets;
use rep_core::model::{self, PreparedRelation};
use rep_core::propagation::{propagate_with, Normalization};
use rep_core::synthetic::{check_spec, random_store};
use rep_core::trainer::sgd_step;
use rep_core::*;

fn triplets_strategy(max_e: u32, max_r: u32, max_len: usize) -> impl Strategy<Value = (usize, usize, Vec<Triplet>)> {
    (1..=max_e, 1..=max_r).prop_flat_map(move |(e, r)| {
        let t = (0..e, 0..r, 0..e).prop_map(|(h, r, t)| Triplet::new(h, r, t));
        (Just(e as usize), Just(r as usize), prop::collection::vec(t, 0..max_len))
    })
}

fn family() -> impl Strategy<Value = ModelFamily> {
    prop::sample::select(ModelFamily::ALL.to_vec())
}

fn sorted(mut v: Vec<Triplet>) -> Vec<Triplet> {
    v.sort_by_key(|t| (t.head, t.relation, t.tail));
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjacency_is_a_bijection_with_the_triplet_multiset((e, r, ts) in triplets_strategy(30, 5, 200)) {
        let kg = KnowledgeGraph::from_ids(e, r, ts.clone()).unwrap();
        let adj = AdjacencyIndex::build(&kg);
        prop_assert_eq!(sorted(adj.triplets_from_outgoing()), sorted(ts.clone()));
        prop_assert_eq!(adj.num_outgoing(), ts.len());
        prop_assert_eq!(adj.num_incoming(), ts.len());
        let total: usize = (0..e).map(|i| adj.degree(i)).sum();
        prop_assert_eq!(total, 2 * ts.len());
        for i in 0..e {
            for &(h, rel) in adj.incoming(i) {
                prop_assert!(ts.contains(&Triplet::new(h, rel, i as u32)));
            }
        }
    }

    #[test]
    fn tsv_round_trip_is_stable((e, r, ts) in triplets_strategy(20, 4, 60)) {
        prop_assume!(!ts.is_empty());
        let dir = tempfile::tempdir().unwrap();
        let first = dir.path().join("a.tsv");
        let body: String = ts.iter().map(|t| format!("e{}\tr{}\te{}\n", t.head, t.relation, t.tail)).collect();
        std::fs::write(&first, body).unwrap();
        let kg = load_triplets(&first, VocabMode::Build).unwrap();
        prop_assert!(kg.num_entities <= e && kg.num_relations <= r);
        let second = dir.path().join("b.tsv");
        kg.save_tsv(&second).unwrap();
        prop_assert_eq!(std::fs::read(&first).unwrap(), std::fs::read(&second).unwrap());
        let again = load_triplets(&second, VocabMode::Build).unwrap();
        prop_assert_eq!(again, kg);
    }

    #[test]
    fn distmult_is_symmetric(seed in any::<u64>()) {
        let spec = check_spec(ModelFamily::DistMult);
        let s = random_store::<f64>(spec, 2, 1, seed);
        let a = model::score(&spec, s.entity(0), s.relation(0), s.entity(1)).unwrap();
        let b = model::score(&spec, s.entity(1), s.relation(0), s.entity(0)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn rotations_preserve_norms(seed in any::<u64>()) {
        let spec = check_spec(ModelFamily::RotatE);
        let s = random_store::<f64>(spec, 1, 1, seed);
        let rel = PreparedRelation::new(&spec, s.relation(0)).unwrap();
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((n(&rel.head_context(s.entity(0))) - n(s.entity(0))).abs() < 1e-12);
    }

    #[test]
    fn ote_with_zero_scale_preserves_norms(seed in any::<u64>()) {
        let spec = check_spec(ModelFamily::Ote);
        let mut s = random_store::<f64>(spec, 1, 1, seed);
        let g = spec.group_size();
        for chunk in s.relation_mut(0).chunks_exact_mut(g * g + g) {
            chunk[g * g..].fill(0.0);
        }
        let rel = PreparedRelation::new(&spec, s.relation(0)).unwrap();
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((n(&rel.head_context(s.entity(0))) - n(s.entity(0))).abs() < 1e-10);
        prop_assert!((n(&rel.tail_context(s.entity(0))) - n(s.entity(0))).abs() < 1e-10);
    }

    #[test]
    fn gram_schmidt_output_is_orthonormal(m in prop::collection::vec(-1.0f64..1.0, 16)) {
        let q = model::gram_schmidt(&m, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let dot: f64 = (0..4).map(|k| q[k * 4 + i] * q[k * 4 + j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - want).abs() < 1e-8, "column {} . {} = {}", i, j, dot);
            }
        }
    }

    #[test]
    fn propagation_reads_only_the_previous_snapshot(
        (e, r, ts) in triplets_strategy(25, 3, 120),
        fam in family(),
        seed in any::<u64>(),
    ) {
        let kg = KnowledgeGraph::from_ids(e, r, ts.clone()).unwrap();
        let mut reversed = ts;
        reversed.reverse();
        let kg_rev = KnowledgeGraph::from_ids(e, r, reversed).unwrap();
        let store = random_store::<f64>(check_spec(fam), e, r, seed);
        let cfg = PropagationConfig::new(0.6, 2);
        let a = propagate(&store, &AdjacencyIndex::build(&kg), &cfg).unwrap();
        let b = propagate(&store, &AdjacencyIndex::build(&kg_rev), &cfg).unwrap();
        // Triplet order only changes summation order.
        for (x, y) in a.entities.iter().zip(&b.entities) {
            prop_assert!((x - y).abs() < 1e-12);
        }
        prop_assert_eq!(&a.relations, &store.relations);
        prop_assert_eq!(a.iteration, store.iteration + 2);
    }

    #[test]
    fn isolated_entities_and_zero_hops_are_fixed_points(
        (e, r, ts) in triplets_strategy(25, 3, 40),
        fam in family(),
        seed in any::<u64>(),
    ) {
        let kg = KnowledgeGraph::from_ids(e, r, ts).unwrap();
        let adj = AdjacencyIndex::build(&kg);
        let store = random_store::<f64>(check_spec(fam), e, r, seed);
        let out = propagate(&store, &adj, &PropagationConfig::new(0.5, 3)).unwrap();
        for i in (0..e).filter(|&i| adj.degree(i) == 0) {
            prop_assert_eq!(out.entity(i), store.entity(i));
        }
        let same = propagate(&store, &adj, &PropagationConfig::new(0.5, 0)).unwrap();
        prop_assert_eq!(same.entities, store.entities);
    }

    #[test]
    fn transe_hops_stay_in_the_convex_hull(
        (e, r, ts) in triplets_strategy(25, 3, 120),
        seed in any::<u64>(),
        alpha in 0.0f64..0.99,
    ) {
        let kg = KnowledgeGraph::from_ids(e, r, ts).unwrap();
        let mut store = random_store::<f64>(ModelSpec::new(ModelFamily::TransE, 6), e, r, seed);
        store.relations.fill(0.0);
        let norm = |s: &EmbeddingStore<f64>| (0..e)
            .map(|i| s.entity(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        let mut prev = norm(&store);
        propagate_with(&store, &AdjacencyIndex::build(&kg), &PropagationConfig::new(alpha, 4), |_, s| {
            let cur = norm(s);
            assert!(cur <= prev + 1e-12, "{cur} > {prev}");
            prev = cur;
            Ok(())
        }).unwrap();
    }

    #[test]
    fn separate_normalization_matches_joint_on_balanced_degrees(seed in any::<u64>(), fam in family()) {
        // Every entity has exactly one incoming and one outgoing triplet (a directed cycle),
        // where both weightings coincide.
        let n = 12;
        let ts: Vec<Triplet> = (0..n).map(|i| Triplet::new(i, 0, (i + 1) % n)).collect();
        let kg = KnowledgeGraph::from_ids(n as usize, 1, ts).unwrap();
        let store = random_store::<f64>(check_spec(fam), n as usize, 1, seed);
        let adj = AdjacencyIndex::build(&kg);
        let joint = propagate(&store, &adj, &PropagationConfig::new(0.5, 1)).unwrap();
        let cfg = PropagationConfig { normalization: Normalization::Separate, ..PropagationConfig::new(0.5, 1) };
        let separate = propagate(&store, &adj, &cfg).unwrap();
        for (x, y) in joint.entities.iter().zip(&separate.entities) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn disjoint_batches_commute(fam in family(), seed in any::<u64>()) {
        let spec = check_spec(fam);
        let store = random_store::<f64>(spec, 8, 2, seed);
        let a = vec![(Triplet::new(0, 0, 1), Triplet::new(0, 0, 2))];
        let b = vec![(Triplet::new(4, 1, 5), Triplet::new(6, 1, 5))];
        let mut ab = store.clone();
        sgd_step(&mut ab, &a, 0.01, None, 1).unwrap();
        sgd_step(&mut ab, &b, 0.01, None, 2).unwrap();
        let mut ba = store.clone();
        sgd_step(&mut ba, &b, 0.01, None, 1).unwrap();
        sgd_step(&mut ba, &a, 0.01, None, 2).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn untouched_rows_are_bit_identical(fam in family(), seed in any::<u64>()) {
        let spec = check_spec(fam);
        let store = random_store::<f32>(spec, 10, 3, seed);
        let mut after = store.clone();
        let pairs = vec![(Triplet::new(0, 1, 2), Triplet::new(0, 1, 3))];
        sgd_step(&mut after, &pairs, 0.05, None, 1).unwrap();
        for i in 4..10 {
            prop_assert_eq!(after.entity(i), store.entity(i));
        }
        for r in [0usize, 2] {
            prop_assert_eq!(after.relation(r), store.relation(r));
        }
    }

    #[test]
    fn monotone_transforms_keep_ranks(
        truth in -50i32..50,
        cands in prop::collection::vec(-50i32..50, 0..40),
        shift in -3.0f64..3.0,
        scale in 0.1f64..10.0,
    ) {
        for tie in [TiePolicy::Average, TiePolicy::Optimistic, TiePolicy::Pessimistic] {
            let base = eval::rank_of(truth as f64, cands.iter().map(|&c| c as f64), tie);
            let f = |x: i32| (x as f64 * scale + shift).tanh() * 1e3 + x as f64;
            let moved = eval::rank_of(f(truth), cands.iter().map(|&c| f(c)), tie);
            prop_assert_eq!(base, moved);
            prop_assert!(base >= 1.0 && base <= cands.len() as f64 + 1.0);
        }
    }

    #[test]
    fn reports_are_ordered(ranks in prop::collection::vec(1u32..200, 1..100), split in 0usize..100) {
        let ranks: Vec<f64> = ranks.into_iter().map(f64::from).collect();
        let split = split.min(ranks.len());
        let report = RankingReport::from_ranks(&ranks[..split], &ranks[split..]);
        prop_assert!(report.check_invariants().is_ok());
        prop_assert!(report.hits1 <= report.hits3 && report.hits3 <= report.hits10);
        prop_assert!(report.mrr > 0.0 && report.mrr <= 1.0);
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical(fam in family(), seed in any::<u64>(), wide in any::<bool>()) {
        let dir = tempfile::tempdir().unwrap();
        let spec = check_spec(fam);
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        let digests = checkpoint::VocabDigests::default();
        if wide {
            checkpoint::save(&a, &random_store::<f64>(spec, 7, 3, seed), &digests).unwrap();
            let (s, h) = checkpoint::load::<f64>(&a).unwrap();
            checkpoint::save(&b, &s, &h.digests).unwrap();
        } else {
            checkpoint::save(&a, &random_store::<f32>(spec, 7, 3, seed), &digests).unwrap();
            let (s, h) = checkpoint::load::<f32>(&a).unwrap();
            checkpoint::save(&b, &s, &h.digests).unwrap();
        }
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
}
