use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rep_core::synthetic::planted_graph;
use rep_core::trainer::{sample_negative, EpochStats, NegativeMode, NoObserver, TrainObserver};
use rep_core::*;

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate: 0.05,
        batch_size: 64,
        epochs,
        seed: 7,
        ..TrainConfig::default()
    }
}

#[test]
fn same_seed_gives_identical_embeddings_across_thread_counts() {
    let kg = planted_graph(40, 3, 4, 400, 1);
    for family in ModelFamily::ALL {
        let spec = rep_core::synthetic::check_spec(family).with_margin(2.0);
        let run = |threads| {
            with_threads(threads, || train::<f32>(&kg, spec, &small_config(2), None, &mut NoObserver))
                .unwrap()
                .unwrap()
                .0
        };
        let one = run(1);
        assert_eq!(one, run(1), "{family}");
        assert_eq!(one, run(2), "{family}");
    }
}

#[test]
fn negative_corruption_is_uniform() {
    // Chi-square over 10^6 corrupted tails; the statistic must sit within 5 standard
    // deviations of its mean (df), i.e. |chi2 - df| <= 5 sqrt(2 df).
    let entities = 50usize;
    let samples = 1_000_000usize;
    let pos = Triplet::new(3, 0, 4);
    for mode in [NegativeMode::CorruptTail, NegativeMode::CorruptHead] {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut counts = vec![0u64; entities];
        for _ in 0..samples {
            let neg = sample_negative(pos, entities, mode, None, &mut rng).triplet;
            let e = if mode == NegativeMode::CorruptTail { neg.tail } else { neg.head };
            counts[e as usize] += 1;
        }
        let expected = samples as f64 / entities as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        let df = (entities - 1) as f64;
        assert!((chi2 - df).abs() <= 5.0 * (2.0 * df).sqrt(), "{mode:?}: chi2 = {chi2}");
    }
}

#[test]
fn both_uniform_splits_evenly_between_head_and_tail() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pos = Triplet::new(0, 0, 1);
    let n = 100_000;
    let mut heads = 0usize;
    for _ in 0..n {
        let neg = sample_negative(pos, 1000, NegativeMode::BothUniform, None, &mut rng).triplet;
        heads += (neg.tail == pos.tail && neg.head != pos.head) as usize;
    }
    let frac = heads as f64 / n as f64;
    assert!((frac - 0.5).abs() < 0.01, "{frac}");
}

#[test]
fn filtered_negatives_avoid_known_triplets() {
    let kg = planted_graph(30, 2, 3, 300, 4);
    let known = KnownTripletSet::new(&kg.triplets);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for t in &kg.triplets {
        let neg = sample_negative(*t, 30, NegativeMode::BothUniform, Some(&known), &mut rng);
        assert!(neg.degraded || !known.contains(&neg.triplet));
    }
}

struct Recorder {
    epochs: Vec<EpochStats>,
    checkpoints: Vec<u64>,
}

impl<F> TrainObserver<F> for Recorder {
    fn on_epoch(&mut self, stats: &EpochStats, _: &EmbeddingStore<F>) -> Result<()> {
        self.epochs.push(*stats);
        Ok(())
    }

    fn on_checkpoint(&mut self, step: u64, _: &EmbeddingStore<F>) -> Result<()> {
        self.checkpoints.push(step);
        Ok(())
    }
}

#[test]
fn checkpoints_fire_at_rounded_fractions() {
    let kg = planted_graph(20, 2, 2, 130, 2);
    let cfg = TrainConfig {
        batch_size: 10,
        epochs: 3,
        checkpoint_fractions: vec![0.25, 0.5, 0.75, 1.0],
        ..small_config(3)
    };
    let mut rec = Recorder { epochs: vec![], checkpoints: vec![] };
    let (_, report) = train::<f32>(&kg, ModelSpec::new(ModelFamily::TransE, 4), &cfg, None, &mut rec).unwrap();
    // 13 steps per epoch, 39 in total.
    assert_eq!(report.total_steps, 39);
    assert_eq!(rec.checkpoints, vec![10, 20, 29, 39]);
    assert_eq!(rec.epochs.len(), 3);
    assert_eq!(rec.epochs[2].step, 39);
}

struct MrrProbe<'a> {
    probe: &'a [Triplet],
    known: &'a KnownTripletSet,
    mrr: Vec<f64>,
}

impl<F: Real> TrainObserver<F> for MrrProbe<'_> {
    fn on_epoch(&mut self, _: &EpochStats, store: &EmbeddingStore<F>) -> Result<()> {
        let r = evaluate(store, self.probe, Protocol::Filtered(self.known), TiePolicy::Average)?;
        self.mrr.push(r.mrr);
        Ok(())
    }
}

#[test]
fn training_improves_ranking_on_a_planted_graph() {
    // 50 entities, TransE d=8: train-split MRR rises over the first 10 epochs
    // (compared on a 3-epoch moving average).
    let kg = planted_graph(50, 4, 5, 1000, 11);
    let known = KnownTripletSet::new(&kg.triplets);
    let spec = ModelSpec::new(ModelFamily::TransE, 8);
    let cfg = TrainConfig { learning_rate: 0.5, batch_size: 16, ..small_config(10) };
    let init = EmbeddingStore::<f32>::random(spec, 50, 4, cfg.seed).unwrap();
    let before = evaluate(&init, &kg.triplets, Protocol::Filtered(&known), TiePolicy::Average).unwrap();
    let mut probe = MrrProbe { probe: &kg.triplets, known: &known, mrr: vec![before.mrr] };
    train::<f32>(&kg, spec, &cfg, None, &mut probe).unwrap();
    let smooth: Vec<f64> = probe.mrr.windows(3).map(|w| w.iter().sum::<f64>() / 3.0).collect();
    for w in smooth.windows(2) {
        assert!(w[1] >= w[0] - 1e-3, "smoothed MRR fell: {smooth:?}");
    }
    assert!(probe.mrr[10] > before.mrr + 0.02, "{:?}", probe.mrr);
}

#[test]
fn propagation_after_training_keeps_the_planted_structure() {
    let kg = planted_graph(60, 4, 6, 1200, 12);
    let known = KnownTripletSet::new(&kg.triplets);
    let probe = &kg.triplets[..200];
    let spec = ModelSpec::new(ModelFamily::TransE, 16).with_margin(2.0);
    let (trained, _) = train::<f32>(&kg, spec, &small_config(10), None, &mut NoObserver).unwrap();
    let base = evaluate(&trained, probe, Protocol::Filtered(&known), TiePolicy::Average).unwrap();
    let adapted = propagate(&trained, &AdjacencyIndex::build(&kg), &PropagationConfig::new(0.9, 2)).unwrap();
    let rep = evaluate(&adapted, probe, Protocol::Filtered(&known), TiePolicy::Average).unwrap();
    assert_eq!(adapted.iteration, 2);
    assert!(rep.mrr > base.mrr - 0.05, "{} -> {}", base.mrr, rep.mrr);
}

#[test]
fn empty_training_graph_is_an_error() {
    let kg = KnowledgeGraph::from_ids(3, 1, vec![]).unwrap();
    let err = train::<f32>(&kg, ModelSpec::new(ModelFamily::TransE, 4), &small_config(1), None, &mut NoObserver);
    assert!(err.is_err());
}
