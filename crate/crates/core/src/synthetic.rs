//! Seeded random graphs and stores for tests, property checks and the `verify` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{KnowledgeGraph, Triplet};
use crate::model::{ModelFamily, ModelSpec};
use crate::real::Real;
use crate::store::EmbeddingStore;

/// Uniformly random triplets (self-loops and duplicates allowed).
pub fn random_graph(
    num_entities: usize,
    num_relations: usize,
    num_triplets: usize,
    seed: u64,
) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let triplets = (0..num_triplets)
        .map(|_| {
            Triplet::new(
                rng.gen_range(0..num_entities) as u32,
                rng.gen_range(0..num_relations) as u32,
                rng.gen_range(0..num_entities) as u32,
            )
        })
        .collect();
    KnowledgeGraph::from_ids(num_entities, num_relations, triplets).expect("ids in range")
}

/// A graph with learnable structure: entities fall into `clusters` groups and relation `r`
/// links cluster `c` to cluster `(c + r + 1) mod clusters`.
pub fn planted_graph(
    num_entities: usize,
    num_relations: usize,
    clusters: usize,
    num_triplets: usize,
    seed: u64,
) -> KnowledgeGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let members: Vec<Vec<u32>> = (0..clusters)
        .map(|c| (0..num_entities as u32).filter(|e| *e as usize % clusters == c).collect())
        .collect();
    let mut triplets = Vec::with_capacity(num_triplets);
    while triplets.len() < num_triplets {
        let h = rng.gen_range(0..num_entities);
        let r = rng.gen_range(0..num_relations);
        let target = &members[(h % clusters + r + 1) % clusters];
        let t = target[rng.gen_range(0..target.len())];
        triplets.push(Triplet::new(h as u32, r as u32, t));
    }
    KnowledgeGraph::from_ids(num_entities, num_relations, triplets).expect("ids in range")
}

/// A store with entries drawn uniformly from `[-1, 1)`; OTE log-scales from `[-0.5, 0.5)`.
pub fn random_store<F: Real>(
    spec: ModelSpec,
    num_entities: usize,
    num_relations: usize,
    seed: u64,
) -> EmbeddingStore<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = EmbeddingStore::zeros(spec, num_entities, num_relations).expect("valid spec");
    for x in store.entities.iter_mut() {
        *x = F::from_f64_lossy(rng.gen_range(-1.0..1.0));
    }
    let g = spec.group_size();
    for (i, x) in store.relations.iter_mut().enumerate() {
        let v = match spec.family {
            ModelFamily::RotatE => rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            ModelFamily::Ote if i % (g * g + g) >= g * g => rng.gen_range(-0.5..0.5),
            _ => rng.gen_range(-1.0..1.0),
        };
        *x = F::from_f64_lossy(v);
    }
    store
}

/// Default spec per family used by the property checks (`dim = 8`, OTE with 2 groups).
pub fn check_spec(family: ModelFamily) -> ModelSpec {
    let spec = ModelSpec::new(family, 8);
    match family {
        ModelFamily::Ote => spec.with_groups(2),
        _ => spec,
    }
}
