//! Margin-ranking training with uniform negative sampling and plain SGD.

use std::collections::BTreeMap;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{KnowledgeGraph, KnownTripletSet, Triplet};
use crate::model::{ModelSpec, PreparedRelation};
use crate::real::Real;
use crate::store::EmbeddingStore;

/// Draws per filtered negative before giving up.
pub const NEGATIVE_RETRY_BOUND: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeMode {
    CorruptHead,
    CorruptTail,
    /// Head or tail with equal probability.
    BothUniform,
}

impl FromStr for NegativeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corrupt-head" | "head" => Ok(NegativeMode::CorruptHead),
            "corrupt-tail" | "tail" => Ok(NegativeMode::CorruptTail),
            "both-uniform" | "both" => Ok(NegativeMode::BothUniform),
            other => Err(Error::Config(format!("unknown negative mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub epochs: usize,
    pub seed: u64,
    pub negative_mode: NegativeMode,
    pub filtered_negatives: bool,
    /// Rescale touched entity rows whose L2 norm exceeds this. Off by default.
    pub norm_clip: Option<f64>,
    /// Fractions of the total step count at which checkpoints are emitted.
    pub checkpoint_fractions: Vec<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 128,
            negatives_per_positive: 1,
            epochs: 100,
            seed: 0,
            negative_mode: NegativeMode::BothUniform,
            filtered_negatives: false,
            norm_clip: None,
            checkpoint_fractions: vec![1.0],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate < 1.0) {
            return Err(Error::Config(format!(
                "learning rate must lie in (0, 1), got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 || self.negatives_per_positive == 0 || self.epochs == 0 {
            return Err(Error::Config(
                "batch size, negatives per positive and epochs must be positive".into(),
            ));
        }
        if let Some(c) = self.norm_clip {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::Config(format!("norm clip must be positive, got {c}")));
            }
        }
        if let Some(f) = self
            .checkpoint_fractions
            .iter()
            .find(|f| !(**f > 0.0 && **f <= 1.0))
        {
            return Err(Error::Config(format!("checkpoint fraction {f} outside (0, 1]")));
        }
        Ok(())
    }

    /// Steps per epoch for a training set of `n` triplets.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }

    /// Steps at which checkpoints fire, ascending and deduplicated.
    pub fn checkpoint_steps(&self, total_steps: u64) -> Vec<u64> {
        let mut steps: Vec<u64> = self
            .checkpoint_fractions
            .iter()
            .map(|f| ((f * total_steps as f64).round() as u64).clamp(1, total_steps.max(1)))
            .collect();
        steps.sort_unstable();
        steps.dedup();
        steps
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeSample {
    pub triplet: Triplet,
    /// The sample may coincide with a known triplet (single-entity graph or retries exhausted).
    pub degraded: bool,
}

/// Corrupts the head or tail of `positive` with an entity drawn uniformly from all entities.
pub fn sample_negative<R: Rng + ?Sized>(
    positive: Triplet,
    num_entities: usize,
    mode: NegativeMode,
    known: Option<&KnownTripletSet>,
    rng: &mut R,
) -> NegativeSample {
    if num_entities <= 1 {
        return NegativeSample {
            triplet: positive,
            degraded: true,
        };
    }
    let corrupt_head = match mode {
        NegativeMode::CorruptHead => true,
        NegativeMode::CorruptTail => false,
        NegativeMode::BothUniform => rng.gen_bool(0.5),
    };
    let mut draw = || {
        let e = rng.gen_range(0..num_entities) as u32;
        let mut t = positive;
        if corrupt_head {
            t.head = e;
        } else {
            t.tail = e;
        }
        t
    };
    match known {
        None => NegativeSample {
            triplet: draw(),
            degraded: false,
        },
        Some(known) => {
            let mut last = positive;
            for _ in 0..NEGATIVE_RETRY_BOUND {
                last = draw();
                if !known.contains(&last) {
                    return NegativeSample {
                        triplet: last,
                        degraded: false,
                    };
                }
            }
            NegativeSample {
                triplet: last,
                degraded: true,
            }
        }
    }
}

/// Hinge `[γ − pos + neg]₊`.
pub fn margin_loss(pos_score: f64, neg_score: f64, margin: f64) -> f64 {
    (margin - pos_score + neg_score).max(0.0)
}

/// Sparse gradient of a batch, keyed by entity and relation id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchGradient {
    pub entities: BTreeMap<u32, Vec<f64>>,
    pub relations: BTreeMap<u32, Vec<f64>>,
    /// Mean hinge loss over the batch's pairs.
    pub loss: f64,
}

/// Gradient of the mean hinge loss over `(positive, negative)` pairs.
pub fn batch_gradient<F: Real>(
    store: &EmbeddingStore<F>,
    pairs: &[(Triplet, Triplet)],
) -> Result<BatchGradient> {
    let spec = &store.spec;
    let mut rel_ids: Vec<u32> = pairs.iter().map(|(p, _)| p.relation).collect();
    rel_ids.sort_unstable();
    rel_ids.dedup();
    let prepared: BTreeMap<u32, PreparedRelation> = rel_ids
        .into_iter()
        .map(|r| Ok((r, PreparedRelation::new(spec, store.relation(r as usize))?)))
        .collect::<Result<_>>()?;

    let scale = 1.0 / pairs.len().max(1) as f64;
    // Per-pair work in parallel, reduced below in batch order so the result is deterministic.
    let per_pair: Vec<Option<(f64, Vec<PartGrad>)>> = pairs
        .par_iter()
        .map(|&(pos, neg)| {
            let rel = &prepared[&pos.relation];
            let row = |e: u32| store.entity(e as usize);
            let ps = rel.score(spec, row(pos.head), row(pos.tail));
            let ns = rel.score(spec, row(neg.head), row(neg.tail));
            let loss = margin_loss(ps, ns, spec.margin);
            if loss <= 0.0 {
                return None;
            }
            let gp = rel.score_gradient(spec, row(pos.head), row(pos.tail));
            let gn = rel.score_gradient(spec, row(neg.head), row(neg.tail));
            // ∂loss = −∂f(pos) + ∂f(neg)
            let parts = vec![
                PartGrad::Entity(pos.head, gp.h, -scale),
                PartGrad::Entity(pos.tail, gp.t, -scale),
                PartGrad::Relation(pos.relation, gp.relation, -scale),
                PartGrad::Entity(neg.head, gn.h, scale),
                PartGrad::Entity(neg.tail, gn.t, scale),
                PartGrad::Relation(neg.relation, gn.relation, scale),
            ];
            Some((loss, parts))
        })
        .collect();

    let mut grad = BatchGradient::default();
    let mut total = 0.0;
    for (loss, parts) in per_pair.into_iter().flatten() {
        total += loss;
        for part in parts {
            let (map, id, g, w) = match part {
                PartGrad::Entity(id, g, w) => (&mut grad.entities, id, g, w),
                PartGrad::Relation(id, g, w) => (&mut grad.relations, id, g, w),
            };
            let acc = map.entry(id).or_insert_with(|| vec![0.0; g.len()]);
            for (a, v) in acc.iter_mut().zip(&g) {
                *a += w * v;
            }
        }
    }
    grad.loss = total * scale;
    Ok(grad)
}

enum PartGrad {
    Entity(u32, Vec<f64>, f64),
    Relation(u32, Vec<f64>, f64),
}

/// Applies one SGD update `θ ← θ − β·∇` for the pairs of a batch.
///
/// Rows absent from the gradient are not written. Returns the batch's mean loss.
pub fn sgd_step<F: Real>(
    store: &mut EmbeddingStore<F>,
    pairs: &[(Triplet, Triplet)],
    learning_rate: f64,
    norm_clip: Option<f64>,
    step: u64,
) -> Result<f64> {
    let grad = batch_gradient(store, pairs)?;
    let bad_entity = grad
        .entities
        .iter()
        .find(|(_, g)| g.iter().any(|v| !v.is_finite()));
    if let Some((id, _)) = bad_entity {
        return Err(Error::NonFiniteGradient {
            step,
            detail: format!("entity {id}"),
        });
    }
    let bad_relation = grad
        .relations
        .iter()
        .find(|(_, g)| g.iter().any(|v| !v.is_finite()));
    if let Some((id, _)) = bad_relation {
        return Err(Error::NonFiniteGradient {
            step,
            detail: format!("relation {id}"),
        });
    }
    for (&id, g) in &grad.entities {
        let row = store.entity_mut(id as usize);
        apply(row, g, learning_rate);
        if let Some(limit) = norm_clip {
            let norm = row.iter().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt();
            if norm > limit {
                let s = limit / norm;
                row.iter_mut().for_each(|x| *x = F::from_f64_lossy(x.as_f64() * s));
            }
        }
    }
    for (&id, g) in &grad.relations {
        apply(store.relation_mut(id as usize), g, learning_rate);
    }
    Ok(grad.loss)
}

fn apply<F: Real>(row: &mut [F], grad: &[f64], lr: f64) {
    for (x, g) in row.iter_mut().zip(grad) {
        *x = F::from_f64_lossy(x.as_f64() - lr * g);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Global step count at the end of the epoch.
    pub step: u64,
    pub loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub total_steps: u64,
    pub degraded_negatives: u64,
}

/// Hooks called during [`train`].
pub trait TrainObserver<F> {
    fn on_epoch(&mut self, _stats: &EpochStats, _store: &EmbeddingStore<F>) -> Result<()> {
        Ok(())
    }

    /// Called once per configured checkpoint fraction, after the step it maps to.
    fn on_checkpoint(&mut self, _step: u64, _store: &EmbeddingStore<F>) -> Result<()> {
        Ok(())
    }
}

/// Observer that does nothing.
pub struct NoObserver;

impl<F> TrainObserver<F> for NoObserver {}

/// Trains embeddings from a fresh seeded initialization.
pub fn train<F: Real>(
    kg: &KnowledgeGraph,
    spec: ModelSpec,
    cfg: &TrainConfig,
    known: Option<&KnownTripletSet>,
    observer: &mut dyn TrainObserver<F>,
) -> Result<(EmbeddingStore<F>, TrainReport)> {
    let store = EmbeddingStore::random(spec, kg.num_entities, kg.num_relations, cfg.seed)?;
    train_from(store, kg, cfg, known, observer)
}

/// Continues training an existing store.
pub fn train_from<F: Real>(
    mut store: EmbeddingStore<F>,
    kg: &KnowledgeGraph,
    cfg: &TrainConfig,
    known: Option<&KnownTripletSet>,
    observer: &mut dyn TrainObserver<F>,
) -> Result<(EmbeddingStore<F>, TrainReport)> {
    cfg.validate()?;
    store.validate()?;
    if kg.is_empty() {
        return Err(Error::Data("training graph has no triplets".into()));
    }
    if kg.num_entities != store.num_entities || kg.num_relations != store.num_relations {
        return Err(Error::Data("graph and store disagree on entity or relation counts".into()));
    }
    let filter = if cfg.filtered_negatives { known } else { None };
    if cfg.filtered_negatives && known.is_none() {
        return Err(Error::Config("filtered negatives need the known-triplet set".into()));
    }

    // Independent streams for shuffling and negatives, both derived from the seed.
    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5348_5546);
    let mut neg_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x4e45_4753);
    let per_epoch = cfg.steps_per_epoch(kg.len()) as u64;
    let total_steps = per_epoch * cfg.epochs as u64;
    let mut checkpoints = cfg.checkpoint_steps(total_steps).into_iter().peekable();
    let mut report = TrainReport {
        total_steps,
        ..TrainReport::default()
    };
    let mut order: Vec<usize> = (0..kg.len()).collect();
    let mut step = 0u64;
    let mut pairs = Vec::with_capacity(cfg.batch_size * cfg.negatives_per_positive);

    for epoch in 0..cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut order_rng);
        let mut loss_sum = 0.0;
        let mut pair_count = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            pairs.clear();
            for &idx in chunk {
                let pos = kg.triplets[idx];
                for _ in 0..cfg.negatives_per_positive {
                    let neg = sample_negative(pos, kg.num_entities, cfg.negative_mode, filter, &mut neg_rng);
                    report.degraded_negatives += neg.degraded as u64;
                    pairs.push((pos, neg.triplet));
                }
            }
            step += 1;
            let loss = sgd_step(&mut store, &pairs, cfg.learning_rate, cfg.norm_clip, step)?;
            loss_sum += loss * pairs.len() as f64;
            pair_count += pairs.len();
            while checkpoints.next_if(|&s| s == step).is_some() {
                observer.on_checkpoint(step, &store)?;
            }
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            step,
            loss: loss_sum / pair_count as f64,
            seconds: started.elapsed().as_secs_f64(),
        };
        observer.on_epoch(&stats, &store)?;
        report.epochs.push(stats);
    }
    Ok((store, report))
}
