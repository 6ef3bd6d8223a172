//! Relation-based embedding propagation over pre-trained embeddings.
//!
//! One hop replaces every entity embedding `e` by
//!
//! ```text
//! e' = α·e + (1 − α) / (|in| + |out|) · (Σ_in g_h(h, r) + Σ_out g_t(t, r))
//! ```
//!
//! where `in` are the `(h, r)` pairs of triplets ending at the entity and `out` the
//! `(t, r)` pairs of triplets starting at it. Every hop reads only the previous
//! hop's table (two buffers, swapped per hop). Relations are never modified and entities
//! without any incident triplet keep their embedding bit for bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyIndex, KnowledgeGraph};
use crate::model::{ModelFamily, PreparedRelation};
use crate::real::Real;
use crate::store::EmbeddingStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropagationMode {
    /// Relation-aware context functions.
    Rep,
    /// Identity context functions; relations are ignored.
    Ep,
}

impl std::str::FromStr for PropagationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rep" => Ok(PropagationMode::Rep),
            "ep" => Ok(PropagationMode::Ep),
            other => Err(Error::Config(format!("unknown propagation mode {other:?}"))),
        }
    }
}

/// How incoming and outgoing context sums are normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    /// One average over all incident pairs.
    #[default]
    Joint,
    /// Average each direction separately, then take the mean of the non-empty ones.
    Separate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub alpha: f64,
    pub hops: usize,
    pub mode: PropagationMode,
    pub normalization: Normalization,
    pub evaluate_each_hop: bool,
}

impl Default for PropagationConfig {
    fn default() -> Self {
        Self {
            alpha: 0.98,
            hops: 1,
            mode: PropagationMode::Rep,
            normalization: Normalization::Joint,
            evaluate_each_hop: false,
        }
    }
}

impl PropagationConfig {
    pub fn new(alpha: f64, hops: usize) -> Self {
        Self {
            alpha,
            hops,
            ..Self::default()
        }
    }

    pub fn with_mode(mut self, mode: PropagationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1), got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Unnormalized context sums for every entity, read from one snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextSums {
    dim: usize,
    /// Σ g_h(h, r) over incoming pairs.
    head_sums: Vec<f64>,
    /// Σ g_t(t, r) over outgoing pairs.
    tail_sums: Vec<f64>,
    in_degree: Vec<u32>,
    out_degree: Vec<u32>,
}

impl ContextSums {
    pub fn num_entities(&self) -> usize {
        self.in_degree.len()
    }

    pub fn degree(&self, entity: usize) -> usize {
        (self.in_degree[entity] + self.out_degree[entity]) as usize
    }

    /// Joint sum `C^H + C^T` of an entity.
    pub fn sum(&self, entity: usize) -> Vec<f64> {
        let r = entity * self.dim..(entity + 1) * self.dim;
        self.head_sums[r.clone()]
            .iter()
            .zip(&self.tail_sums[r])
            .map(|(a, b)| a + b)
            .collect()
    }

    /// Separately averaged head context, `None` without incoming pairs.
    pub fn head_context_mean(&self, entity: usize) -> Option<Vec<f64>> {
        let d = self.in_degree[entity];
        (d > 0).then(|| {
            self.head_sums[entity * self.dim..(entity + 1) * self.dim]
                .iter()
                .map(|v| v / d as f64)
                .collect()
        })
    }

    /// Separately averaged tail context, `None` without outgoing pairs.
    pub fn tail_context_mean(&self, entity: usize) -> Option<Vec<f64>> {
        let d = self.out_degree[entity];
        (d > 0).then(|| {
            self.tail_sums[entity * self.dim..(entity + 1) * self.dim]
                .iter()
                .map(|v| v / d as f64)
                .collect()
        })
    }
}

struct Contexts<'a, F> {
    entities: &'a [F],
    dim: usize,
    relations: Option<&'a [PreparedRelation]>,
    adj: &'a AdjacencyIndex,
}

impl<F: Real> Contexts<'_, F> {
    fn row(&self, i: u32) -> &[F] {
        let i = i as usize;
        &self.entities[i * self.dim..(i + 1) * self.dim]
    }

    /// Writes the incoming and outgoing sums of `entity` into the two buffers.
    fn gather(&self, entity: usize, head_acc: &mut [f64], tail_acc: &mut [f64]) {
        head_acc.fill(0.0);
        tail_acc.fill(0.0);
        match self.relations {
            Some(rels) => {
                for &(h, r) in self.adj.incoming(entity) {
                    rels[r as usize].add_head_context(self.row(h), head_acc);
                }
                for &(t, r) in self.adj.outgoing(entity) {
                    rels[r as usize].add_tail_context(self.row(t), tail_acc);
                }
            }
            None => {
                for &(h, _) in self.adj.incoming(entity) {
                    add_row(self.row(h), head_acc);
                }
                for &(t, _) in self.adj.outgoing(entity) {
                    add_row(self.row(t), tail_acc);
                }
            }
        }
    }
}

fn add_row<F: Real>(x: &[F], acc: &mut [f64]) {
    for (a, &v) in acc.iter_mut().zip(x) {
        *a += v.as_f64();
    }
}

fn check_shapes<F: Real>(store: &EmbeddingStore<F>, adj: &AdjacencyIndex) -> Result<()> {
    if adj.num_entities() != store.num_entities {
        return Err(Error::Data(format!(
            "adjacency covers {} entities, store has {}",
            adj.num_entities(),
            store.num_entities
        )));
    }
    Ok(())
}

/// Computes every entity's context sums and degrees from the store's current table.
pub fn aggregate_contexts<F: Real>(
    store: &EmbeddingStore<F>,
    adj: &AdjacencyIndex,
    mode: PropagationMode,
) -> Result<ContextSums> {
    check_shapes(store, adj)?;
    let prepared = match mode {
        PropagationMode::Rep => Some(store.prepare_relations()?),
        PropagationMode::Ep => None,
    };
    let n = store.dim();
    let ctx = Contexts {
        entities: &store.entities,
        dim: n,
        relations: prepared.as_deref(),
        adj,
    };
    let mut head_sums = vec![0.0; store.num_entities * n];
    let mut tail_sums = vec![0.0; store.num_entities * n];
    head_sums
        .par_chunks_mut(n)
        .zip(tail_sums.par_chunks_mut(n))
        .enumerate()
        .for_each(|(i, (h, t))| ctx.gather(i, h, t));
    let e = store.num_entities;
    Ok(ContextSums {
        dim: n,
        head_sums,
        tail_sums,
        in_degree: (0..e).map(|i| adj.incoming(i).len() as u32).collect(),
        out_degree: (0..e).map(|i| adj.outgoing(i).len() as u32).collect(),
    })
}

/// One entity-adaptation step from precomputed sums.
pub fn adapt_entities<F: Real>(
    store: &EmbeddingStore<F>,
    sums: &ContextSums,
    alpha: f64,
    normalization: Normalization,
) -> EmbeddingStore<F> {
    let n = store.dim();
    let mut next = store.clone();
    next.entities
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            let r = i * n..(i + 1) * n;
            adapt_row(
                &store.entities[r.clone()],
                &sums.head_sums[r.clone()],
                &sums.tail_sums[r],
                sums.in_degree[i] as usize,
                sums.out_degree[i] as usize,
                alpha,
                normalization,
                row,
            );
        });
    next.iteration += 1;
    next
}

#[allow(clippy::too_many_arguments)]
fn adapt_row<F: Real>(
    current: &[F],
    head_sum: &[f64],
    tail_sum: &[f64],
    in_deg: usize,
    out_deg: usize,
    alpha: f64,
    normalization: Normalization,
    out: &mut [F],
) {
    if in_deg + out_deg == 0 {
        out.copy_from_slice(current);
        return;
    }
    let keep = 1.0 - alpha;
    match normalization {
        Normalization::Joint => {
            let w = keep / (in_deg + out_deg) as f64;
            for k in 0..out.len() {
                let ctx = head_sum[k] + tail_sum[k];
                out[k] = F::from_f64_lossy(alpha * current[k].as_f64() + w * ctx);
            }
        }
        Normalization::Separate => {
            let parts = (in_deg > 0) as usize + (out_deg > 0) as usize;
            let wh = if in_deg > 0 { 1.0 / in_deg as f64 } else { 0.0 };
            let wt = if out_deg > 0 { 1.0 / out_deg as f64 } else { 0.0 };
            for k in 0..out.len() {
                let ctx = (wh * head_sum[k] + wt * tail_sum[k]) / parts as f64;
                out[k] = F::from_f64_lossy(alpha * current[k].as_f64() + keep * ctx);
            }
        }
    }
}

/// Runs `cfg.hops` rounds of aggregation and adaptation.
pub fn propagate<F: Real>(
    store: &EmbeddingStore<F>,
    adj: &AdjacencyIndex,
    cfg: &PropagationConfig,
) -> Result<EmbeddingStore<F>> {
    propagate_with(store, adj, cfg, |_, _| Ok(()))
}

/// Relation-free ablation: [`propagate`] with identity context functions.
pub fn propagate_ep<F: Real>(
    store: &EmbeddingStore<F>,
    adj: &AdjacencyIndex,
    cfg: &PropagationConfig,
) -> Result<EmbeddingStore<F>> {
    let cfg = cfg.with_mode(PropagationMode::Ep);
    propagate(store, adj, &cfg)
}

/// [`propagate`], calling `on_hop(k, store)` after hop `k` (1-based) completes.
pub fn propagate_with<F: Real>(
    store: &EmbeddingStore<F>,
    adj: &AdjacencyIndex,
    cfg: &PropagationConfig,
    on_hop: impl FnMut(usize, &EmbeddingStore<F>) -> Result<()>,
) -> Result<EmbeddingStore<F>> {
    cfg.validate()?;
    run_hops(store, adj, cfg, on_hop)
}

// No range check on alpha: the equivalence oracle needs alpha = 1 at beta = 0.
fn run_hops<F: Real>(
    store: &EmbeddingStore<F>,
    adj: &AdjacencyIndex,
    cfg: &PropagationConfig,
    mut on_hop: impl FnMut(usize, &EmbeddingStore<F>) -> Result<()>,
) -> Result<EmbeddingStore<F>> {
    check_shapes(store, adj)?;
    let mut current = store.clone();
    if cfg.hops == 0 {
        return Ok(current);
    }
    let prepared = match cfg.mode {
        PropagationMode::Rep => Some(store.prepare_relations()?),
        PropagationMode::Ep => None,
    };
    let n = store.dim();
    let mut next = current.entities.clone();
    for hop in 1..=cfg.hops {
        {
            let ctx = Contexts {
                entities: &current.entities,
                dim: n,
                relations: prepared.as_deref(),
                adj,
            };
            next.par_chunks_mut(n).enumerate().for_each_init(
                || (vec![0.0; n], vec![0.0; n]),
                |(head_acc, tail_acc), (i, row)| {
                    ctx.gather(i, head_acc, tail_acc);
                    adapt_row(
                        ctx.row(i as u32),
                        head_acc,
                        tail_acc,
                        adj.incoming(i).len(),
                        adj.outgoing(i).len(),
                        cfg.alpha,
                        cfg.normalization,
                        row,
                    );
                },
            );
        }
        std::mem::swap(&mut current.entities, &mut next);
        current.iteration += 1;
        on_hop(hop, &current)?;
    }
    Ok(current)
}

/// Checks that one propagation step equals one gradient step on the positive-triplet objective.
///
/// Runs (a) a single TransE propagation hop with `α = 1 − 2β` and (b) an independent full-batch
/// gradient step of `Σ ‖h + r − t‖²`, where each entity's gradient is averaged over its
/// incident triplets. Returns the largest elementwise difference between the two tables.
pub fn sgd_equivalence_oracle(
    kg: &KnowledgeGraph,
    store: &EmbeddingStore<f64>,
    beta: f64,
) -> Result<f64> {
    if store.spec.family != ModelFamily::TransE {
        return Err(Error::Config("the equivalence holds for transe only".into()));
    }
    if !(0.0..=0.5).contains(&beta) {
        return Err(Error::Config(format!("beta must lie in [0, 0.5], got {beta}")));
    }
    let adj = AdjacencyIndex::build(kg);
    let rep = run_hops(
        store,
        &adj,
        &PropagationConfig::new(1.0 - 2.0 * beta, 1),
        |_, _| Ok(()),
    )?;

    let n = store.dim();
    let mut grad = vec![0.0; store.entities.len()];
    let mut count = vec![0usize; store.num_entities];
    for t in &kg.triplets {
        let (h, r, tl) = (t.head as usize, t.relation as usize, t.tail as usize);
        for k in 0..n {
            let residual = store.entities[h * n + k] + store.relations[r * n + k]
                - store.entities[tl * n + k];
            grad[h * n + k] += 2.0 * residual;
            grad[tl * n + k] -= 2.0 * residual;
        }
        count[h] += 1;
        count[tl] += 1;
    }
    let mut worst: f64 = 0.0;
    for i in 0..store.num_entities {
        for k in 0..n {
            let e = store.entities[i * n + k];
            let stepped = if count[i] == 0 {
                e
            } else {
                e - beta * grad[i * n + k] / count[i] as f64
            };
            worst = worst.max((stepped - rep.entities[i * n + k]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Triplet;
    use crate::model::ModelSpec;

    fn transe_store(entities: Vec<f64>, relations: Vec<f64>, dim: usize) -> EmbeddingStore<f64> {
        EmbeddingStore {
            spec: ModelSpec::new(ModelFamily::TransE, dim),
            num_entities: entities.len() / dim,
            num_relations: relations.len() / dim,
            entities,
            relations,
            iteration: 0,
        }
    }

    #[test]
    fn single_triplet_sums() {
        let kg = KnowledgeGraph::from_ids(2, 1, vec![Triplet::new(0, 0, 1)]).unwrap();
        let adj = AdjacencyIndex::build(&kg);
        let store = transe_store(vec![1.0, 2.0, 10.0, 20.0], vec![0.5, -0.5], 2);
        let sums = aggregate_contexts(&store, &adj, PropagationMode::Rep).unwrap();
        assert_eq!(sums.sum(0), vec![10.0 - 0.5, 20.0 + 0.5]);
        assert_eq!(sums.sum(1), vec![1.0 + 0.5, 2.0 - 0.5]);
        assert_eq!((sums.degree(0), sums.degree(1)), (1, 1));
    }

    #[test]
    fn star_graph_average() {
        let triplets = (1..5).map(|i| Triplet::new(i, 0, 0)).collect();
        let kg = KnowledgeGraph::from_ids(5, 1, triplets).unwrap();
        let adj = AdjacencyIndex::build(&kg);
        let mut ents = vec![9.0, 9.0];
        for _ in 1..5 {
            ents.extend([0.25, -3.0]);
        }
        let store = transe_store(ents, vec![0.0, 0.0], 2);
        let sums = aggregate_contexts(&store, &adj, PropagationMode::Rep).unwrap();
        let avg: Vec<f64> = sums.sum(0).iter().map(|v| v / 4.0).collect();
        assert_eq!(avg, vec![0.25, -3.0]);
        assert_eq!(sums.head_context_mean(0), Some(vec![0.25, -3.0]));
        assert_eq!(sums.tail_context_mean(0), None);
    }

    #[test]
    fn alpha_zero_degree_one_takes_context() {
        let kg = KnowledgeGraph::from_ids(2, 1, vec![Triplet::new(0, 0, 1)]).unwrap();
        let adj = AdjacencyIndex::build(&kg);
        let store = transe_store(vec![1.0, 2.0, 10.0, 20.0], vec![0.5, -0.5], 2);
        let out = propagate(&store, &adj, &PropagationConfig::new(0.0, 1)).unwrap();
        assert_eq!(out.entity(0), &[9.5, 20.5]);
        assert_eq!(out.entity(1), &[1.5, 1.5]);
        assert_eq!(out.iteration, 1);
    }

    #[test]
    fn isolated_entity_is_untouched() {
        let kg = KnowledgeGraph::from_ids(3, 1, vec![Triplet::new(0, 0, 1)]).unwrap();
        let adj = AdjacencyIndex::build(&kg);
        let store = transe_store(vec![1.0, 2.0, 10.0, 20.0, 0.1, 0.7], vec![0.5, -0.5], 2);
        for alpha in [0.0, 0.5, 0.98] {
            let out = propagate(&store, &adj, &PropagationConfig::new(alpha, 4)).unwrap();
            assert_eq!(out.entity(2), store.entity(2));
        }
    }

    #[test]
    fn hops_zero_is_identity() {
        let kg = KnowledgeGraph::from_ids(2, 1, vec![Triplet::new(0, 0, 1)]).unwrap();
        let adj = AdjacencyIndex::build(&kg);
        let store = transe_store(vec![1.0, 2.0, 10.0, 20.0], vec![0.5, -0.5], 2);
        assert_eq!(propagate(&store, &adj, &PropagationConfig::new(0.5, 0)).unwrap(), store);
    }

    #[test]
    fn relations_are_frozen() {
        let kg = KnowledgeGraph::from_ids(2, 1, vec![Triplet::new(0, 0, 1)]).unwrap();
        let adj = AdjacencyIndex::build(&kg);
        let store = transe_store(vec![1.0, 2.0, 10.0, 20.0], vec![0.5, -0.5], 2);
        let out = propagate(&store, &adj, &PropagationConfig::new(0.3, 3)).unwrap();
        assert_eq!(out.relations, store.relations);
    }

    #[test]
    fn path_graph_locality() {
        // a -> b -> c: a sees c only from hop 2 on.
        let kg = KnowledgeGraph::from_ids(3, 1, vec![Triplet::new(0, 0, 1), Triplet::new(1, 0, 2)])
            .unwrap();
        let adj = AdjacencyIndex::build(&kg);
        let base = transe_store(vec![1.0, 2.0, 3.0], vec![0.5], 1);
        let mut moved = base.clone();
        moved.entities[2] = 100.0;
        let cfg1 = PropagationConfig::new(0.5, 1);
        let cfg2 = PropagationConfig::new(0.5, 2);
        assert_eq!(
            propagate(&base, &adj, &cfg1).unwrap().entity(0),
            propagate(&moved, &adj, &cfg1).unwrap().entity(0)
        );
        assert_ne!(
            propagate(&base, &adj, &cfg2).unwrap().entity(0),
            propagate(&moved, &adj, &cfg2).unwrap().entity(0)
        );
    }

    #[test]
    fn separate_normalization_differs_when_degrees_differ() {
        // entity 1: one incoming, two outgoing.
        let kg = KnowledgeGraph::from_ids(
            4,
            1,
            vec![Triplet::new(0, 0, 1), Triplet::new(1, 0, 2), Triplet::new(1, 0, 3)],
        )
        .unwrap();
        let adj = AdjacencyIndex::build(&kg);
        let store = transe_store(vec![0.0, 1.0, 4.0, 8.0], vec![0.0], 1);
        let mut cfg = PropagationConfig::new(0.0, 1);
        let joint = propagate(&store, &adj, &cfg).unwrap();
        cfg.normalization = Normalization::Separate;
        let sep = propagate(&store, &adj, &cfg).unwrap();
        assert_eq!(joint.entity(1), &[(0.0 + 4.0 + 8.0) / 3.0]);
        assert_eq!(sep.entity(1), &[(0.0 + 6.0) / 2.0]);
    }

    #[test]
    fn alpha_out_of_range_is_rejected() {
        let kg = KnowledgeGraph::from_ids(1, 1, vec![]).unwrap();
        let adj = AdjacencyIndex::build(&kg);
        let store = transe_store(vec![1.0], vec![0.0], 1);
        assert!(propagate(&store, &adj, &PropagationConfig::new(1.0, 1)).is_err());
        assert!(propagate(&store, &adj, &PropagationConfig::new(-0.1, 1)).is_err());
    }

    #[test]
    fn single_triplet_equivalence_by_hand() {
        let beta = 0.1;
        let kg = KnowledgeGraph::from_ids(2, 1, vec![Triplet::new(0, 0, 1)]).unwrap();
        let store = transe_store(vec![1.0, -2.0, 0.5, 3.0], vec![0.25, 1.0], 2);
        let adj = AdjacencyIndex::build(&kg);
        let out = propagate(&store, &adj, &PropagationConfig::new(1.0 - 2.0 * beta, 1)).unwrap();
        for k in 0..2 {
            let (h, r, t) = (store.entities[k], store.relations[k], store.entities[2 + k]);
            let expect_h = (1.0 - 2.0 * beta) * h + 2.0 * beta * (t - r);
            let expect_t = (1.0 - 2.0 * beta) * t + 2.0 * beta * (h + r);
            assert!((out.entities[k] - expect_h).abs() < 1e-15);
            assert!((out.entities[2 + k] - expect_t).abs() < 1e-15);
        }
        assert!(sgd_equivalence_oracle(&kg, &store, beta).unwrap() < 1e-15);
    }

    #[test]
    fn equivalence_with_zero_beta() {
        let kg = KnowledgeGraph::from_ids(2, 1, vec![Triplet::new(0, 0, 1)]).unwrap();
        let store = transe_store(vec![1.0, -2.0, 0.5, 3.0], vec![0.25, 1.0], 2);
        assert_eq!(sgd_equivalence_oracle(&kg, &store, 0.0).unwrap(), 0.0);
    }
}
