//! Executable property checks backing the `verify` command.
//!
//! Each check compares the production code path against an independently written
//! oracle in [`oracle`] on seeded synthetic inputs and reports the worst deviation.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{compute_ranks, Protocol, RankingReport, TiePolicy};
use crate::graph::{AdjacencyIndex, KnowledgeGraph, KnownTripletSet, Triplet};
use crate::model::{ModelFamily, ModelSpec, NormOrder, PreparedRelation};
use crate::propagation::{aggregate_contexts, propagate, propagate_ep, sgd_equivalence_oracle, PropagationConfig, PropagationMode};
use crate::store::EmbeddingStore;
use crate::synthetic::{check_spec, random_graph, random_store};

pub const SGD_EQUIVALENCE_TOL: f64 = 1e-9;
pub const INVERSION_TOL: f64 = 1e-6;
pub const AGGREGATE_TOL: f64 = 1e-12;
pub const SCORE_ORACLE_TOL: f64 = 1e-10;
pub const GRADIENT_REL_TOL: f64 = 1e-4;
pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Property {
    SgdEquivalence,
    Inversion,
    ScoreOracle,
    AggregateOracle,
    EvalOracle,
    GradientCheck,
    ReportInvariants,
    SnapshotPurity,
    ConvexBound,
    EpCoincidence,
}

impl Property {
    pub const ALL: [Property; 10] = [
        Property::SgdEquivalence,
        Property::Inversion,
        Property::ScoreOracle,
        Property::AggregateOracle,
        Property::EvalOracle,
        Property::GradientCheck,
        Property::ReportInvariants,
        Property::SnapshotPurity,
        Property::ConvexBound,
        Property::EpCoincidence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::SgdEquivalence => "sgd-equivalence",
            Property::Inversion => "inversion",
            Property::ScoreOracle => "score-oracle",
            Property::AggregateOracle => "aggregate-oracle",
            Property::EvalOracle => "eval-oracle",
            Property::GradientCheck => "gradient-check",
            Property::ReportInvariants => "report-invariants",
            Property::SnapshotPurity => "snapshot-purity",
            Property::ConvexBound => "convex-bound",
            Property::EpCoincidence => "ep-coincidence",
        }
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown property {s:?}")))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PropertyResult {
    pub property: String,
    pub passed: bool,
    /// Worst observed deviation, where the check has one.
    pub value: Option<f64>,
    pub tolerance: Option<f64>,
    pub detail: String,
}

impl PropertyResult {
    fn measured(property: Property, value: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            property: property.name().into(),
            passed: value <= tolerance,
            value: Some(value),
            tolerance: Some(tolerance),
            detail: detail.into(),
        }
    }

    fn boolean(property: Property, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            property: property.name().into(),
            passed,
            value: None,
            tolerance: None,
            detail: detail.into(),
        }
    }

    fn failed(property: Property, err: Error) -> Self {
        Self::boolean(property, false, format!("error: {err}"))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub seed: u64,
    pub beta: f64,
    /// Random samples per family for the inversion and gradient checks.
    pub inversion_samples: usize,
    pub gradient_samples: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 42,
            beta: 0.01,
            inversion_samples: 10_000,
            gradient_samples: 1_000,
        }
    }
}

pub fn run(properties: &[Property], opts: &VerifyOptions) -> Vec<PropertyResult> {
    properties.iter().map(|&p| run_one(p, opts)).collect()
}

pub fn run_one(property: Property, opts: &VerifyOptions) -> PropertyResult {
    let outcome = match property {
        Property::SgdEquivalence => check_sgd_equivalence(opts.seed, opts.beta),
        Property::Inversion => check_inversion(opts.inversion_samples, opts.seed),
        Property::ScoreOracle => check_score_oracle(1_000, opts.seed),
        Property::AggregateOracle => check_aggregate_oracle(opts.seed),
        Property::EvalOracle => check_eval_oracle(opts.seed),
        Property::GradientCheck => check_gradients(opts.gradient_samples, opts.seed),
        Property::ReportInvariants => check_report_invariants(opts.seed),
        Property::SnapshotPurity => check_snapshot_purity(opts.seed),
        Property::ConvexBound => check_convex_bound(opts.seed),
        Property::EpCoincidence => check_ep_coincidence(opts.seed),
    };
    outcome.unwrap_or_else(|e| PropertyResult::failed(property, e))
}

fn families_with_inverse() -> [ModelFamily; 3] {
    [ModelFamily::TransE, ModelFamily::RotatE, ModelFamily::Ote]
}

/// One propagation step with `α = 1 − 2β` against one full-batch gradient step,
/// on 50 entities / 5 relations / 200 triplets, `dim = 8`.
pub fn check_sgd_equivalence(seed: u64, beta: f64) -> Result<PropertyResult> {
    let kg = random_graph(50, 5, 200, seed);
    let store = random_store::<f64>(ModelSpec::new(ModelFamily::TransE, 8), 50, 5, seed + 1);
    let worst = sgd_equivalence_oracle(&kg, &store, beta)?;
    Ok(PropertyResult::measured(
        Property::SgdEquivalence,
        worst,
        SGD_EQUIVALENCE_TOL,
        format!("beta={beta}: max |rep - sgd| = {worst:e}"),
    ))
}

/// `tail_context(head_context(x, r), r) == x` using the production context functions.
pub fn check_inversion(samples: usize, seed: u64) -> Result<PropertyResult> {
    check_inversion_with(samples, seed, |rel, x| rel.head_context(x), |rel, y| rel.tail_context(y))
}

/// Inversion check over caller-supplied context functions.
pub fn check_inversion_with(
    samples: usize,
    seed: u64,
    head: impl Fn(&PreparedRelation, &[f64]) -> Vec<f64>,
    tail: impl Fn(&PreparedRelation, &[f64]) -> Vec<f64>,
) -> Result<PropertyResult> {
    let mut worst: f64 = 0.0;
    let mut per_family = Vec::new();
    for family in families_with_inverse() {
        let spec = check_spec(family);
        let mut family_worst: f64 = 0.0;
        for i in 0..samples {
            let store = random_store::<f64>(spec, 1, 1, seed.wrapping_add(i as u64));
            let rel = PreparedRelation::new(&spec, store.relation(0))?;
            let x = store.entity(0);
            let back = tail(&rel, &head(&rel, x));
            family_worst = x
                .iter()
                .zip(&back)
                .map(|(a, b)| (a - b).abs())
                .fold(family_worst, f64::max);
        }
        per_family.push(format!("{family}={family_worst:e}"));
        worst = worst.max(family_worst);
    }
    Ok(PropertyResult::measured(
        Property::Inversion,
        worst,
        INVERSION_TOL,
        format!("{samples} samples per family: {}", per_family.join(" ")),
    ))
}

/// Production scores against the straight-line formulas in [`oracle::score`].
pub fn check_score_oracle(samples: usize, seed: u64) -> Result<PropertyResult> {
    let mut worst: f64 = 0.0;
    for family in ModelFamily::ALL {
        for norm in [NormOrder::L1, NormOrder::L2] {
            let spec = check_spec(family).with_norm(norm);
            for i in 0..samples {
                let store = random_store::<f64>(spec, 2, 1, seed.wrapping_add(i as u64));
                let got = crate::model::score(&spec, store.entity(0), store.relation(0), store.entity(1))?;
                let want = oracle::score(&spec, store.entity(0), store.relation(0), store.entity(1));
                worst = worst.max((got - want).abs());
            }
        }
    }
    Ok(PropertyResult::measured(
        Property::ScoreOracle,
        worst,
        SCORE_ORACLE_TOL,
        format!("{samples} samples per family and norm"),
    ))
}

/// CSR-based aggregation against a per-triplet double loop, all families.
pub fn check_aggregate_oracle(seed: u64) -> Result<PropertyResult> {
    let kg = random_graph(100, 7, 1000, seed);
    let adj = AdjacencyIndex::build(&kg);
    let mut worst: f64 = 0.0;
    for family in ModelFamily::ALL {
        let store = random_store::<f64>(check_spec(family), 100, 7, seed + 3);
        let fast = aggregate_contexts(&store, &adj, PropagationMode::Rep)?;
        let (sums, degrees) = oracle::context_sums(&kg, &store)?;
        for i in 0..kg.num_entities {
            if fast.degree(i) != degrees[i] {
                return Ok(PropertyResult::boolean(
                    Property::AggregateOracle,
                    false,
                    format!("{family}: degree mismatch at entity {i}"),
                ));
            }
            worst = fast
                .sum(i)
                .iter()
                .zip(&sums[i])
                .map(|(a, b)| (a - b).abs())
                .fold(worst, f64::max);
        }
    }
    Ok(PropertyResult::measured(
        Property::AggregateOracle,
        worst,
        AGGREGATE_TOL,
        format!("1000 triplets, 4 families: max |fast - naive| = {worst:e}"),
    ))
}

/// Filtered ranks against [`oracle::filtered_ranks`], exact equality, all families and tie policies.
pub fn check_eval_oracle(seed: u64) -> Result<PropertyResult> {
    let kg = random_graph(100, 5, 600, seed);
    let (train, test) = kg.triplets.split_at(550);
    let known = KnownTripletSet::new(&kg.triplets);
    let _ = train;
    let mut mismatches = 0usize;
    let mut total = 0usize;
    for family in ModelFamily::ALL {
        // f32 store: real-world width, and coarse enough to produce ties.
        let store = random_store::<f32>(check_spec(family), 100, 5, seed + 5);
        for tie in [TiePolicy::Average, TiePolicy::Optimistic, TiePolicy::Pessimistic] {
            let fast = compute_ranks(&store, test, Protocol::Filtered(&known), tie)?;
            let naive = oracle::filtered_ranks(&store, test, &known, tie)?;
            for (a, b) in fast.head.iter().chain(&fast.tail).zip(naive.0.iter().chain(&naive.1)) {
                total += 1;
                mismatches += (a != b) as usize;
            }
        }
    }
    Ok(PropertyResult::boolean(
        Property::EvalOracle,
        mismatches == 0,
        format!("{mismatches} of {total} ranks differ from the naive evaluator"),
    ))
}

/// Closed-form score gradients against central finite differences, all families and norms.
pub fn check_gradients(samples: usize, seed: u64) -> Result<PropertyResult> {
    let mut worst: f64 = 0.0;
    let mut skipped = 0usize;
    let mut details = Vec::new();
    for family in ModelFamily::ALL {
        for norm in [NormOrder::L2, NormOrder::L1] {
            if family == ModelFamily::DistMult && norm == NormOrder::L1 {
                continue;
            }
            let spec = check_spec(family).with_norm(norm);
            let mut w: f64 = 0.0;
            for i in 0..samples {
                let store = random_store::<f64>(spec, 2, 1, seed.wrapping_add(1000 + i as u64));
                match oracle::gradient_relative_error(&spec, store.entity(0), store.relation(0), store.entity(1))? {
                    Some(err) => w = w.max(err),
                    None => skipped += 1,
                }
            }
            details.push(format!("{family}/{norm:?}={w:e}"));
            worst = worst.max(w);
        }
    }
    Ok(PropertyResult::measured(
        Property::GradientCheck,
        worst,
        GRADIENT_REL_TOL,
        format!("{samples} points per case, {skipped} kink points skipped: {}", details.join(" ")),
    ))
}

/// Hits monotonicity, MRR bounds, and invariance of ranks under a strictly increasing transform.
pub fn check_report_invariants(seed: u64) -> Result<PropertyResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for trial in 0..200 {
        let n = rng.gen_range(1..50);
        let cands: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..20) as f64) / 4.0 - 2.0).collect();
        let truth = (rng.gen_range(0..20) as f64) / 4.0 - 2.0;
        for tie in [TiePolicy::Average, TiePolicy::Optimistic, TiePolicy::Pessimistic] {
            let base = crate::eval::rank_of(truth, cands.iter().copied(), tie);
            let f = |x: f64| x.exp() * 3.0 + x.powi(3);
            let moved = crate::eval::rank_of(f(truth), cands.iter().map(|&x| f(x)), tie);
            if base != moved {
                return Ok(PropertyResult::boolean(
                    Property::ReportInvariants,
                    false,
                    format!("trial {trial}: monotone transform changed rank {base} -> {moved}"),
                ));
            }
        }
        let ranks: Vec<f64> = (0..rng.gen_range(1..40)).map(|_| rng.gen_range(1..30) as f64).collect();
        let split = rng.gen_range(0..=ranks.len());
        let report = RankingReport::from_ranks(&ranks[..split], &ranks[split..]);
        if let Err(e) = report.check_invariants() {
            return Ok(PropertyResult::boolean(Property::ReportInvariants, false, e));
        }
    }
    Ok(PropertyResult::boolean(
        Property::ReportInvariants,
        true,
        "200 randomized trials",
    ))
}

/// Relabelling entities permutes the propagated table and changes nothing else.
pub fn check_snapshot_purity(seed: u64) -> Result<PropertyResult> {
    let kg = random_graph(60, 4, 300, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 9);
    let mut perm: Vec<u32> = (0..60).collect();
    rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
    let permuted = KnowledgeGraph::from_ids(
        60,
        4,
        kg.triplets
            .iter()
            .map(|t| Triplet::new(perm[t.head as usize], t.relation, perm[t.tail as usize]))
            .collect(),
    )?;
    let cfg = PropagationConfig::new(0.7, 3);
    for family in ModelFamily::ALL {
        let store = random_store::<f64>(check_spec(family), 60, 4, seed + 11);
        let mut moved = store.clone();
        for (i, &p) in perm.iter().enumerate() {
            moved.entity_mut(p as usize).copy_from_slice(store.entity(i));
        }
        let a = propagate(&store, &AdjacencyIndex::build(&kg), &cfg)?;
        let b = propagate(&moved, &AdjacencyIndex::build(&permuted), &cfg)?;
        for (i, &p) in perm.iter().enumerate() {
            if a.entity(i) != b.entity(p as usize) {
                return Ok(PropertyResult::boolean(
                    Property::SnapshotPurity,
                    false,
                    format!("{family}: entity {i} depends on processing order"),
                ));
            }
        }
    }
    Ok(PropertyResult::boolean(
        Property::SnapshotPurity,
        true,
        "3 hops, 4 families, permuted ids agree bitwise",
    ))
}

/// TransE with zero relations: the max entity norm never grows across hops.
pub fn check_convex_bound(seed: u64) -> Result<PropertyResult> {
    let kg = random_graph(80, 3, 400, seed);
    let adj = AdjacencyIndex::build(&kg);
    let mut store = random_store::<f64>(ModelSpec::new(ModelFamily::TransE, 8), 80, 3, seed + 13);
    store.relations.iter_mut().for_each(|x| *x = 0.0);
    let max_norm = |s: &EmbeddingStore<f64>| {
        (0..s.num_entities)
            .map(|i| s.entity(i).iter().map(|x| x * x).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    };
    let mut worst_growth = f64::NEG_INFINITY;
    let mut prev = max_norm(&store);
    propagate_with_each(&store, &adj, 0.5, 10, |s| {
        let cur = max_norm(s);
        worst_growth = worst_growth.max(cur - prev);
        prev = cur;
    })?;
    Ok(PropertyResult::measured(
        Property::ConvexBound,
        worst_growth.max(0.0),
        1e-12,
        format!("10 hops, largest per-hop growth of max norm {worst_growth:e}"),
    ))
}

fn propagate_with_each(
    store: &EmbeddingStore<f64>,
    adj: &AdjacencyIndex,
    alpha: f64,
    hops: usize,
    mut f: impl FnMut(&EmbeddingStore<f64>),
) -> Result<()> {
    crate::propagation::propagate_with(store, adj, &PropagationConfig::new(alpha, hops), |_, s| {
        f(s);
        Ok(())
    })?;
    Ok(())
}

/// EP equals REP bitwise when every relation is the family's identity element.
pub fn check_ep_coincidence(seed: u64) -> Result<PropertyResult> {
    let kg = random_graph(60, 4, 300, seed);
    let adj = AdjacencyIndex::build(&kg);
    let cfg = PropagationConfig::new(0.8, 3);
    for family in ModelFamily::ALL {
        let spec = check_spec(family);
        let mut store = random_store::<f64>(spec, 60, 4, seed + 17);
        oracle::set_identity_relations(&mut store);
        let rep = propagate(&store, &adj, &cfg)?;
        let ep = propagate_ep(&store, &adj, &cfg)?;
        if rep.entities != ep.entities {
            return Ok(PropertyResult::boolean(
                Property::EpCoincidence,
                false,
                format!("{family}: EP and REP differ under identity relations"),
            ));
        }
    }
    Ok(PropertyResult::boolean(
        Property::EpCoincidence,
        true,
        "4 families, 3 hops, bitwise equal",
    ))
}

/// Reference computations written independently of the production paths.
pub mod oracle {
    use super::*;
    use crate::real::Real;

    /// Classical Gram-Schmidt on the columns of a row-major square matrix.
    pub fn classical_gram_schmidt(m: &[f64], g: usize) -> Vec<f64> {
        let col = |j: usize| -> Vec<f64> { (0..g).map(|i| m[i * g + j]).collect() };
        let mut qs: Vec<Vec<f64>> = Vec::with_capacity(g);
        for j in 0..g {
            let a = col(j);
            let mut v = a.clone();
            for q in &qs {
                let p: f64 = q.iter().zip(&a).map(|(x, y)| x * y).sum();
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= p * qi;
                }
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            qs.push(v.into_iter().map(|x| x / n).collect());
        }
        let mut out = vec![0.0; g * g];
        for (j, q) in qs.iter().enumerate() {
            for i in 0..g {
                out[i * g + j] = q[i];
            }
        }
        out
    }

    /// Dense `diag(exp(s))·φ(M)` for each OTE group of a relation row.
    pub fn ote_dense_blocks(spec: &ModelSpec, raw: &[f64]) -> Vec<Vec<f64>> {
        let g = spec.group_size();
        raw.chunks_exact(g * g + g)
            .map(|chunk| {
                let q = classical_gram_schmidt(&chunk[..g * g], g);
                let mut a = vec![0.0; g * g];
                for i in 0..g {
                    let s = chunk[g * g + i].clamp(-10.0, 10.0).exp();
                    for j in 0..g {
                        a[i * g + j] = s * q[i * g + j];
                    }
                }
                a
            })
            .collect()
    }

    pub fn matvec(a: &[f64], x: &[f64]) -> Vec<f64> {
        let g = x.len();
        (0..g).map(|i| (0..g).map(|j| a[i * g + j] * x[j]).sum()).collect()
    }

    /// Gauss-Jordan inverse with partial pivoting.
    pub fn dense_inverse(a: &[f64], g: usize) -> Vec<f64> {
        let mut m = a.to_vec();
        let mut inv = vec![0.0; g * g];
        for i in 0..g {
            inv[i * g + i] = 1.0;
        }
        for c in 0..g {
            let p = (c..g)
                .max_by(|&x, &y| m[x * g + c].abs().total_cmp(&m[y * g + c].abs()))
                .unwrap();
            for k in 0..g {
                m.swap(c * g + k, p * g + k);
                inv.swap(c * g + k, p * g + k);
            }
            let d = m[c * g + c];
            for k in 0..g {
                m[c * g + k] /= d;
                inv[c * g + k] /= d;
            }
            for r in 0..g {
                if r != c {
                    let f = m[r * g + c];
                    for k in 0..g {
                        m[r * g + k] -= f * m[c * g + k];
                        inv[r * g + k] -= f * inv[c * g + k];
                    }
                }
            }
        }
        inv
    }

    fn norm(spec: &ModelSpec, d: &[f64], complex: bool) -> f64 {
        match spec.norm {
            NormOrder::L2 => d.iter().map(|x| x * x).sum::<f64>().sqrt(),
            NormOrder::L1 if complex => {
                let half = d.len() / 2;
                (0..half).map(|j| (d[j] * d[j] + d[j + half] * d[j + half]).sqrt()).sum()
            }
            NormOrder::L1 => d.iter().map(|x| x.abs()).sum(),
        }
    }

    /// Score functions transcribed directly, OTE through dense matrices.
    pub fn score(spec: &ModelSpec, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
        let n = spec.dim;
        match spec.family {
            ModelFamily::TransE => {
                let d: Vec<f64> = (0..n).map(|k| h[k] + r[k] - t[k]).collect();
                -norm(spec, &d, false)
            }
            ModelFamily::DistMult => (0..n).map(|k| r[k] * h[k] * t[k]).sum(),
            ModelFamily::RotatE => {
                let half = n / 2;
                let mut d = vec![0.0; n];
                for j in 0..half {
                    let (c, s) = (r[j].cos(), r[j].sin());
                    d[j] = h[j] * c - h[j + half] * s - t[j];
                    d[j + half] = h[j] * s + h[j + half] * c - t[j + half];
                }
                -norm(spec, &d, true)
            }
            ModelFamily::Ote => {
                let g = spec.group_size();
                ote_dense_blocks(spec, r)
                    .iter()
                    .enumerate()
                    .map(|(b, a)| {
                        let y = matvec(a, &h[b * g..(b + 1) * g]);
                        let d: Vec<f64> = y.iter().zip(&t[b * g..(b + 1) * g]).map(|(p, q)| p - q).collect();
                        -norm(spec, &d, false)
                    })
                    .sum()
            }
        }
    }

    /// Per-entity context sums and degrees by one pass over the triplet list.
    pub fn context_sums(
        kg: &KnowledgeGraph,
        store: &EmbeddingStore<f64>,
    ) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
        let n = store.dim();
        let mut sums = vec![vec![0.0; n]; kg.num_entities];
        let mut degrees = vec![0usize; kg.num_entities];
        for t in &kg.triplets {
            let rel = store.relation(t.relation as usize);
            let into_tail = crate::model::head_context(&store.spec, store.entity(t.head as usize), rel)?;
            let into_head = crate::model::tail_context(&store.spec, store.entity(t.tail as usize), rel)?;
            for k in 0..n {
                sums[t.tail as usize][k] += into_tail[k];
                sums[t.head as usize][k] += into_head[k];
            }
            degrees[t.tail as usize] += 1;
            degrees[t.head as usize] += 1;
        }
        Ok((sums, degrees))
    }

    /// Scores every entity, sorts, and walks the sorted list to find each truth's rank.
    /// Returns `(head_ranks, tail_ranks)`.
    pub fn filtered_ranks<F: Real>(
        store: &EmbeddingStore<F>,
        test: &[Triplet],
        known: &KnownTripletSet,
        tie: TiePolicy,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut heads = Vec::new();
        let mut tails = Vec::new();
        for t in test {
            for predict_head in [true, false] {
                let mut scored: Vec<(F, u32)> = Vec::new();
                for e in 0..store.num_entities as u32 {
                    let cand = if predict_head {
                        Triplet::new(e, t.relation, t.tail)
                    } else {
                        Triplet::new(t.head, t.relation, e)
                    };
                    if cand != *t && known.contains(&cand) {
                        continue;
                    }
                    let s = crate::model::score(
                        &store.spec,
                        store.entity(cand.head as usize),
                        store.relation(cand.relation as usize),
                        store.entity(cand.tail as usize),
                    )?;
                    scored.push((F::from_f64_lossy(s), e));
                }
                scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
                let truth = if predict_head { t.head } else { t.tail };
                let truth_score = scored.iter().find(|(_, e)| *e == truth).unwrap().0;
                let first = scored.iter().position(|(s, _)| *s == truth_score).unwrap() + 1;
                let last = scored.iter().rposition(|(s, _)| *s == truth_score).unwrap() + 1;
                let rank = match tie {
                    TiePolicy::Optimistic => first as f64,
                    TiePolicy::Pessimistic => last as f64,
                    TiePolicy::Average => (first + last) as f64 / 2.0,
                };
                if predict_head {
                    heads.push(rank);
                } else {
                    tails.push(rank);
                }
            }
        }
        Ok((heads, tails))
    }

    /// Relative error `‖a − n‖ / max(‖a‖, ‖n‖)` between the closed-form gradient and central
    /// differences over `(h, t, relation)`. `None` when the point is within reach of a kink.
    pub fn gradient_relative_error(
        spec: &ModelSpec,
        h: &[f64],
        r: &[f64],
        t: &[f64],
    ) -> Result<Option<f64>> {
        let g = crate::model::score_gradient(spec, h, r, t)?;
        let near_clamp = spec.family == ModelFamily::Ote && {
            let gs = spec.group_size();
            r.chunks_exact(gs * gs + gs)
                .any(|c| c[gs * gs..].iter().any(|s| (s.abs() - 10.0).abs() < 1e-3))
        };
        if g.kink_distance < 1e-3 || near_clamp {
            return Ok(None);
        }
        let analytic: Vec<f64> = g.h.iter().chain(&g.t).chain(&g.relation).copied().collect();
        let mut params: Vec<f64> = h.iter().chain(t).chain(r).copied().collect();
        let (nh, nt) = (h.len(), t.len());
        let eval = |p: &[f64]| score(spec, &p[..nh], &p[nh + nt..], &p[nh..nh + nt]);
        let mut numeric = Vec::with_capacity(params.len());
        for k in 0..params.len() {
            let orig = params[k];
            params[k] = orig + FD_STEP;
            let up = eval(&params);
            params[k] = orig - FD_STEP;
            let down = eval(&params);
            params[k] = orig;
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
        let l2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let scale = l2(&analytic).max(l2(&numeric)).max(1e-8);
        Ok(Some(l2(&diff) / scale))
    }

    /// Sets every relation row to its family's identity: zero translation, unit diagonal,
    /// zero phase, identity OTE blocks with zero log-scale.
    pub fn set_identity_relations<F: Real>(store: &mut EmbeddingStore<F>) {
        let spec = store.spec;
        let g = spec.group_size();
        for r in 0..store.num_relations {
            let row = store.relation_mut(r);
            match spec.family {
                ModelFamily::TransE | ModelFamily::RotatE => row.fill(F::zero()),
                ModelFamily::DistMult => row.fill(F::one()),
                ModelFamily::Ote => {
                    row.fill(F::zero());
                    for chunk in row.chunks_exact_mut(g * g + g) {
                        for i in 0..g {
                            chunk[i * g + i] = F::one();
                        }
                    }
                }
            }
        }
    }
}
