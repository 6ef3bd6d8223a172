//! Link-prediction ranking: MRR and Hits@{1,3,10} under the filtered protocol or
//! with supplied candidate lists.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{KnownTripletSet, Triplet};
use crate::model::PreparedRelation;
use crate::real::Real;
use crate::store::EmbeddingStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// Mean of the ranks the tied block spans.
    #[default]
    Average,
    /// Truth placed first among its ties.
    Optimistic,
    /// Truth placed last among its ties.
    Pessimistic,
}

impl FromStr for TiePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "average" => Ok(TiePolicy::Average),
            "optimistic" => Ok(TiePolicy::Optimistic),
            "pessimistic" => Ok(TiePolicy::Pessimistic),
            other => Err(Error::Config(format!("unknown tie policy {other:?}"))),
        }
    }
}

impl TiePolicy {
    /// Rank given how many candidates score strictly above and exactly equal to the truth.
    pub fn rank(self, greater: usize, equal: usize) -> f64 {
        match self {
            TiePolicy::Optimistic => (greater + 1) as f64,
            TiePolicy::Pessimistic => (greater + equal + 1) as f64,
            TiePolicy::Average => greater as f64 + 1.0 + equal as f64 / 2.0,
        }
    }
}

/// Ranks a truth score against candidate scores (descending order, exact equality is a tie).
pub fn rank_of<F: Real>(truth: F, candidates: impl IntoIterator<Item = F>, tie: TiePolicy) -> f64 {
    let (greater, equal) = count_against(truth, candidates);
    tie.rank(greater, equal)
}

fn count_against<F: Real>(truth: F, candidates: impl IntoIterator<Item = F>) -> (usize, usize) {
    let mut greater = 0;
    let mut equal = 0;
    for s in candidates {
        if s > truth {
            greater += 1;
        } else if s == truth {
            equal += 1;
        }
    }
    (greater, equal)
}

/// Which side of a test triplet is hidden and predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `(?, r, t)`
    Head,
    /// `(h, r, ?)`
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Query {
    pub triplet: Triplet,
    pub direction: Direction,
}

impl Query {
    pub fn truth(&self) -> u32 {
        match self.direction {
            Direction::Head => self.triplet.head,
            Direction::Tail => self.triplet.tail,
        }
    }
}

/// Scores `(h, r, e)` for every entity `e`, rounded to the store width.
pub fn score_all_tails<F: Real>(
    store: &EmbeddingStore<F>,
    relation: &PreparedRelation,
    head: u32,
) -> Vec<F> {
    let mapped = relation.head_context(store.entity(head as usize));
    (0..store.num_entities)
        .map(|e| F::from_f64_lossy(relation.score_from_head(&store.spec, &mapped, store.entity(e))))
        .collect()
}

/// Scores `(e, r, t)` for every entity `e`, rounded to the store width.
pub fn score_all_heads<F: Real>(
    store: &EmbeddingStore<F>,
    relation: &PreparedRelation,
    tail: u32,
) -> Vec<F> {
    let t = store.entity(tail as usize);
    (0..store.num_entities)
        .map(|e| F::from_f64_lossy(relation.score(&store.spec, store.entity(e), t)))
        .collect()
}

fn check_query<F: Real>(store: &EmbeddingStore<F>, q: &Query, index: usize) -> Result<()> {
    let t = q.triplet;
    let bad_entity = t.head as usize >= store.num_entities || t.tail as usize >= store.num_entities;
    if bad_entity || t.relation as usize >= store.num_relations {
        return Err(Error::Query {
            index,
            message: format!("triplet {t:?} out of range for the store"),
        });
    }
    Ok(())
}

/// Rank of the query's truth among itself and `candidates` (ids equal to the truth are skipped).
pub fn rank_query<F: Real>(
    store: &EmbeddingStore<F>,
    relations: &[PreparedRelation],
    query: &Query,
    candidates: &[u32],
    tie: TiePolicy,
) -> Result<f64> {
    check_query(store, query, 0)?;
    let rel = &relations[query.triplet.relation as usize];
    let truth = query.truth();
    let score_of = |e: u32| -> F {
        let mut t = query.triplet;
        match query.direction {
            Direction::Head => t.head = e,
            Direction::Tail => t.tail = e,
        }
        F::from_f64_lossy(rel.score(
            &store.spec,
            store.entity(t.head as usize),
            store.entity(t.tail as usize),
        ))
    };
    let truth_score = score_of(truth);
    for &c in candidates {
        if c as usize >= store.num_entities {
            return Err(Error::Query {
                index: 0,
                message: format!("candidate {c} out of range"),
            });
        }
    }
    Ok(rank_of(
        truth_score,
        candidates.iter().filter(|&&c| c != truth).map(|&c| score_of(c)),
        tie,
    ))
}

/// Evaluation protocol.
#[derive(Debug, Clone, Copy)]
pub enum Protocol<'a> {
    /// Rank against every entity not forming a known triplet; head and tail queries.
    Filtered(&'a KnownTripletSet),
    /// Tail queries only, against the `i`-th candidate list for test triplet `i`.
    /// With a filter, candidates forming known triplets are skipped.
    Candidates {
        lists: &'a [Vec<u32>],
        filter: Option<&'a KnownTripletSet>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub num_queries: usize,
}

impl DirectionReport {
    pub fn from_ranks(ranks: &[f64]) -> Option<Self> {
        if ranks.is_empty() {
            return None;
        }
        let n = ranks.len() as f64;
        let hits = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
        Some(Self {
            mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
            hits1: hits(1.0),
            hits3: hits(3.0),
            hits10: hits(10.0),
            num_queries: ranks.len(),
        })
    }
}

/// MRR and Hits@K over all queries, with per-direction breakdown.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingReport {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub head: Option<DirectionReport>,
    pub tail: Option<DirectionReport>,
    pub num_queries: usize,
}

impl RankingReport {
    pub fn from_ranks(head_ranks: &[f64], tail_ranks: &[f64]) -> Self {
        let all: Vec<f64> = head_ranks.iter().chain(tail_ranks).copied().collect();
        let overall = DirectionReport::from_ranks(&all).unwrap_or(DirectionReport {
            mrr: 0.0,
            hits1: 0.0,
            hits3: 0.0,
            hits10: 0.0,
            num_queries: 0,
        });
        Self {
            mrr: overall.mrr,
            hits1: overall.hits1,
            hits3: overall.hits3,
            hits10: overall.hits10,
            head: DirectionReport::from_ranks(head_ranks),
            tail: DirectionReport::from_ranks(tail_ranks),
            num_queries: all.len(),
        }
    }

    /// Hits monotone in K and `hits@1 <= mrr <= 1`, for the whole report and each direction.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let parts = [
            (
                "overall",
                Some(DirectionReport {
                    mrr: self.mrr,
                    hits1: self.hits1,
                    hits3: self.hits3,
                    hits10: self.hits10,
                    num_queries: self.num_queries,
                }),
            ),
            ("head", self.head),
            ("tail", self.tail),
        ];
        for (name, part) in parts {
            let Some(p) = part else { continue };
            if p.num_queries == 0 {
                continue;
            }
            if !(p.hits1 <= p.hits3 && p.hits3 <= p.hits10) {
                return Err(format!("{name}: hits not monotone ({p:?})"));
            }
            if !(p.mrr > 0.0 && p.mrr <= 1.0) {
                return Err(format!("{name}: mrr {} outside (0, 1]", p.mrr));
            }
            if p.mrr < p.hits1 {
                return Err(format!("{name}: mrr {} below hits@1 {}", p.mrr, p.hits1));
            }
            for (k, h) in [(1.0, p.hits1), (3.0, p.hits3), (10.0, p.hits10)] {
                if p.mrr > h + 1.0 / (k + 1.0) + 1e-12 {
                    return Err(format!("{name}: mrr {} above hits@{k} + 1/{}", p.mrr, k + 1.0));
                }
            }
        }
        Ok(())
    }

    pub const CSV_HEADER: &'static str = "mrr,hits1,hits3,hits10,num_queries";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.mrr, self.hits1, self.hits3, self.hits10, self.num_queries
        )
    }
}

/// Ranks of every query, in test order. `head` is empty under the candidate protocol.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ranks {
    pub head: Vec<f64>,
    pub tail: Vec<f64>,
}

pub fn evaluate<F: Real>(
    store: &EmbeddingStore<F>,
    test: &[Triplet],
    protocol: Protocol<'_>,
    tie: TiePolicy,
) -> Result<RankingReport> {
    let ranks = compute_ranks(store, test, protocol, tie)?;
    Ok(RankingReport::from_ranks(&ranks.head, &ranks.tail))
}

/// Same as [`evaluate`] with relations prepared by the caller (reused across sweeps).
pub fn evaluate_prepared<F: Real>(
    store: &EmbeddingStore<F>,
    relations: &[PreparedRelation],
    test: &[Triplet],
    protocol: Protocol<'_>,
    tie: TiePolicy,
) -> Result<RankingReport> {
    let ranks = compute_ranks_prepared(store, relations, test, protocol, tie)?;
    Ok(RankingReport::from_ranks(&ranks.head, &ranks.tail))
}

pub fn compute_ranks<F: Real>(
    store: &EmbeddingStore<F>,
    test: &[Triplet],
    protocol: Protocol<'_>,
    tie: TiePolicy,
) -> Result<Ranks> {
    let relations = store.prepare_relations()?;
    compute_ranks_prepared(store, &relations, test, protocol, tie)
}

fn compute_ranks_prepared<F: Real>(
    store: &EmbeddingStore<F>,
    relations: &[PreparedRelation],
    test: &[Triplet],
    protocol: Protocol<'_>,
    tie: TiePolicy,
) -> Result<Ranks> {
    for (i, t) in test.iter().enumerate() {
        check_query(
            store,
            &Query {
                triplet: *t,
                direction: Direction::Tail,
            },
            i,
        )?;
    }
    match protocol {
        Protocol::Filtered(known) => {
            let pairs: Vec<(f64, f64)> = test
                .par_iter()
                .map(|t| {
                    let rel = &relations[t.relation as usize];
                    let tails = score_all_tails(store, rel, t.head);
                    let tail_rank =
                        filtered_rank(&tails, t.tail, known.known_tails(t.head, t.relation), tie);
                    let heads = score_all_heads(store, rel, t.tail);
                    let head_rank =
                        filtered_rank(&heads, t.head, known.known_heads(t.relation, t.tail), tie);
                    (head_rank, tail_rank)
                })
                .collect();
            let (head, tail) = pairs.into_iter().unzip();
            Ok(Ranks { head, tail })
        }
        Protocol::Candidates { lists, filter } => {
            if lists.len() < test.len() {
                return Err(Error::Query {
                    index: lists.len(),
                    message: "no candidate line for this test triplet".into(),
                });
            }
            let tail = test
                .par_iter()
                .zip(lists.par_iter())
                .enumerate()
                .map(|(i, (t, list))| {
                    let rel = &relations[t.relation as usize];
                    let mapped = rel.head_context(store.entity(t.head as usize));
                    let score = |e: u32| {
                        F::from_f64_lossy(rel.score_from_head(
                            &store.spec,
                            &mapped,
                            store.entity(e as usize),
                        ))
                    };
                    if let Some(&bad) = list.iter().find(|&&e| e as usize >= store.num_entities) {
                        return Err(Error::Query {
                            index: i,
                            message: format!("candidate {bad} out of range"),
                        });
                    }
                    let candidates = list.iter().copied().filter(|&e| {
                        e != t.tail
                            && !filter
                                .is_some_and(|k| k.contains(&Triplet::new(t.head, t.relation, e)))
                    });
                    Ok(rank_of(score(t.tail), candidates.map(score), tie))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Ranks {
                head: Vec::new(),
                tail,
            })
        }
    }
}

/// Rank of `scores[truth]` among all other entities minus the known ones.
fn filtered_rank<F: Real>(scores: &[F], truth: u32, known: &[u32], tie: TiePolicy) -> f64 {
    let truth_score = scores[truth as usize];
    let (mut greater, mut equal) = count_against(truth_score, scores.iter().copied());
    // the truth ties with itself
    equal -= 1;
    for &k in known {
        if k == truth {
            continue;
        }
        let s = scores[k as usize];
        if s > truth_score {
            greater -= 1;
        } else if s == truth_score {
            equal -= 1;
        }
    }
    tie.rank(greater, equal)
}
