use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{ModelFamily, ModelSpec, PreparedRelation};
use crate::real::Real;

/// Dense entity table plus per-relation parameter rows.
///
/// Entity `i` occupies `entities[i * dim..(i + 1) * dim]`. A relation row holds
/// `spec.relation_width()` scalars: the vector itself for TransE and DistMult,
/// `dim / 2` phase angles for RotatE, and for OTE one `g × g` raw matrix
/// (row-major) followed by `g` log-scales per group.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore<F> {
    pub spec: ModelSpec,
    pub num_entities: usize,
    pub num_relations: usize,
    pub entities: Vec<F>,
    pub relations: Vec<F>,
    /// Number of propagation hops applied since training.
    pub iteration: u64,
}

impl<F: Real> EmbeddingStore<F> {
    pub fn zeros(spec: ModelSpec, num_entities: usize, num_relations: usize) -> Result<Self> {
        spec.validate()?;
        Ok(Self {
            spec,
            num_entities,
            num_relations,
            entities: vec![F::zero(); num_entities * spec.dim],
            relations: vec![F::zero(); num_relations * spec.relation_width()],
            iteration: 0,
        })
    }

    /// Random initialization used before training.
    ///
    /// Entities and TransE/DistMult relations: uniform(−6/√n, 6/√n). RotatE phases:
    /// uniform(−π, π). OTE: raw matrix entries uniform(−0.1, 0.1), log-scales zero.
    pub fn random(spec: ModelSpec, num_entities: usize, num_relations: usize, seed: u64) -> Result<Self> {
        let mut store = Self::zeros(spec, num_entities, num_relations)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 6.0 / (spec.dim as f64).sqrt();
        for x in store.entities.iter_mut() {
            *x = F::from_f64_lossy(rng.gen_range(-bound..bound));
        }
        match spec.family {
            ModelFamily::TransE | ModelFamily::DistMult => {
                for x in store.relations.iter_mut() {
                    *x = F::from_f64_lossy(rng.gen_range(-bound..bound));
                }
            }
            ModelFamily::RotatE => {
                let pi = std::f64::consts::PI;
                for x in store.relations.iter_mut() {
                    *x = F::from_f64_lossy(rng.gen_range(-pi..pi));
                }
            }
            ModelFamily::Ote => {
                let g = spec.group_size();
                for chunk in store.relations.chunks_exact_mut(g * g + g) {
                    for x in &mut chunk[..g * g] {
                        *x = F::from_f64_lossy(rng.gen_range(-0.1..0.1));
                    }
                }
            }
        }
        Ok(store)
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn entity(&self, i: usize) -> &[F] {
        let n = self.spec.dim;
        &self.entities[i * n..(i + 1) * n]
    }

    pub fn entity_mut(&mut self, i: usize) -> &mut [F] {
        let n = self.spec.dim;
        &mut self.entities[i * n..(i + 1) * n]
    }

    pub fn relation(&self, r: usize) -> &[F] {
        let w = self.spec.relation_width();
        &self.relations[r * w..(r + 1) * w]
    }

    pub fn relation_mut(&mut self, r: usize) -> &mut [F] {
        let w = self.spec.relation_width();
        &mut self.relations[r * w..(r + 1) * w]
    }

    /// Checks that table lengths agree with the declared sizes and that every value is finite.
    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.entities.len() != self.num_entities * self.spec.dim {
            return Err(Error::Dimension {
                expected: self.num_entities * self.spec.dim,
                got: self.entities.len(),
            });
        }
        if self.relations.len() != self.num_relations * self.spec.relation_width() {
            return Err(Error::Dimension {
                expected: self.num_relations * self.spec.relation_width(),
                got: self.relations.len(),
            });
        }
        if let Some(pos) = self.entities.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value in entity {}",
                pos / self.spec.dim
            )));
        }
        if let Some(pos) = self.relations.iter().position(|x| !x.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite value in relation {}",
                pos / self.spec.relation_width().max(1)
            )));
        }
        Ok(())
    }

    /// Prepares every relation once (runs Gram-Schmidt for OTE).
    pub fn prepare_relations(&self) -> Result<Vec<PreparedRelation>> {
        (0..self.num_relations)
            .into_par_iter()
            .map(|r| PreparedRelation::new(&self.spec, self.relation(r)))
            .collect()
    }

    pub fn convert<G: Real>(&self) -> EmbeddingStore<G> {
        EmbeddingStore {
            spec: self.spec,
            num_entities: self.num_entities,
            num_relations: self.num_relations,
            entities: self.entities.iter().map(|x| G::from_f64_lossy(x.as_f64())).collect(),
            relations: self.relations.iter().map(|x| G::from_f64_lossy(x.as_f64())).collect(),
            iteration: self.iteration,
        }
    }
}
