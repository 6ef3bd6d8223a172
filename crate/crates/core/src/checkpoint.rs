//! Binary checkpoint format.
//!
//! Little-endian, fixed 128-byte header followed by the entity table and the relation table:
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0   | 8  | magic `REPCKPT\0` |
//! | 8   | 4  | format version (u32) |
//! | 12  | 1  | family tag: 0 transe, 1 distmult, 2 rotate, 3 ote |
//! | 13  | 1  | norm order: 1 or 2 |
//! | 14  | 1  | float width in bytes: 4 or 8 |
//! | 15  | 1  | reserved, zero |
//! | 16  | 4  | entity dimension n (u32) |
//! | 20  | 4  | OTE group count L (u32) |
//! | 24  | 8  | entity count (u64) |
//! | 32  | 8  | relation count (u64) |
//! | 40  | 8  | propagation iteration k (u64) |
//! | 48  | 8  | margin (f64) |
//! | 56  | 8  | relation row width (u64) |
//! | 64  | 32 | SHA-256 of the entity vocabulary, zero when unknown |
//! | 96  | 32 | SHA-256 of the relation vocabulary, zero when unknown |
//! | 128 | .. | `count × n` entity values, then `count × width` relation values |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::Vocab;
use crate::model::{ModelFamily, ModelSpec, NormOrder};
use crate::real::Real;
use crate::store::EmbeddingStore;

pub const MAGIC: &[u8; 8] = b"REPCKPT\0";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 128;

/// Vocabulary fingerprints stored alongside the tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VocabDigests {
    pub entities: [u8; 32],
    pub relations: [u8; 32],
}

impl VocabDigests {
    pub fn of(entities: Option<&Vocab>, relations: Option<&Vocab>) -> Self {
        Self {
            entities: entities.map(Vocab::digest).unwrap_or_default(),
            relations: relations.map(Vocab::digest).unwrap_or_default(),
        }
    }

    /// Fails if a recorded digest differs from the given vocabulary's.
    pub fn check(&self, entities: &Vocab, relations: &Vocab) -> Result<()> {
        let unset = [0u8; 32];
        if self.entities != unset && self.entities != entities.digest() {
            return Err(Error::Checkpoint(
                "entity vocabulary does not match the checkpoint".into(),
            ));
        }
        if self.relations != unset && self.relations != relations.digest() {
            return Err(Error::Checkpoint(
                "relation vocabulary does not match the checkpoint".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckpointHeader {
    pub spec: ModelSpec,
    pub float_width: u8,
    pub num_entities: u64,
    pub num_relations: u64,
    pub iteration: u64,
    pub digests: VocabDigests,
}

impl CheckpointHeader {
    pub fn payload_len(&self) -> Result<usize> {
        let values = (self.num_entities as u128) * self.spec.dim as u128
            + (self.num_relations as u128) * self.spec.relation_width() as u128;
        usize::try_from(values * self.float_width as u128)
            .map_err(|_| Error::Checkpoint("payload size overflows".into()))
    }
}

pub fn encode<F: Real>(store: &EmbeddingStore<F>, digests: &VocabDigests) -> Result<Vec<u8>> {
    store.validate()?;
    let spec = &store.spec;
    let mut out = Vec::with_capacity(
        HEADER_LEN + (store.entities.len() + store.relations.len()) * F::WIDTH as usize,
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&[spec.family.tag(), spec.norm.tag(), F::WIDTH, 0]);
    out.extend_from_slice(&(spec.dim as u32).to_le_bytes());
    out.extend_from_slice(&(spec.ote_groups as u32).to_le_bytes());
    out.extend_from_slice(&(store.num_entities as u64).to_le_bytes());
    out.extend_from_slice(&(store.num_relations as u64).to_le_bytes());
    out.extend_from_slice(&store.iteration.to_le_bytes());
    out.extend_from_slice(&spec.margin.to_le_bytes());
    out.extend_from_slice(&(spec.relation_width() as u64).to_le_bytes());
    out.extend_from_slice(&digests.entities);
    out.extend_from_slice(&digests.relations);
    debug_assert_eq!(out.len(), HEADER_LEN);
    for &x in store.entities.iter().chain(&store.relations) {
        x.write_le(&mut out);
    }
    Ok(out)
}

pub fn decode_header(bytes: &[u8]) -> Result<CheckpointHeader> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checkpoint(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(8);
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let family = ModelFamily::from_tag(bytes[12])
        .ok_or_else(|| Error::Checkpoint(format!("unknown family tag {}", bytes[12])))?;
    let norm = NormOrder::from_tag(bytes[13])
        .ok_or_else(|| Error::Checkpoint(format!("unknown norm tag {}", bytes[13])))?;
    let float_width = bytes[14];
    if float_width != 4 && float_width != 8 {
        return Err(Error::Checkpoint(format!("unsupported float width {float_width}")));
    }
    let spec = ModelSpec {
        family,
        dim: u32_at(16) as usize,
        margin: f64::from_le_bytes(bytes[48..56].try_into().unwrap()),
        norm,
        ote_groups: u32_at(20) as usize,
    };
    spec.validate()
        .map_err(|e| Error::Checkpoint(format!("header describes an invalid model: {e}")))?;
    if u64_at(56) != spec.relation_width() as u64 {
        return Err(Error::Checkpoint(format!(
            "relation width {} does not match the model ({})",
            u64_at(56),
            spec.relation_width()
        )));
    }
    let mut digests = VocabDigests::default();
    digests.entities.copy_from_slice(&bytes[64..96]);
    digests.relations.copy_from_slice(&bytes[96..128]);
    Ok(CheckpointHeader {
        spec,
        float_width,
        num_entities: u64_at(24),
        num_relations: u64_at(32),
        iteration: u64_at(40),
        digests,
    })
}

/// Decodes a checkpoint, converting values to `F` when the stored width differs.
pub fn decode<F: Real>(bytes: &[u8]) -> Result<(EmbeddingStore<F>, CheckpointHeader)> {
    let header = decode_header(bytes)?;
    let payload = &bytes[HEADER_LEN..];
    let expected = header.payload_len()?;
    if payload.len() != expected {
        return Err(Error::Checkpoint(format!(
            "payload is {} bytes, header declares {expected}",
            payload.len()
        )));
    }
    let values: Vec<F> = match header.float_width {
        4 => payload
            .chunks_exact(4)
            .map(|c| F::from_f64_lossy(f32::read_le(c) as f64))
            .collect(),
        _ => payload
            .chunks_exact(8)
            .map(|c| F::from_f64_lossy(f64::read_le(c)))
            .collect(),
    };
    let split = header.num_entities as usize * header.spec.dim;
    let mut entities = values;
    let relations = entities.split_off(split);
    let store = EmbeddingStore {
        spec: header.spec,
        num_entities: header.num_entities as usize,
        num_relations: header.num_relations as usize,
        entities,
        relations,
        iteration: header.iteration,
    };
    store
        .validate()
        .map_err(|e| Error::Checkpoint(format!("invalid payload: {e}")))?;
    Ok((store, header))
}

/// Writes to a sibling temporary file and renames it into place.
pub fn save<F: Real>(path: impl AsRef<Path>, store: &EmbeddingStore<F>, digests: &VocabDigests) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(store, digests)?;
    write_atomic(path, &bytes)
}

pub fn load<F: Real>(path: impl AsRef<Path>) -> Result<(EmbeddingStore<F>, CheckpointHeader)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes).map_err(|e| match e {
        Error::Checkpoint(m) => Error::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmbeddingStore<f32> {
        let spec = ModelSpec::new(ModelFamily::Ote, 4).with_groups(2).with_margin(6.0);
        let mut s = EmbeddingStore::random(spec, 5, 3, 11).unwrap();
        s.iteration = 7;
        s
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&sample(), &VocabDigests::default()).unwrap();
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(bytes[12], 3);
        assert_eq!(bytes[14], 4);
        assert_eq!(u64::from_le_bytes(bytes[40..48].try_into().unwrap()), 7);
        assert_eq!(bytes.len(), HEADER_LEN + (5 * 4 + 3 * 2 * 6) * 4);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let bytes = encode(&sample(), &VocabDigests::default()).unwrap();
        assert!(decode::<f32>(&bytes[..bytes.len() - 1]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(decode::<f32>(&longer).is_err());
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let mut bytes = encode(&sample(), &VocabDigests::default()).unwrap();
        bytes[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode::<f32>(&bytes).is_err());
    }

    #[test]
    fn widening_preserves_values() {
        let s = sample();
        let bytes = encode(&s, &VocabDigests::default()).unwrap();
        let (wide, header) = decode::<f64>(&bytes).unwrap();
        assert_eq!(header.float_width, 4);
        assert_eq!(wide.convert::<f32>(), s);
    }

    #[test]
    fn digest_mismatch() {
        let a = Vocab::from_labels(["x", "y"]).unwrap();
        let b = Vocab::from_labels(["y", "x"]).unwrap();
        let d = VocabDigests::of(Some(&a), Some(&a));
        d.check(&a, &a).unwrap();
        assert!(d.check(&b, &a).is_err());
        VocabDigests::default().check(&b, &b).unwrap();
    }
}
