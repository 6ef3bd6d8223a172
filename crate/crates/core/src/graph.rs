//! Triplet storage, label vocabularies and the head/tail adjacency index.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triplet {
    pub head: u32,
    pub relation: u32,
    pub tail: u32,
}

impl Triplet {
    pub const fn new(head: u32, relation: u32, tail: u32) -> Self {
        Self {
            head,
            relation,
            tail,
        }
    }
}

/// Bidirectional map between raw labels and dense ids.
///
/// Ids are assigned in order of first insertion, so `labels[id]` is the label for `id`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocab {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_labels<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Self::new();
        for label in labels {
            let label = label.into();
            if vocab.index.contains_key(&label) {
                return Err(Error::Data(format!("duplicate vocabulary label {label:?}")));
            }
            vocab.intern(&label);
        }
        Ok(vocab)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> Option<&str> {
        self.labels.get(id as usize).map(String::as_str)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Returns the id for `label`, assigning the next free id if it is new.
    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = u32::try_from(self.labels.len()).expect("vocabulary exceeds u32 ids");
        self.labels.push(label.to_owned());
        self.index.insert(label.to_owned(), id);
        id
    }

    /// SHA-256 over the newline-joined labels in id order.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for label in &self.labels {
            hasher.update(label.as_bytes());
            hasher.update(b"\n");
        }
        hasher.finalize().into()
    }

    /// Reads a `label<TAB>id` file. Ids must be dense and unique.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut slots: Vec<Option<String>> = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_owned(),
                line: lineno + 1,
                message,
            };
            let (label, id) = line
                .rsplit_once('\t')
                .ok_or_else(|| parse_err("expected label<TAB>id".into()))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("invalid id {id:?}")))?;
            if id >= slots.len() {
                slots.resize(id + 1, None);
            }
            if slots[id].replace(label.to_owned()).is_some() {
                return Err(parse_err(format!("id {id} assigned twice")));
            }
        }
        let labels = slots
            .into_iter()
            .enumerate()
            .map(|(id, s)| s.ok_or_else(|| Error::Data(format!("{}: id {id} missing", path.display()))))
            .collect::<Result<Vec<_>>>()?;
        Self::from_labels(labels)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        for (id, label) in self.labels.iter().enumerate() {
            out.push_str(label);
            out.push('\t');
            out.push_str(&id.to_string());
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// How labels in a triplet file are mapped to ids.
#[derive(Debug, Clone, Copy)]
pub enum VocabMode<'a> {
    /// Assign ids by first appearance.
    Build,
    /// Every label must already exist in the given vocabularies.
    Reuse {
        entities: &'a Vocab,
        relations: &'a Vocab,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct KnowledgeGraph {
    pub num_entities: usize,
    pub num_relations: usize,
    pub triplets: Vec<Triplet>,
    pub entity_names: Option<Vocab>,
    pub relation_names: Option<Vocab>,
}

impl KnowledgeGraph {
    /// Builds an unlabelled graph, validating ids against the given counts.
    pub fn from_ids(
        num_entities: usize,
        num_relations: usize,
        triplets: Vec<Triplet>,
    ) -> Result<Self> {
        for (i, t) in triplets.iter().enumerate() {
            if t.head as usize >= num_entities || t.tail as usize >= num_entities {
                return Err(Error::Data(format!(
                    "triplet {i}: entity id out of range ({} entities)",
                    num_entities
                )));
            }
            if t.relation as usize >= num_relations {
                return Err(Error::Data(format!(
                    "triplet {i}: relation id {} out of range ({} relations)",
                    t.relation, num_relations
                )));
            }
        }
        Ok(Self {
            num_entities,
            num_relations,
            triplets,
            entity_names: None,
            relation_names: None,
        })
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Same vocabularies, different triplets. Used to build split views.
    pub fn with_triplets(&self, triplets: Vec<Triplet>) -> Self {
        Self {
            num_entities: self.num_entities,
            num_relations: self.num_relations,
            triplets,
            entity_names: self.entity_names.clone(),
            relation_names: self.relation_names.clone(),
        }
    }

    /// Writes canonical TSV (`head<TAB>relation<TAB>tail\n`) using labels when available.
    pub fn save_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        for t in &self.triplets {
            writeln!(
                out,
                "{}\t{}\t{}",
                label_or_id(self.entity_names.as_ref(), t.head),
                label_or_id(self.relation_names.as_ref(), t.relation),
                label_or_id(self.entity_names.as_ref(), t.tail),
            )
            .map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

fn label_or_id(vocab: Option<&Vocab>, id: u32) -> String {
    vocab
        .and_then(|v| v.label(id))
        .map(str::to_owned)
        .unwrap_or_else(|| id.to_string())
}

/// Loads a tab-separated `head<TAB>relation<TAB>tail` file.
pub fn load_triplets(path: impl AsRef<Path>, mode: VocabMode<'_>) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    match mode {
        VocabMode::Build => {
            let mut entities = Vocab::new();
            let mut relations = Vocab::new();
            let triplets = read_into(path, &mut entities, &mut relations, true)?;
            Ok(KnowledgeGraph {
                num_entities: entities.len(),
                num_relations: relations.len(),
                triplets,
                entity_names: Some(entities),
                relation_names: Some(relations),
            })
        }
        VocabMode::Reuse {
            entities,
            relations,
        } => {
            let mut e = entities.clone();
            let mut r = relations.clone();
            let triplets = read_into(path, &mut e, &mut r, false)?;
            Ok(KnowledgeGraph {
                num_entities: e.len(),
                num_relations: r.len(),
                triplets,
                entity_names: Some(e),
                relation_names: Some(r),
            })
        }
    }
}

fn read_into(
    path: &Path,
    entities: &mut Vocab,
    relations: &mut Vocab,
    grow: bool,
) -> Result<Vec<Triplet>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut triplets = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: lineno + 1,
                message: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let lookup = |vocab: &mut Vocab, kind: &'static str, label: &str| {
            if grow {
                Ok(vocab.intern(label))
            } else {
                vocab.get(label).ok_or_else(|| Error::UnknownLabel {
                    path: path.to_owned(),
                    line: lineno + 1,
                    kind,
                    label: label.to_owned(),
                })
            }
        };
        let head = lookup(entities, "entity", fields[0])?;
        let relation = lookup(relations, "relation", fields[1])?;
        let tail = lookup(entities, "entity", fields[2])?;
        triplets.push(Triplet::new(head, relation, tail));
    }
    Ok(triplets)
}

/// Per-entity neighbor lists in CSR layout.
///
/// `outgoing` holds, for entity `i`, the `(tail, relation)` pairs of triplets where
/// `i` is the head; `incoming` holds the `(head, relation)` pairs where `i` is the tail.
/// Entries keep the triplet order of the source graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyIndex {
    num_entities: usize,
    out_offsets: Vec<usize>,
    out_pairs: Vec<(u32, u32)>,
    in_offsets: Vec<usize>,
    in_pairs: Vec<(u32, u32)>,
}

impl AdjacencyIndex {
    pub fn build(kg: &KnowledgeGraph) -> Self {
        let n = kg.num_entities;
        let (out_offsets, out_pairs) = csr(n, kg.triplets.iter().map(|t| (t.head, (t.tail, t.relation))));
        let (in_offsets, in_pairs) = csr(n, kg.triplets.iter().map(|t| (t.tail, (t.head, t.relation))));
        Self {
            num_entities: n,
            out_offsets,
            out_pairs,
            in_offsets,
            in_pairs,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.num_entities
    }

    /// `(tail, relation)` pairs of triplets headed by `entity`.
    pub fn outgoing(&self, entity: usize) -> &[(u32, u32)] {
        &self.out_pairs[self.out_offsets[entity]..self.out_offsets[entity + 1]]
    }

    /// `(head, relation)` pairs of triplets whose tail is `entity`.
    pub fn incoming(&self, entity: usize) -> &[(u32, u32)] {
        &self.in_pairs[self.in_offsets[entity]..self.in_offsets[entity + 1]]
    }

    pub fn degree(&self, entity: usize) -> usize {
        self.outgoing(entity).len() + self.incoming(entity).len()
    }

    pub fn num_outgoing(&self) -> usize {
        self.out_pairs.len()
    }

    pub fn num_incoming(&self) -> usize {
        self.in_pairs.len()
    }

    /// Reconstructs the triplet multiset from the outgoing lists, grouped by head.
    pub fn triplets_from_outgoing(&self) -> Vec<Triplet> {
        (0..self.num_entities)
            .flat_map(|h| {
                self.outgoing(h)
                    .iter()
                    .map(move |&(t, r)| Triplet::new(h as u32, r, t))
            })
            .collect()
    }
}

fn csr(
    n: usize,
    entries: impl Iterator<Item = (u32, (u32, u32))> + Clone,
) -> (Vec<usize>, Vec<(u32, u32)>) {
    let mut offsets = vec![0usize; n + 1];
    for (row, _) in entries.clone() {
        offsets[row as usize + 1] += 1;
    }
    for i in 0..n {
        offsets[i + 1] += offsets[i];
    }
    let mut cursor = offsets.clone();
    let mut pairs = vec![(0u32, 0u32); offsets[n]];
    for (row, pair) in entries {
        let slot = &mut cursor[row as usize];
        pairs[*slot] = pair;
        *slot += 1;
    }
    (offsets, pairs)
}

/// Membership structure over every known triplet (all splits).
#[derive(Debug, Clone, Default)]
pub struct KnownTripletSet {
    set: HashSet<Triplet>,
    tails: HashMap<(u32, u32), Vec<u32>>,
    heads: HashMap<(u32, u32), Vec<u32>>,
}

impl KnownTripletSet {
    pub fn new<'a>(triplets: impl IntoIterator<Item = &'a Triplet>) -> Self {
        let mut known = Self::default();
        for &t in triplets {
            known.insert(t);
        }
        known
    }

    pub fn from_graphs(graphs: &[&KnowledgeGraph]) -> Self {
        Self::new(graphs.iter().flat_map(|g| g.triplets.iter()))
    }

    pub fn insert(&mut self, t: Triplet) -> bool {
        if !self.set.insert(t) {
            return false;
        }
        self.tails.entry((t.head, t.relation)).or_default().push(t.tail);
        self.heads.entry((t.relation, t.tail)).or_default().push(t.head);
        true
    }

    pub fn contains(&self, t: &Triplet) -> bool {
        self.set.contains(t)
    }

    /// Number of distinct triplets.
    pub fn len(&self) -> usize {
        self.set.len()
    }

    pub fn is_empty(&self) -> bool {
        self.set.is_empty()
    }

    /// Every `t` with `(head, relation, t)` known.
    pub fn known_tails(&self, head: u32, relation: u32) -> &[u32] {
        self.tails
            .get(&(head, relation))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Every `h` with `(h, relation, tail)` known.
    pub fn known_heads(&self, relation: u32, tail: u32) -> &[u32] {
        self.heads
            .get(&(relation, tail))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }
}

/// Train/valid/test splits sharing one pair of vocabularies.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: KnowledgeGraph,
    pub valid: KnowledgeGraph,
    pub test: KnowledgeGraph,
}

impl Dataset {
    /// Loads `train.txt`, `valid.txt` and `test.txt` from `dir`.
    ///
    /// When `entities.dict`/`relations.dict` (`label<TAB>id`) exist they fix the ids;
    /// otherwise ids are assigned by first appearance across train, valid, test in that order.
    /// A missing `valid.txt` or `test.txt` yields an empty split.
    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let train_path = split_path(dir, "train");
        if !train_path.exists() {
            return Err(Error::io(
                &train_path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "training split not found"),
            ));
        }
        let ent_dict = dir.join("entities.dict");
        let rel_dict = dir.join("relations.dict");
        let (mut entities, mut relations, grow) = if ent_dict.exists() && rel_dict.exists() {
            (Vocab::load(&ent_dict)?, Vocab::load(&rel_dict)?, false)
        } else {
            (Vocab::new(), Vocab::new(), true)
        };
        let mut splits = Vec::with_capacity(3);
        for name in ["train", "valid", "test"] {
            let path = split_path(dir, name);
            let triplets = if path.exists() {
                read_into(&path, &mut entities, &mut relations, grow)?
            } else {
                Vec::new()
            };
            splits.push(triplets);
        }
        let base = KnowledgeGraph {
            num_entities: entities.len(),
            num_relations: relations.len(),
            triplets: Vec::new(),
            entity_names: Some(entities),
            relation_names: Some(relations),
        };
        let test = base.with_triplets(splits.pop().unwrap());
        let valid = base.with_triplets(splits.pop().unwrap());
        let train = base.with_triplets(splits.pop().unwrap());
        Ok(Self { train, valid, test })
    }

    pub fn entity_vocab(&self) -> &Vocab {
        self.train.entity_names.as_ref().expect("datasets carry vocabularies")
    }

    pub fn relation_vocab(&self) -> &Vocab {
        self.train.relation_names.as_ref().expect("datasets carry vocabularies")
    }

    pub fn known_triplets(&self) -> KnownTripletSet {
        KnownTripletSet::from_graphs(&[&self.train, &self.valid, &self.test])
    }

    pub fn split(&self, name: &str) -> Result<&KnowledgeGraph> {
        match name {
            "train" => Ok(&self.train),
            "valid" => Ok(&self.valid),
            "test" => Ok(&self.test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

fn split_path(dir: &Path, name: &str) -> PathBuf {
    let txt = dir.join(format!("{name}.txt"));
    if txt.exists() {
        return txt;
    }
    let tsv = dir.join(format!("{name}.tsv"));
    if tsv.exists() {
        tsv
    } else {
        txt
    }
}

/// Reads a candidate file: line `i` lists the space-separated entity labels ranked
/// against the tail of test triplet `i`.
pub fn load_candidates(path: impl AsRef<Path>, entities: &Vocab) -> Result<Vec<Vec<u32>>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lists = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let ids = line
            .split_whitespace()
            .map(|label| {
                entities.get(label).ok_or_else(|| Error::UnknownLabel {
                    path: path.to_owned(),
                    line: lineno + 1,
                    kind: "entity",
                    label: label.to_owned(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        lists.push(ids);
    }
    Ok(lists)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn three_line_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.tsv", "a\tr1\tb\nb\tr1\tc\na\tr2\tc\n");
        let kg = load_triplets(&p, VocabMode::Build).unwrap();
        assert_eq!((kg.num_entities, kg.num_relations, kg.len()), (3, 2, 3));
        assert_eq!(kg.triplets[2], Triplet::new(0, 1, 2));
    }

    #[test]
    fn empty_file_is_empty_graph() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.tsv", "");
        let kg = load_triplets(&p, VocabMode::Build).unwrap();
        assert_eq!((kg.num_entities, kg.num_relations, kg.len()), (0, 0, 0));
    }

    #[test]
    fn wrong_field_count_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "t.tsv", "a\tr\tb\na\tr\n");
        match load_triplets(&p, VocabMode::Build) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn reuse_mode_rejects_unknown_label() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.tsv", "a\tr\tb\n");
        let q = write(dir.path(), "b.tsv", "a\tr\tb\na\tr\tzz\n");
        let kg = load_triplets(&p, VocabMode::Build).unwrap();
        let err = load_triplets(
            &q,
            VocabMode::Reuse {
                entities: kg.entity_names.as_ref().unwrap(),
                relations: kg.relation_names.as_ref().unwrap(),
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { line: 2, ref label, .. } if label == "zz"));
    }

    #[test]
    fn single_edge_adjacency() {
        let kg = KnowledgeGraph::from_ids(2, 1, vec![Triplet::new(0, 0, 1)]).unwrap();
        let adj = AdjacencyIndex::build(&kg);
        assert_eq!(adj.outgoing(0), &[(1, 0)]);
        assert_eq!(adj.incoming(1), &[(0, 0)]);
        assert!(adj.outgoing(1).is_empty());
        assert!(adj.incoming(0).is_empty());
    }

    #[test]
    fn duplicate_triplets_are_kept() {
        let kg = KnowledgeGraph::from_ids(2, 1, vec![Triplet::new(0, 0, 1); 2]).unwrap();
        let adj = AdjacencyIndex::build(&kg);
        assert_eq!(adj.outgoing(0).len(), 2);
        assert_eq!(adj.degree(1), 2);
    }

    #[test]
    fn from_ids_rejects_out_of_range() {
        assert!(KnowledgeGraph::from_ids(2, 1, vec![Triplet::new(0, 0, 2)]).is_err());
        assert!(KnowledgeGraph::from_ids(2, 1, vec![Triplet::new(0, 1, 1)]).is_err());
    }

    #[test]
    fn known_set_membership() {
        let kg = KnowledgeGraph::from_ids(3, 1, vec![Triplet::new(0, 0, 1), Triplet::new(0, 0, 1)])
            .unwrap();
        let known = KnownTripletSet::from_graphs(&[&kg]);
        assert!(known.contains(&Triplet::new(0, 0, 1)));
        assert!(!known.contains(&Triplet::new(0, 0, 2)));
        assert_eq!(known.len(), 1);
        assert_eq!(known.known_tails(0, 0), &[1]);
        assert_eq!(known.known_heads(0, 1), &[0]);
    }

    #[test]
    fn vocab_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = Vocab::from_labels(["x", "y y", "z"]).unwrap();
        let p = dir.path().join("v.dict");
        v.save(&p).unwrap();
        assert_eq!(Vocab::load(&p).unwrap(), v);
    }

    #[test]
    fn candidate_lines() {
        let dir = tempfile::tempdir().unwrap();
        let v = Vocab::from_labels(["a", "b", "c"]).unwrap();
        let p = write(dir.path(), "c.txt", "a b\nc\n");
        assert_eq!(load_candidates(&p, &v).unwrap(), vec![vec![0, 1], vec![2]]);
        let bad = write(dir.path(), "d.txt", "a q\n");
        assert!(load_candidates(&bad, &v).is_err());
    }
}
