use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use rep_core::checkpoint::{self, CheckpointHeader, VocabDigests};
use rep_core::config::{ExperimentConfig, ProtocolKind};
use rep_core::eval::{evaluate_prepared, RankingReport};
use rep_core::graph::load_candidates;
use rep_core::propagation::propagate_with;
use rep_core::trainer::{EpochStats, TrainObserver};
use rep_core::verify::{self, Property, VerifyOptions};
use rep_core::{with_threads, AdjacencyIndex, Dataset, EmbeddingStore, KnownTripletSet, PropagationConfig, Protocol};

use crate::{Common, VerifyArgs};

/// Loads the config file, then applies flags on top.
fn resolve(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &c.config {
        cfg.merge_file(path)?;
    }
    let flags = [
        ("data", &c.data),
        ("model", &c.model),
        ("dim", &c.dim),
        ("gamma", &c.gamma),
        ("norm", &c.norm),
        ("groups", &c.groups),
        ("lr", &c.lr),
        ("epochs", &c.epochs),
        ("batch_size", &c.batch_size),
        ("negatives", &c.negatives),
        ("checkpoint_fractions", &c.checkpoint_fractions),
        ("alpha", &c.alpha),
        ("hops", &c.hops),
        ("mode", &c.mode),
        ("protocol", &c.protocol),
        ("candidates", &c.candidate_file),
        ("tie", &c.tie),
        ("split", &c.split),
        ("alphas", &c.alphas),
        ("max_hops", &c.max_hops),
        ("seed", &c.seed),
        ("threads", &c.threads),
        ("checkpoint", &c.checkpoint),
        ("out", &c.out),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v).with_context(|| format!("--{}", key.replace('_', "-")))?;
        }
    }
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {kv:?}"))?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value.as_deref().with_context(|| format!("--{flag} is required"))
}

struct Loaded {
    data: Dataset,
    known: KnownTripletSet,
}

impl Loaded {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let dir = cfg.data_dir()?;
        let data = Dataset::load(dir).with_context(|| format!("loading dataset {}", dir.display()))?;
        let known = data.known_triplets();
        Ok(Self { data, known })
    }

    fn digests(&self) -> VocabDigests {
        VocabDigests::of(Some(self.data.entity_vocab()), Some(self.data.relation_vocab()))
    }
}

/// Loads a checkpoint and checks it against the dataset and any explicitly requested model.
fn load_checkpoint(cfg: &ExperimentConfig, loaded: &Loaded) -> Result<(EmbeddingStore<f32>, CheckpointHeader)> {
    let path = required(&cfg.checkpoint, "checkpoint")?;
    let (store, header) = checkpoint::load::<f32>(path)?;
    if cfg.is_set("model") && cfg.model != header.spec.family {
        bail!(
            "checkpoint {} holds a {} model but {} was requested",
            path.display(),
            header.spec.family,
            cfg.model
        );
    }
    if cfg.is_set("dim") && cfg.dim != header.spec.dim {
        bail!("checkpoint dimension {} differs from requested {}", header.spec.dim, cfg.dim);
    }
    header
        .digests
        .check(loaded.data.entity_vocab(), loaded.data.relation_vocab())?;
    ensure!(
        store.num_entities == loaded.data.train.num_entities
            && store.num_relations == loaded.data.train.num_relations,
        "checkpoint has {} entities / {} relations, dataset has {} / {}",
        store.num_entities,
        store.num_relations,
        loaded.data.train.num_entities,
        loaded.data.train.num_relations
    );
    Ok((store, header))
}

/// Evaluates with whichever protocol the config selects.
struct Evaluator<'a> {
    loaded: &'a Loaded,
    cfg: &'a ExperimentConfig,
    candidates: Option<Vec<Vec<u32>>>,
}

impl<'a> Evaluator<'a> {
    fn new(loaded: &'a Loaded, cfg: &'a ExperimentConfig) -> Result<Self> {
        let candidates = match cfg.protocol {
            ProtocolKind::Filtered => None,
            ProtocolKind::Candidates => {
                let path = required(&cfg.candidates, "candidate-file")?;
                let lists = load_candidates(path, loaded.data.entity_vocab())?;
                let n = loaded.data.split(&cfg.split)?.len();
                ensure!(
                    lists.len() == n,
                    "{} has {} candidate lists for {} {} triplets",
                    path.display(),
                    lists.len(),
                    n,
                    cfg.split
                );
                Some(lists)
            }
        };
        Ok(Self { loaded, cfg, candidates })
    }

    fn run(&self, store: &EmbeddingStore<f32>) -> Result<RankingReport> {
        let relations = store.prepare_relations()?;
        let test = &self.loaded.data.split(&self.cfg.split)?.triplets;
        let protocol = match &self.candidates {
            None => Protocol::Filtered(&self.loaded.known),
            Some(lists) => Protocol::Candidates {
                lists,
                filter: self.cfg.filter_candidates.then_some(&self.loaded.known),
            },
        };
        Ok(evaluate_prepared(store, &relations, test, protocol, self.cfg.tie)?)
    }
}

struct TrainWriter<'a> {
    dir: &'a Path,
    log: fs::File,
    digests: VocabDigests,
    written: Vec<PathBuf>,
}

impl TrainObserver<f32> for TrainWriter<'_> {
    fn on_epoch(&mut self, stats: &EpochStats, _: &EmbeddingStore<f32>) -> rep_core::Result<()> {
        let line = serde_json::to_string(stats).expect("stats serialize");
        writeln!(self.log, "{line}").map_err(|e| rep_core::Error::Io {
            path: self.dir.join("train.jsonl"),
            source: e,
        })
    }

    fn on_checkpoint(&mut self, step: u64, store: &EmbeddingStore<f32>) -> rep_core::Result<()> {
        let path = self.dir.join(format!("step-{step:08}.ckpt"));
        checkpoint::save(&path, store, &self.digests)?;
        self.written.push(path);
        Ok(())
    }
}

pub fn train(c: &Common) -> Result<ExitCode> {
    let cfg = resolve(c)?;
    let spec = cfg.model_spec()?;
    let tc = cfg.train_config()?;
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("run"));
    let loaded = Loaded::new(&cfg)?;
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    loaded.data.entity_vocab().save(out.join("entities.dict"))?;
    loaded.data.relation_vocab().save(out.join("relations.dict"))?;
    let log_path = out.join("train.jsonl");
    let log = fs::File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    let mut writer = TrainWriter {
        dir: &out,
        log,
        digests: loaded.digests(),
        written: Vec::new(),
    };
    // Negatives are filtered against training triplets only; held-out splits stay unseen.
    let train_known = KnownTripletSet::new(&loaded.data.train.triplets);
    let known = tc.filtered_negatives.then_some(&train_known);
    let (store, report) = with_threads(cfg.threads, || {
        rep_core::train::<f32>(&loaded.data.train, spec, &tc, known, &mut writer)
    })??;
    checkpoint::save(out.join("model.ckpt"), &store, &writer.digests)?;
    fs::write(out.join("train_report.json"), serde_json::to_string_pretty(&report)?)?;
    eprintln!(
        "trained {} for {} steps; {} checkpoints in {}",
        spec.family,
        report.total_steps,
        writer.written.len() + 1,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct HopRecord<'a> {
    hop: usize,
    seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a RankingReport>,
}

pub fn propagate(c: &Common, per_hop: bool) -> Result<ExitCode> {
    let cfg = resolve(c)?;
    let pc = cfg.propagation_config()?;
    let out = required(&cfg.out, "out")?;
    let input = required(&cfg.checkpoint, "checkpoint")?;
    ensure!(out != input, "--out must differ from --checkpoint; the input is never overwritten");
    let loaded = Loaded::new(&cfg)?;
    let (store, header) = load_checkpoint(&cfg, &loaded)?;
    let evaluator = if per_hop { Some(Evaluator::new(&loaded, &cfg)?) } else { None };
    let adj = AdjacencyIndex::build(&loaded.data.train);
    let adapted = with_threads(cfg.threads, || {
        let mut last = Instant::now();
        propagate_with(&store, &adj, &pc, |hop, s| {
            let seconds = last.elapsed().as_secs_f64();
            let report = match &evaluator {
                Some(ev) => Some(ev.run(s).map_err(|e| rep_core::Error::Data(format!("{e:#}")))?),
                None => None,
            };
            let record = HopRecord { hop, seconds, report: report.as_ref() };
            println!("{}", serde_json::to_string(&record).expect("record serializes"));
            last = Instant::now();
            Ok(())
        })
    })??;
    checkpoint::save(out, &adapted, &header.digests)?;
    eprintln!("wrote {} (iteration {})", out.display(), adapted.iteration);
    Ok(ExitCode::SUCCESS)
}

pub fn evaluate(c: &Common) -> Result<ExitCode> {
    let cfg = resolve(c)?;
    let loaded = Loaded::new(&cfg)?;
    let (store, _) = load_checkpoint(&cfg, &loaded)?;
    let evaluator = Evaluator::new(&loaded, &cfg)?;
    let report = with_threads(cfg.threads, || evaluator.run(&store))??;
    let json = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &cfg.out {
        fs::write(out, format!("{json}\n")).with_context(|| format!("writing {}", out.display()))?;
    }
    println!("{json}");
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepRow {
    alpha: f64,
    hops: usize,
    mrr: f64,
    hits1: f64,
    hits3: f64,
    hits10: f64,
}

const SWEEP_HEADER: [&str; 6] = ["alpha", "hops", "mrr", "hits1", "hits3", "hits10"];

/// Cells already present in an existing sweep file.
fn completed_cells(path: &Path) -> Result<HashSet<(u64, usize)>> {
    let mut done = HashSet::new();
    if !path.exists() || fs::metadata(path)?.len() == 0 {
        return Ok(done);
    }
    let mut reader = csv::Reader::from_path(path)?;
    ensure!(
        reader.headers()?.iter().eq(SWEEP_HEADER),
        "{} exists but is not a sweep file",
        path.display()
    );
    for row in reader.deserialize::<SweepRow>() {
        let row = row.with_context(|| format!("reading {}", path.display()))?;
        done.insert((row.alpha.to_bits(), row.hops));
    }
    Ok(done)
}

pub fn sweep(c: &Common) -> Result<ExitCode> {
    let cfg = resolve(c)?;
    cfg.validate_sweep()?;
    let out = required(&cfg.out, "out")?.to_path_buf();
    let loaded = Loaded::new(&cfg)?;
    let (store, _) = load_checkpoint(&cfg, &loaded)?;
    let evaluator = Evaluator::new(&loaded, &cfg)?;
    let adj = AdjacencyIndex::build(&loaded.data.train);

    let done = completed_cells(&out)?;
    let fresh = !out.exists() || fs::metadata(&out)?.len() == 0;
    let file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&out)
        .with_context(|| format!("opening {}", out.display()))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        writer.write_record(SWEEP_HEADER)?;
        writer.flush()?;
    }

    let mut computed = 0usize;
    for &alpha in &cfg.alphas {
        let missing: Vec<usize> = (1..=cfg.max_hops)
            .filter(|h| !done.contains(&(alpha.to_bits(), *h)))
            .collect();
        let Some(&last) = missing.last() else { continue };
        let pc = PropagationConfig::new(alpha, last).with_mode(cfg.mode);
        with_threads(cfg.threads, || {
            propagate_with(&store, &adj, &pc, |hop, s| {
                if missing.contains(&hop) {
                    let r = evaluator.run(s).map_err(|e| rep_core::Error::Data(format!("{e:#}")))?;
                    let row = SweepRow {
                        alpha,
                        hops: hop,
                        mrr: r.mrr,
                        hits1: r.hits1,
                        hits3: r.hits3,
                        hits10: r.hits10,
                    };
                    let io = |e: csv::Error| rep_core::Error::Data(format!("writing sweep row: {e}"));
                    writer.serialize(&row).map_err(io)?;
                    writer.flush().map_err(|e| rep_core::Error::Io { path: out.clone(), source: e })?;
                    computed += 1;
                }
                Ok(())
            })
        })??;
    }
    eprintln!("{computed} cells computed, {} already present", done.len());
    Ok(ExitCode::SUCCESS)
}

pub fn verify(v: &VerifyArgs) -> Result<ExitCode> {
    let properties: Vec<Property> = if v.properties.is_empty() {
        Property::ALL.to_vec()
    } else {
        v.properties.iter().map(|p| p.parse()).collect::<rep_core::Result<_>>()?
    };
    ensure!((0.0..=0.5).contains(&v.beta), "--beta must lie in [0, 0.5]");
    let opts = VerifyOptions {
        seed: v.seed,
        beta: v.beta,
        inversion_samples: v.inversion_samples,
        gradient_samples: v.gradient_samples,
    };
    let results = with_threads(v.threads, || {
        properties
            .iter()
            .map(|&p| {
                let r = verify::run_one(p, &opts);
                println!("{}", serde_json::to_string(&r).expect("result serializes"));
                r
            })
            .collect::<Vec<_>>()
    })?;
    if let Some(out) = &v.out {
        fs::write(out, serde_json::to_string_pretty(&results)?)?;
    }
    let failed: Vec<&str> = results.iter().filter(|r| !r.passed).map(|r| r.property.as_str()).collect();
    if failed.is_empty() {
        eprintln!("{} properties passed", results.len());
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("FAILED: {}", failed.join(", "));
        Ok(ExitCode::from(1))
    }
}
