//! Stage runners. Stages exchange data only through files in the work
//! directory; `manifest.json` records the configuration fingerprint each
//! artifact was built with.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::embeddings::{EmbeddingLookup, EmbeddingStore, HashEncoder, HttpEncoder, TextEncoder};
use crate::error::{Error, Result};
use crate::evalkit::{answer_entity_recall, breakdown, mean_defined, triple_recall, MetricsReport, SampleJudgment};
use crate::io::write_atomic;
use crate::kg::{load_dataset, load_triples, EntityId, KnowledgeGraph, QuerySample, TripleId};
use crate::reasoner::{build_qa_prompt, parse_answers_with, LlmClient};
use crate::retriever::{feature_spec, train_retriever, PreparedSample, RetrieverModel};
use crate::scorer::FeatureSpec;
use crate::supervision::{import_relevance_labels, shortest_path_labels_within, write_label_records};

use super::config::{EncoderConfig, PipelineConfig, RetrievalMethod};
use super::synth::{generate_synthetic, SyntheticData};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Ingest,
    Label,
    ImportLabels,
    Embed,
    Train,
    Retrieve,
    Reason,
    Eval,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::Synth,
        Stage::Ingest,
        Stage::Label,
        Stage::ImportLabels,
        Stage::Embed,
        Stage::Train,
        Stage::Retrieve,
        Stage::Reason,
        Stage::Eval,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Label => "label",
            Stage::ImportLabels => "import-labels",
            Stage::Embed => "embed",
            Stage::Train => "train",
            Stage::Retrieve => "retrieve",
            Stage::Reason => "reason",
            Stage::Eval => "eval",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }

    /// Manifest key; both labelling stages produce the `label` artifact.
    fn artifact(self) -> &'static str {
        match self {
            Stage::ImportLabels => "label",
            s => s.name(),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CANDIDATES_FILE: &str = "candidates.jsonl";
pub const LABELS_FILE: &str = "labels.jsonl";
pub const ENTITY_EMBS: &str = "entities.embs";
pub const RELATION_EMBS: &str = "relations.embs";
pub const QUESTION_EMBS: &str = "questions.embs";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const RETRIEVAL_FILE: &str = "retrieval.jsonl";
pub const RESPONSES_FILE: &str = "responses.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const JUDGMENTS_FILE: &str = "judgments.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Hex fingerprint of the configuration and inputs the artifact was built from.
    pub fingerprint: String,
    pub outputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifacts: BTreeMap<String, ArtifactRecord>,
}

impl Manifest {
    pub fn load(work_dir: &Path) -> Result<Self> {
        let path = work_dir.join(MANIFEST_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => Ok(serde_json::from_str(&text)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Manifest::default()),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn save(&self, work_dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&work_dir.join(MANIFEST_FILE), text.as_bytes())
    }
}

struct Fingerprint(Sha256);

impl Fingerprint {
    fn new(tag: &str) -> Self {
        let mut h = Sha256::new();
        h.update(tag.as_bytes());
        h.update([0]);
        Fingerprint(h)
    }

    fn add(mut self, v: &Value) -> Self {
        self.0.update(v.to_string().as_bytes());
        self.0.update([0]);
        self
    }

    fn add_u64(mut self, v: u64) -> Self {
        self.0.update(v.to_le_bytes());
        self
    }

    fn finish(self) -> u64 {
        u64::from_le_bytes(self.0.finalize()[..8].try_into().expect("32-byte digest"))
    }
}

fn file_digest(path: &Path, stage: Stage, producer: &str) -> Result<u64> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(Fingerprint::new("file").add_u64(bytes.len() as u64).add(&json!(hex_bytes(&bytes))).finish()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(Error::Prerequisite {
            stage: stage.name().into(),
            missing: producer.into(),
        }),
        Err(e) => Err(Error::io(path, e)),
    }
}

fn hex_bytes(bytes: &[u8]) -> String {
    let d = Sha256::digest(bytes);
    d.iter().map(|b| format!("{b:02x}")).collect()
}

fn to_json<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config types serialize")
}

fn label_producer(cfg: &PipelineConfig) -> Stage {
    if cfg.paths.labels_import.is_some() {
        Stage::ImportLabels
    } else {
        Stage::Label
    }
}

/// Fingerprint of the artifact `stage` would produce under `cfg`. It covers
/// every setting and input that affects the bytes of that artifact.
pub fn stage_fingerprint(cfg: &PipelineConfig, stage: Stage) -> Result<u64> {
    let inputs = |st: Stage| -> Result<Fingerprint> {
        let p = &cfg.paths;
        Ok(Fingerprint::new("inputs")
            .add_u64(file_digest(&p.kg, st, "synth")?)
            .add_u64(file_digest(&p.train_dataset, st, "synth")?)
            .add_u64(file_digest(&p.test_dataset, st, "synth")?))
    };
    Ok(match stage {
        Stage::Synth => Fingerprint::new("synth").add(&to_json(&cfg.synth)).finish(),
        Stage::Ingest => inputs(stage)?.add(&json!({"hops": cfg.retriever.hops})).finish(),
        Stage::Label | Stage::ImportLabels => {
            let base = Fingerprint::new("label").add_u64(stage_fingerprint(cfg, Stage::Ingest)?);
            match &cfg.paths.labels_import {
                Some(p) => base.add(&json!("import")).add_u64(file_digest(p, stage, "import-labels")?).finish(),
                None => base.add(&json!("shortest_path")).finish(),
            }
        }
        Stage::Embed => {
            let enc = match &cfg.encoder {
                EncoderConfig::Hash { dim, seed } => json!({"kind": "hash", "dim": dim, "seed": seed}),
                EncoderConfig::Http { endpoint, .. } => json!({"kind": "http", "endpoint": endpoint}),
            };
            inputs(stage)?.add(&enc).finish()
        }
        Stage::Train => {
            let mut t = to_json(&cfg.train);
            t.as_object_mut().expect("struct").remove("threads");
            Fingerprint::new("train")
                .add_u64(stage_fingerprint(cfg, Stage::Label)?)
                .add_u64(stage_fingerprint(cfg, Stage::Embed)?)
                .add(&json!({"variant": cfg.retriever.variant, "rounds": cfg.retriever.dde_rounds}))
                .add(&t)
                .finish()
        }
        Stage::Retrieve => {
            let upstream = match cfg.retriever.method {
                RetrievalMethod::Scorer => stage_fingerprint(cfg, Stage::Train)?,
                RetrievalMethod::Cosine => stage_fingerprint(cfg, Stage::Embed)?,
            };
            Fingerprint::new("retrieve")
                .add_u64(upstream)
                .add_u64(stage_fingerprint(cfg, Stage::Ingest)?)
                .add(&json!({"method": cfg.retriever.method, "top_k": cfg.retriever.top_k}))
                .finish()
        }
        Stage::Reason => Fingerprint::new("reason")
            .add_u64(stage_fingerprint(cfg, Stage::Retrieve)?)
            .add(&json!({
                "model": cfg.reasoner.llm.model,
                "icl": cfg.reasoner.icl,
                "empty_context": cfg.reasoner.empty_context,
            }))
            .finish(),
        Stage::Eval => Fingerprint::new("eval")
            .add_u64(stage_fingerprint(cfg, Stage::Reason)?)
            .add_u64(stage_fingerprint(cfg, Stage::Label)?)
            .add(&json!({
                "refusal_tokens": cfg.reasoner.refusal_tokens,
                "breakdown": cfg.eval.breakdown,
                "recall_at": cfg.eval.recall_at,
            }))
            .finish(),
    })
}

fn prerequisites(cfg: &PipelineConfig, stage: Stage) -> Vec<Stage> {
    match stage {
        Stage::Synth | Stage::Ingest | Stage::Embed => vec![],
        Stage::Label | Stage::ImportLabels => vec![Stage::Ingest],
        Stage::Train => vec![Stage::Ingest, label_producer(cfg), Stage::Embed],
        Stage::Retrieve => match cfg.retriever.method {
            RetrievalMethod::Scorer => vec![Stage::Ingest, Stage::Embed, Stage::Train],
            RetrievalMethod::Cosine => vec![Stage::Ingest, Stage::Embed],
        },
        Stage::Reason => vec![Stage::Retrieve],
        Stage::Eval => vec![Stage::Retrieve, Stage::Reason, label_producer(cfg)],
    }
}

/// Refuses to run `stage` unless every upstream artifact exists and was
/// built with the current configuration.
pub fn check_prerequisites(cfg: &PipelineConfig, stage: Stage) -> Result<()> {
    let p = &cfg.paths;
    if stage != Stage::Synth && [&p.kg, &p.train_dataset, &p.test_dataset].iter().any(|f| !f.exists()) {
        return Err(Error::Prerequisite {
            stage: stage.name().into(),
            missing: Stage::Synth.name().into(),
        });
    }
    let manifest = Manifest::load(&cfg.paths.work_dir)?;
    for dep in prerequisites(cfg, stage) {
        let missing = || Error::Prerequisite {
            stage: stage.name().into(),
            missing: dep.name().into(),
        };
        let rec = manifest.artifacts.get(dep.artifact()).ok_or_else(missing)?;
        if rec.outputs.iter().any(|p| !p.exists()) {
            return Err(missing());
        }
        let expected = stage_fingerprint(cfg, dep)?;
        let found = u64::from_str_radix(&rec.fingerprint, 16).unwrap_or(0);
        if expected != found {
            return Err(Error::FingerprintMismatch {
                artifact: dep.artifact().into(),
                expected,
                found,
                rerun: dep.name().into(),
            });
        }
    }
    Ok(())
}

/// What a stage wrote.
#[derive(Debug, Clone, PartialEq)]
pub struct StageOutcome {
    pub stage: Stage,
    pub outputs: Vec<PathBuf>,
    pub fingerprint: u64,
    pub summary: String,
}

/// Runs one stage: checks prerequisites, writes outputs atomically, and
/// records them in the manifest.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageOutcome> {
    cfg.validate()?;
    if stage == Stage::Label && cfg.paths.labels_import.is_some() {
        return Err(Error::Config(
            "paths.labels_import is set; run `import-labels` instead of `label`".into(),
        ));
    }
    if stage == Stage::ImportLabels && cfg.paths.labels_import.is_none() {
        return Err(Error::Config("`import-labels` needs paths.labels_import".into()));
    }
    std::fs::create_dir_all(&cfg.paths.work_dir).map_err(|e| Error::io(&cfg.paths.work_dir, e))?;
    check_prerequisites(cfg, stage)?;
    let (outputs, summary) = match stage {
        Stage::Synth => synth(cfg)?,
        Stage::Ingest => ingest(cfg)?,
        Stage::Label => label(cfg)?,
        Stage::ImportLabels => import_labels(cfg)?,
        Stage::Embed => embed(cfg)?,
        Stage::Train => train_stage(cfg)?,
        Stage::Retrieve => retrieve(cfg)?,
        Stage::Reason => reason(cfg)?,
        Stage::Eval => eval(cfg)?,
    };
    let fingerprint = stage_fingerprint(cfg, stage)?;
    let mut manifest = Manifest::load(&cfg.paths.work_dir)?;
    manifest.artifacts.insert(
        stage.artifact().into(),
        ArtifactRecord {
            fingerprint: format!("{fingerprint:016x}"),
            outputs: outputs.clone(),
        },
    );
    manifest.save(&cfg.paths.work_dir)?;
    log::debug!("{stage}: {summary}");
    Ok(StageOutcome {
        stage,
        outputs,
        fingerprint,
        summary,
    })
}

type StageResult = Result<(Vec<PathBuf>, String)>;

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_atomic(path, bytes)
}

fn jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn synth(cfg: &PipelineConfig) -> StageResult {
    let data = generate_synthetic(&cfg.synth)?;
    let p = &cfg.paths;
    write_file(&p.kg, data.kg_text().as_bytes())?;
    write_file(&p.train_dataset, SyntheticData::dataset_text(&data.train)?.as_bytes())?;
    write_file(&p.test_dataset, SyntheticData::dataset_text(&data.test)?.as_bytes())?;
    Ok((
        vec![p.kg.clone(), p.train_dataset.clone(), p.test_dataset.clone()],
        format!(
            "{} triples, {} train and {} test questions",
            data.kg.triple_count(),
            data.train.len(),
            data.test.len()
        ),
    ))
}

/// Loaded graph and both dataset splits.
struct Inputs {
    kg: KnowledgeGraph,
    train: Vec<QuerySample>,
    test: Vec<QuerySample>,
}

impl Inputs {
    fn load(cfg: &PipelineConfig) -> Result<Self> {
        let kg = load_triples(&cfg.paths.kg)?;
        let train = load_dataset(&cfg.paths.train_dataset, &kg)?;
        let test = load_dataset(&cfg.paths.test_dataset, &kg)?;
        let mut ids = BTreeSet::new();
        for s in train.iter().chain(&test) {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Record {
                    id: s.id.clone(),
                    message: "question id appears twice across the datasets".into(),
                });
            }
        }
        Ok(Inputs { kg, train, test })
    }

    fn all(&self) -> impl Iterator<Item = (&'static str, &QuerySample)> {
        self.train
            .iter()
            .map(|s| ("train", s))
            .chain(self.test.iter().map(|s| ("test", s)))
    }
}

/// One line of `candidates.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub id: String,
    pub split: String,
    pub topic_entities: Vec<String>,
    pub triples: Vec<[String; 3]>,
}

fn ingest(cfg: &PipelineConfig) -> StageResult {
    let inputs = Inputs::load(cfg)?;
    let kg = &inputs.kg;
    let records: Vec<CandidateRecord> = inputs
        .all()
        .map(|(split, s)| CandidateRecord {
            id: s.id.clone(),
            split: split.into(),
            topic_entities: s.topic_entities.iter().map(|&e| kg.entity_name(e).to_owned()).collect(),
            triples: kg
                .extract_candidate_subgraph(&s.topic_entities, cfg.retriever.hops)
                .into_iter()
                .map(|t| {
                    let (h, r, tl) = kg.surface(t);
                    [h.to_owned(), r.to_owned(), tl.to_owned()]
                })
                .collect(),
        })
        .collect();
    let out = cfg.work_path(CANDIDATES_FILE);
    write_file(&out, jsonl(&records)?.as_bytes())?;
    let mean = records.iter().map(|r| r.triples.len()).sum::<usize>() as f64 / records.len().max(1) as f64;
    Ok((vec![out], format!("{} questions, {mean:.1} candidate triples on average", records.len())))
}

fn resolve_all(kg: &KnowledgeGraph, id: &str, triples: &[[String; 3]]) -> Result<Vec<TripleId>> {
    triples
        .iter()
        .map(|[h, r, t]| {
            kg.resolve(h, r, t).ok_or_else(|| Error::Record {
                id: id.to_owned(),
                message: format!("triple ({h},{r},{t}) not in graph"),
            })
        })
        .collect()
}

fn load_candidates(cfg: &PipelineConfig, kg: &KnowledgeGraph) -> Result<BTreeMap<String, (String, Vec<TripleId>)>> {
    let records: Vec<CandidateRecord> = read_jsonl(&cfg.work_path(CANDIDATES_FILE))?;
    records
        .into_iter()
        .map(|r| {
            let ids = resolve_all(kg, &r.id, &r.triples)?;
            Ok((r.id, (r.split, ids)))
        })
        .collect()
}

fn label(cfg: &PipelineConfig) -> StageResult {
    let inputs = Inputs::load(cfg)?;
    let kg = &inputs.kg;
    let cands = load_candidates(cfg, kg)?;
    let mut labels: Vec<(String, BTreeSet<TripleId>)> = Vec::new();
    for (_, s) in inputs.all() {
        let within = cands.get(&s.id).map(|(_, c)| c.as_slice()).unwrap_or(&[]);
        labels.push((
            s.id.clone(),
            shortest_path_labels_within(kg, within, &s.topic_entities, &s.answer_entities),
        ));
    }
    let out = cfg.work_path(LABELS_FILE);
    let text = write_label_records(kg, labels.iter().map(|(id, l)| (id.as_str(), l)))?;
    write_file(&out, text.as_bytes())?;
    let empty = labels.iter().filter(|(_, l)| l.is_empty()).count();
    Ok((vec![out], format!("{} questions labelled, {empty} without a path", labels.len())))
}

fn import_labels(cfg: &PipelineConfig) -> StageResult {
    let inputs = Inputs::load(cfg)?;
    let path = cfg.paths.labels_import.as_ref().expect("checked by run_stage");
    let imported = import_relevance_labels(path, &inputs.kg)?;
    let out = cfg.work_path(LABELS_FILE);
    let text = write_label_records(&inputs.kg, imported.labels.iter().map(|(id, l)| (id.as_str(), l)))?;
    write_file(&out, text.as_bytes())?;
    Ok((
        vec![out],
        format!("{} questions imported, {} triples dropped", imported.labels.len(), imported.dropped),
    ))
}

fn load_labels(cfg: &PipelineConfig, kg: &KnowledgeGraph) -> Result<BTreeMap<String, BTreeSet<TripleId>>> {
    Ok(import_relevance_labels(cfg.work_path(LABELS_FILE), kg)?.labels)
}

fn encoder(cfg: &PipelineConfig) -> Result<Box<dyn TextEncoder>> {
    Ok(match &cfg.encoder {
        EncoderConfig::Hash { dim, seed } => Box::new(HashEncoder::new(*dim, *seed)),
        EncoderConfig::Http {
            endpoint,
            batch_size,
            parallelism,
            retry,
        } => Box::new(HttpEncoder::new(endpoint, *batch_size, *parallelism, *retry)?),
    })
}

fn embed_store(enc: &dyn TextEncoder, keys: Vec<String>, texts: &[String]) -> Result<EmbeddingStore> {
    let rows = enc.embed(texts)?;
    let dim = rows.first().map(|r| r.len()).unwrap_or(0);
    EmbeddingStore::from_rows(dim, keys, rows)
}

fn embed(cfg: &PipelineConfig) -> StageResult {
    let inputs = Inputs::load(cfg)?;
    let kg = &inputs.kg;
    let enc = encoder(cfg)?;
    let entities = embed_store(enc.as_ref(), kg.entity_names().to_vec(), kg.entity_names())?;
    let relations = embed_store(enc.as_ref(), kg.relation_names().to_vec(), kg.relation_names())?;
    let (ids, questions): (Vec<String>, Vec<String>) =
        inputs.all().map(|(_, s)| (s.id.clone(), s.question.clone())).unzip();
    let queries = embed_store(enc.as_ref(), ids, &questions)?;
    let outs = [ENTITY_EMBS, RELATION_EMBS, QUESTION_EMBS].map(|f| cfg.work_path(f));
    entities.save(&outs[0])?;
    relations.save(&outs[1])?;
    queries.save(&outs[2])?;
    Ok((
        outs.to_vec(),
        format!(
            "{} entities, {} relations, {} questions embedded (dim {})",
            entities.len(),
            relations.len(),
            queries.len(),
            entities.dim()
        ),
    ))
}

struct Embeddings {
    entities: EmbeddingStore,
    relations: EmbeddingStore,
    questions: EmbeddingStore,
}

impl Embeddings {
    fn load(cfg: &PipelineConfig) -> Result<Self> {
        Ok(Embeddings {
            entities: EmbeddingStore::load(cfg.work_path(ENTITY_EMBS))?,
            relations: EmbeddingStore::load(cfg.work_path(RELATION_EMBS))?,
            questions: EmbeddingStore::load(cfg.work_path(QUESTION_EMBS))?,
        })
    }

    fn lookup(&self) -> EmbeddingLookup<'_> {
        EmbeddingLookup {
            entities: &self.entities,
            relations: &self.relations,
        }
    }
}

fn prepared(
    samples: &[QuerySample],
    cands: &BTreeMap<String, (String, Vec<TripleId>)>,
    embs: &Embeddings,
) -> Result<Vec<PreparedSample>> {
    samples
        .iter()
        .map(|s| {
            Ok(PreparedSample {
                id: s.id.clone(),
                topics: s.topic_entities.clone(),
                candidates: cands.get(&s.id).map(|(_, c)| c.clone()).unwrap_or_default(),
                query: embs.questions.require(&s.id)?.to_vec(),
            })
        })
        .collect()
}

fn spec_for(cfg: &PipelineConfig, embs: &Embeddings) -> FeatureSpec {
    feature_spec(cfg.retriever.variant, embs.entities.dim(), cfg.retriever.dde_rounds, &cfg.train)
}

fn train_stage(cfg: &PipelineConfig) -> StageResult {
    let inputs = Inputs::load(cfg)?;
    let kg = &inputs.kg;
    let cands = load_candidates(cfg, kg)?;
    let labels = load_labels(cfg, kg)?;
    let embs = Embeddings::load(cfg)?;
    let samples = prepared(&inputs.train, &cands, &embs)?;
    let spec = spec_for(cfg, &embs);
    let (model, report) = train_retriever(kg, embs.lookup(), &samples, &labels, spec, &cfg.train)?;
    model.save(&cfg.paths.work_dir)?;
    let mut outputs = vec![cfg.work_path(crate::retriever::SCORER_FILE)];
    if matches!(model, RetrieverModel::Sage { .. }) {
        outputs.push(cfg.work_path(crate::retriever::SAGE_FILE));
    }
    let report_path = cfg.work_path(TRAIN_REPORT_FILE);
    let text = serde_json::to_string_pretty(&json!({
        "variant": cfg.retriever.variant,
        "input_dim": spec.input_dim(),
        "epoch_losses": report.epoch_losses,
        "val_losses": report.val_losses,
        "selected_epoch": report.selected_epoch,
    }))?;
    write_file(&report_path, text.as_bytes())?;
    outputs.push(report_path);
    let last = report.epoch_losses.last().copied().unwrap_or(f64::NAN);
    Ok((outputs, format!("{} epochs, final loss {last:.5}", report.epoch_losses.len())))
}

/// One line of `retrieval.jsonl`: `[h, r, t, score]` rows, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalRecord {
    pub id: String,
    pub triples: Vec<(String, String, String, f64)>,
}

fn retrieve(cfg: &PipelineConfig) -> StageResult {
    let inputs = Inputs::load(cfg)?;
    let kg = &inputs.kg;
    let cands = load_candidates(cfg, kg)?;
    let embs = Embeddings::load(cfg)?;
    let model = match cfg.retriever.method {
        RetrievalMethod::Cosine => RetrieverModel::Cosine,
        RetrievalMethod::Scorer => RetrieverModel::load(&cfg.paths.work_dir, spec_for(cfg, &embs), cfg.train.activation)?,
    };
    let samples = prepared(&inputs.test, &cands, &embs)?;
    let records: Vec<RetrievalRecord> = samples
        .iter()
        .map(|s| {
            let r = model.rank(kg, embs.lookup(), s, cfg.retriever.top_k, cfg.retriever.workers)?;
            Ok(RetrievalRecord {
                id: s.id.clone(),
                triples: r
                    .ranked
                    .iter()
                    .map(|&(t, score)| {
                        let (h, rel, tl) = kg.surface(t);
                        (h.to_owned(), rel.to_owned(), tl.to_owned(), score)
                    })
                    .collect(),
            })
        })
        .collect::<Result<_>>()?;
    let out = cfg.work_path(RETRIEVAL_FILE);
    write_file(&out, jsonl(&records)?.as_bytes())?;
    Ok((vec![out], format!("{} questions, top {}", records.len(), cfg.retriever.top_k)))
}

/// One line of `responses.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub id: String,
    pub raw: String,
}

fn reason(cfg: &PipelineConfig) -> StageResult {
    let inputs = Inputs::load(cfg)?;
    let questions: BTreeMap<&str, &str> = inputs.test.iter().map(|s| (s.id.as_str(), s.question.as_str())).collect();
    let retrieval: Vec<RetrievalRecord> = read_jsonl(&cfg.work_path(RETRIEVAL_FILE))?;
    let client = LlmClient::new(&cfg.reasoner.llm)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.reasoner.parallelism.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let records: Vec<ResponseRecord> = pool.install(|| {
        retrieval
            .par_iter()
            .map(|r| {
                let question = questions.get(r.id.as_str()).ok_or_else(|| Error::Record {
                    id: r.id.clone(),
                    message: "retrieved question is not in the test dataset".into(),
                })?;
                let triples: Vec<(&str, &str, &str)> = if cfg.reasoner.empty_context {
                    Vec::new()
                } else {
                    r.triples.iter().map(|(h, rel, t, _)| (h.as_str(), rel.as_str(), t.as_str())).collect()
                };
                let bundle = build_qa_prompt(question, &triples, cfg.reasoner.icl);
                Ok(ResponseRecord {
                    id: r.id.clone(),
                    raw: client.complete(&bundle)?,
                })
            })
            .collect::<Result<_>>()
    })?;
    let out = cfg.work_path(RESPONSES_FILE);
    write_file(&out, jsonl(&records)?.as_bytes())?;
    Ok((vec![out], format!("{} responses", records.len())))
}

/// `report.json`: answer metrics plus retrieval recall at several budgets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: MetricsReport,
    /// Budget → (mean shortest-path triple recall, mean answer-entity recall).
    pub recall_at_k: BTreeMap<usize, (Option<f64>, Option<f64>)>,
}

fn eval(cfg: &PipelineConfig) -> StageResult {
    let inputs = Inputs::load(cfg)?;
    let kg = &inputs.kg;
    let labels = load_labels(cfg, kg)?;
    let retrieval: BTreeMap<String, RetrievalRecord> = read_jsonl::<RetrievalRecord>(&cfg.work_path(RETRIEVAL_FILE))?
        .into_iter()
        .map(|r| (r.id.clone(), r))
        .collect();
    let responses: BTreeMap<String, String> = read_jsonl::<ResponseRecord>(&cfg.work_path(RESPONSES_FILE))?
        .into_iter()
        .map(|r| (r.id, r.raw))
        .collect();
    let empty = BTreeSet::new();
    let mut judgments = Vec::new();
    let mut ranked_ids: Vec<(Vec<TripleId>, &BTreeSet<TripleId>, &BTreeSet<EntityId>)> = Vec::new();
    for s in &inputs.test {
        let (Some(r), Some(raw)) = (retrieval.get(&s.id), responses.get(&s.id)) else {
            return Err(Error::Record {
                id: s.id.clone(),
                message: "no retrieval or response for this question".into(),
            });
        };
        let ids: Vec<TripleId> = r.triples.iter().filter_map(|(h, rel, t, _)| kg.resolve(h, rel, t)).collect();
        let surfaces: Vec<String> = r.triples.iter().map(|(h, rel, t, _)| format!("({h},{rel},{t})")).collect();
        let out = parse_answers_with(raw, &cfg.reasoner.refusal_tokens);
        let gold_triples = labels.get(&s.id).unwrap_or(&empty);
        let got: BTreeSet<TripleId> = ids.iter().copied().collect();
        let mut j = SampleJudgment::new(&s.id, &out, &s.answers, !s.answer_entities.is_empty(), &surfaces);
        j.hops = s.hops;
        j.topic_count = s.topic_entities.len();
        j.triple_recall = triple_recall(&got, gold_triples);
        j.entity_recall = answer_entity_recall(kg, &got, &s.answer_entities);
        judgments.push(j);
        ranked_ids.push((ids, gold_triples, &s.answer_entities));
    }
    let mut metrics = MetricsReport::compute(&judgments)?;
    for key in &cfg.eval.breakdown {
        metrics.breakdown.insert(key.clone(), breakdown(&judgments, key)?);
    }
    let recall_at_k = cfg
        .eval
        .recall_at
        .iter()
        .map(|&k| {
            let (mut tr, mut ar) = (Vec::new(), Vec::new());
            for (ids, gold, answers) in &ranked_ids {
                let top: BTreeSet<TripleId> = ids.iter().take(k).copied().collect();
                tr.push(triple_recall(&top, gold));
                ar.push(answer_entity_recall(kg, &top, answers));
            }
            (k, (mean_defined(tr), mean_defined(ar)))
        })
        .collect();
    let report = EvalReport { metrics, recall_at_k };
    let outs = [REPORT_JSON, REPORT_TXT, JUDGMENTS_FILE].map(|f| cfg.work_path(f));
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_file(&outs[0], text.as_bytes())?;
    write_file(&outs[1], report.metrics.to_table().as_bytes())?;
    write_file(&outs[2], jsonl(&judgments)?.as_bytes())?;
    Ok((
        outs.to_vec(),
        format!(
            "macro-F1 {:.4}, hit {:.4}, score_h {:.2} over {} questions",
            report.metrics.macro_f1, report.metrics.hit, report.metrics.score_h, report.metrics.samples
        ),
    ))
}
