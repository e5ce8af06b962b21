//! End-to-end retriever: per-question feature preparation, training for
//! every feature variant, ranking, and parameter files on disk.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;

use crate::embeddings::{cosine_baseline_scores, BaselineMode, EmbeddingLookup};
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, TripleId};
use crate::scorer::{
    assemble_features, entity_text_vectors, layers_to_bytes, load_layers, load_params, save_params, score_and_select,
    scorer_fingerprint, select_top_k, structural_encodings, train, train_graphsage, Activation, FeatureSpec,
    FeatureVariant, LabeledSample, Network, RawLayer, RetrievalResult, SageEncoder, SageGraph, SageSample,
    TrainConfig, TrainReport,
};
use crate::structural::DdeConfig;

/// One question with its candidate subgraph and query embedding.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    pub id: String,
    pub topics: BTreeSet<EntityId>,
    pub candidates: Vec<TripleId>,
    pub query: Vec<f32>,
}

pub fn feature_spec(variant: FeatureVariant, text_dim: usize, rounds: usize, config: &TrainConfig) -> FeatureSpec {
    FeatureSpec {
        variant,
        text_dim,
        dde: DdeConfig { rounds },
        sage_dim: if variant == FeatureVariant::GraphSage {
            config.sage_hidden
        } else {
            0
        },
    }
}

/// Flat feature rows for a non-GraphSAGE variant.
pub fn sample_features(
    kg: &KnowledgeGraph,
    spec: &FeatureSpec,
    lookup: EmbeddingLookup<'_>,
    sample: &PreparedSample,
) -> Result<Vec<f64>> {
    let ev = entity_text_vectors(kg, lookup, &sample.candidates)?;
    let st = structural_encodings(kg, &sample.candidates, &sample.topics, spec)?;
    assemble_features(kg, spec, &sample.query, &sample.candidates, lookup, &ev, &st)
}

fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Input for joint GraphSAGE training or scoring; `labels` may be all zero
/// at inference.
pub fn sage_sample(
    kg: &KnowledgeGraph,
    lookup: EmbeddingLookup<'_>,
    sample: &PreparedSample,
    labels: &BTreeSet<TripleId>,
) -> Result<SageSample> {
    let mut ents: HashMap<EntityId, Vec<f64>> = entity_text_vectors(kg, lookup, &sample.candidates)?;
    for &t in &sample.topics {
        if let std::collections::hash_map::Entry::Vacant(slot) = ents.entry(t) {
            slot.insert(to_f64(lookup.entities.require(kg.entity_name(t))?));
        }
    }
    let mut rels: HashMap<RelationId, Vec<f64>> = HashMap::new();
    for &id in &sample.candidates {
        let r = kg.triple(id).relation;
        if let std::collections::hash_map::Entry::Vacant(slot) = rels.entry(r) {
            slot.insert(to_f64(lookup.relations.require(kg.relation_name(r))?));
        }
    }
    let graph = SageGraph::new(kg, &sample.candidates, &sample.topics, &ents, &rels)?;
    let topic = graph
        .entities
        .iter()
        .map(|e| if sample.topics.contains(e) { 1.0 } else { 0.0 })
        .collect();
    let triples = sample
        .candidates
        .iter()
        .map(|&id| {
            let t = kg.triple(id);
            (graph.position[&t.head], rels[&t.relation].clone(), graph.position[&t.tail])
        })
        .collect();
    Ok(SageSample {
        graph,
        query: to_f64(&sample.query),
        triples,
        topic,
        labels: sample
            .candidates
            .iter()
            .map(|t| if labels.contains(t) { 1.0 } else { 0.0 })
            .collect(),
    })
}

/// A trained (or training-free) triple ranker.
#[derive(Debug, Clone)]
pub enum RetrieverModel {
    Mlp { net: Network, spec: FeatureSpec },
    Sage { net: Network, encoder: SageEncoder, spec: FeatureSpec },
    /// Cosine similarity between the question and the mean of the triple's
    /// component embeddings.
    Cosine,
}

impl RetrieverModel {
    /// Relevance score of every candidate, in candidate order.
    pub fn score_all(
        &self,
        kg: &KnowledgeGraph,
        lookup: EmbeddingLookup<'_>,
        sample: &PreparedSample,
        workers: usize,
    ) -> Result<Vec<(TripleId, f64)>> {
        match self {
            RetrieverModel::Cosine => {
                cosine_baseline_scores(kg, lookup, &sample.query, &sample.candidates, BaselineMode::ComponentMean)
            }
            RetrieverModel::Mlp { net, spec } => {
                let x = sample_features(kg, spec, lookup, sample)?;
                let r = score_and_select(net, &sample.id, &sample.candidates, &x, usize::MAX, workers)?;
                let mut by_id: HashMap<TripleId, f64> = r.ranked.into_iter().collect();
                Ok(sample.candidates.iter().map(|t| (*t, by_id.remove(t).unwrap_or(f64::NAN))).collect())
            }
            RetrieverModel::Sage { net, encoder, .. } => {
                let s = sage_sample(kg, lookup, sample, &BTreeSet::new())?;
                let trace = crate::scorer::sage_forward(encoder, &s.graph)?;
                let x = s.features(trace.output(), encoder.output_dim());
                let probs = crate::scorer::score_rows(net, &x, sample.candidates.len(), workers)?;
                Ok(sample.candidates.iter().copied().zip(probs).collect())
            }
        }
    }

    pub fn rank(
        &self,
        kg: &KnowledgeGraph,
        lookup: EmbeddingLookup<'_>,
        sample: &PreparedSample,
        k: usize,
        workers: usize,
    ) -> Result<RetrievalResult> {
        let scored = self.score_all(kg, lookup, sample, workers)?;
        Ok(RetrievalResult {
            sample_id: sample.id.clone(),
            ranked: select_top_k(&scored, k),
        })
    }

    pub fn scorer_fingerprint(&self) -> Option<u64> {
        match self {
            RetrieverModel::Mlp { net, spec } | RetrieverModel::Sage { net, spec, .. } => {
                Some(scorer_fingerprint(spec, net.hidden))
            }
            RetrieverModel::Cosine => None,
        }
    }

    /// Writes `scorer.mlps` (and `sage.mlps` for GraphSAGE) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        match self {
            RetrieverModel::Cosine => Ok(()),
            RetrieverModel::Mlp { net, spec } => save_params(dir.join(SCORER_FILE), net, scorer_fingerprint(spec, net.hidden)),
            RetrieverModel::Sage { net, encoder, spec } => {
                let fp = scorer_fingerprint(spec, net.hidden);
                save_params(dir.join(SCORER_FILE), net, fp)?;
                let layers: Vec<RawLayer> = encoder
                    .layers
                    .iter()
                    .map(|l| {
                        let (out, inp) = l.shapes()[0];
                        let (w, b) = l.layer(0);
                        (out, inp, w.to_vec(), b.to_vec())
                    })
                    .collect();
                crate::io::write_atomic(&dir.join(SAGE_FILE), &layers_to_bytes(&layers, sage_fingerprint(fp)))
            }
        }
    }

    /// Loads parameters written by [`RetrieverModel::save`], checking that
    /// they match `spec` and `activation`.
    pub fn load(dir: &Path, spec: FeatureSpec, activation: Activation) -> Result<Self> {
        let fp = scorer_fingerprint(&spec, activation);
        let net = load_params(dir.join(SCORER_FILE), fp, activation, Activation::Identity)?;
        if net.input_dim() != spec.input_dim() {
            return Err(Error::Shape(format!(
                "scorer expects {} inputs, configuration gives {}",
                net.input_dim(),
                spec.input_dim()
            )));
        }
        if spec.variant != FeatureVariant::GraphSage {
            return Ok(RetrieverModel::Mlp { net, spec });
        }
        let (layers, _) = load_layers(dir.join(SAGE_FILE), sage_fingerprint(fp))?;
        let layers = layers
            .into_iter()
            .map(|l| Network::from_layers(vec![l], activation, activation))
            .collect::<Result<Vec<_>>>()?;
        Ok(RetrieverModel::Sage {
            net,
            encoder: SageEncoder { layers },
            spec,
        })
    }
}

pub const SCORER_FILE: &str = "scorer.mlps";
pub const SAGE_FILE: &str = "sage.mlps";

fn sage_fingerprint(scorer_fp: u64) -> u64 {
    scorer_fp.rotate_left(17) ^ 0x5341_4745
}

/// Trains a retriever of the given variant on weakly labelled samples.
/// Samples missing from `labels` are treated as having no positives.
pub fn train_retriever(
    kg: &KnowledgeGraph,
    lookup: EmbeddingLookup<'_>,
    samples: &[PreparedSample],
    labels: &BTreeMap<String, BTreeSet<TripleId>>,
    spec: FeatureSpec,
    config: &TrainConfig,
) -> Result<(RetrieverModel, TrainReport)> {
    let empty = BTreeSet::new();
    let usable: Vec<&PreparedSample> = samples.iter().filter(|s| !s.candidates.is_empty()).collect();
    if spec.variant == FeatureVariant::GraphSage {
        let data: Vec<SageSample> = usable
            .par_iter()
            .map(|s| sage_sample(kg, lookup, s, labels.get(&s.id).unwrap_or(&empty)))
            .collect::<Result<_>>()?;
        let text_dim = lookup.entities.dim();
        let encoder = SageEncoder::init(
            text_dim,
            lookup.relations.dim(),
            config.sage_hidden,
            config.sage_layers,
            config.activation,
            config.seed,
        )?;
        let (net, encoder, report) = train_graphsage(&data, encoder, spec.input_dim(), config)?;
        return Ok((RetrieverModel::Sage { net, encoder, spec }, report));
    }
    let data: Vec<LabeledSample> = usable
        .par_iter()
        .map(|s| {
            let features = sample_features(kg, &spec, lookup, s)?;
            let pos = labels.get(&s.id).unwrap_or(&empty);
            let labels = s.candidates.iter().map(|t| if pos.contains(t) { 1.0 } else { 0.0 }).collect();
            Ok(LabeledSample { features, labels })
        })
        .collect::<Result<_>>()?;
    let (net, report) = train(&data, spec.input_dim(), config)?;
    Ok((RetrieverModel::Mlp { net, spec }, report))
}
