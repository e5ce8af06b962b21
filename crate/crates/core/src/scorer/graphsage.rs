//! GraphSAGE with relation-aware mean aggregation, used as an ablation
//! entity encoder in place of the distance encoding.
//!
//! Per layer: `agg_e = MEAN{[z_e' || z_r] : (e', r, e)}` over in-edges of the
//! candidate subgraph (zero when there are none), then
//! `z_e <- sigma([z_e || agg_e])` with `sigma` a one-layer perceptron.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, RelationId, TripleId};

use super::features::EntityVectors;
use super::nn::{Activation, ForwardCache, Network};

#[derive(Debug, Clone, PartialEq)]
pub struct SageEncoder {
    pub layers: Vec<Network>,
}

impl SageEncoder {
    /// Randomly initialised encoder; every layer maps to `hidden` dims.
    pub fn init(entity_dim: usize, relation_dim: usize, hidden: usize, layers: usize, act: Activation, seed: u64) -> Result<Self> {
        if layers == 0 {
            return Err(Error::InvalidArgument("GraphSAGE needs at least one layer".into()));
        }
        let mut out = Vec::with_capacity(layers);
        let mut d = entity_dim;
        for l in 0..layers {
            out.push(Network::init(&[2 * d + relation_dim, hidden], act, act, seed.wrapping_add(l as u64 + 1))?);
            d = hidden;
        }
        Ok(SageEncoder { layers: out })
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|n| n.output_dim()).unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.param_count()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.params().iter().copied()).collect()
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) {
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.param_count();
            l.params_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
    }
}

/// Candidate subgraph in local indices with its input vectors.
#[derive(Debug, Clone)]
pub struct SageGraph {
    pub entities: Vec<EntityId>,
    pub position: HashMap<EntityId, usize>,
    /// For each local entity, its in-edges as `(source, relation row)`.
    in_edges: Vec<Vec<(usize, usize)>>,
    relation_vectors: Vec<Vec<f64>>,
    entity_dim: usize,
    relation_dim: usize,
    /// `m × entity_dim` input embeddings.
    base: Vec<f64>,
}

impl SageGraph {
    pub fn new(
        kg: &KnowledgeGraph,
        candidates: &[TripleId],
        extra_entities: &BTreeSet<EntityId>,
        entity_embs: &EntityVectors,
        relation_embs: &HashMap<RelationId, Vec<f64>>,
    ) -> Result<Self> {
        let mut set = extra_entities.clone();
        for &id in candidates {
            let t = kg.triple(id);
            set.insert(t.head);
            set.insert(t.tail);
        }
        let entities: Vec<EntityId> = set.into_iter().collect();
        let position: HashMap<EntityId, usize> = entities.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let entity_dim = match entities.first() {
            Some(e) => entity_embs
                .get(e)
                .ok_or_else(|| Error::MissingEmbedding(kg.entity_name(*e).to_owned()))?
                .len(),
            None => 0,
        };
        let mut base = Vec::with_capacity(entities.len() * entity_dim);
        for e in &entities {
            let v = entity_embs
                .get(e)
                .ok_or_else(|| Error::MissingEmbedding(kg.entity_name(*e).to_owned()))?;
            if v.len() != entity_dim {
                return Err(Error::Shape(format!(
                    "entity `{}` embedding has dim {}, expected {entity_dim}",
                    kg.entity_name(*e),
                    v.len()
                )));
            }
            base.extend_from_slice(v);
        }
        let mut rel_rows: HashMap<RelationId, usize> = HashMap::new();
        let mut relation_vectors = Vec::new();
        let mut relation_dim = None;
        let mut in_edges = vec![Vec::new(); entities.len()];
        for &id in candidates {
            let t = kg.triple(id);
            let row = match rel_rows.get(&t.relation) {
                Some(&r) => r,
                None => {
                    let v = relation_embs
                        .get(&t.relation)
                        .ok_or_else(|| Error::MissingEmbedding(kg.relation_name(t.relation).to_owned()))?;
                    if *relation_dim.get_or_insert(v.len()) != v.len() {
                        return Err(Error::Shape("relation embeddings differ in dim".into()));
                    }
                    relation_vectors.push(v.clone());
                    rel_rows.insert(t.relation, relation_vectors.len() - 1);
                    relation_vectors.len() - 1
                }
            };
            in_edges[position[&t.tail]].push((position[&t.head], row));
        }
        Ok(SageGraph {
            entities,
            position,
            in_edges,
            relation_vectors,
            entity_dim,
            relation_dim: relation_dim.unwrap_or(0),
            base,
        })
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// `[z_e || MEAN{[z_e' || z_r]}]` rows for all entities, given `z` of width `d`.
    fn layer_input(&self, z: &[f64], d: usize, rel_dim: usize) -> Vec<f64> {
        let m = self.len();
        let width = 2 * d + rel_dim;
        let mut x = vec![0.0; m * width];
        for e in 0..m {
            let row = &mut x[e * width..(e + 1) * width];
            row[..d].copy_from_slice(&z[e * d..(e + 1) * d]);
            let edges = &self.in_edges[e];
            if edges.is_empty() {
                continue;
            }
            let inv = 1.0 / edges.len() as f64;
            for &(src, rel) in edges {
                for k in 0..d {
                    row[d + k] += z[src * d + k] * inv;
                }
                for (k, &rv) in self.relation_vectors[rel].iter().enumerate() {
                    row[2 * d + k] += rv * inv;
                }
            }
        }
        x
    }
}

/// Forward state for backpropagation through the encoder.
pub struct SageTrace {
    caches: Vec<ForwardCache>,
    widths: Vec<usize>,
    output: Vec<f64>,
}

impl SageTrace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

pub fn sage_forward(encoder: &SageEncoder, graph: &SageGraph) -> Result<SageTrace> {
    if encoder.layers.is_empty() {
        return Err(Error::InvalidArgument("GraphSAGE needs at least one layer".into()));
    }
    let m = graph.len();
    let mut z = graph.base.clone();
    let mut d = graph.entity_dim;
    let mut caches = Vec::with_capacity(encoder.layers.len());
    let mut widths = Vec::with_capacity(encoder.layers.len());
    for (l, net) in encoder.layers.iter().enumerate() {
        let want = 2 * d + graph.relation_dim;
        if net.input_dim() != want {
            return Err(Error::Shape(format!(
                "GraphSAGE layer {l} expects input {}, got {want}",
                net.input_dim()
            )));
        }
        let x = graph.layer_input(&z, d, graph.relation_dim);
        let cache = net.forward_batch(&x, m)?;
        z = cache.output().to_vec();
        widths.push(d);
        d = net.output_dim();
        caches.push(cache);
    }
    Ok(SageTrace {
        caches,
        widths,
        output: z,
    })
}

/// Accumulates encoder parameter gradients given `grad_out`, the loss
/// gradient with respect to the final `m × out` entity vectors.
pub fn sage_backward(encoder: &SageEncoder, graph: &SageGraph, trace: &SageTrace, grad_out: &[f64], grads: &mut [f64]) {
    let m = graph.len();
    let mut offsets = Vec::with_capacity(encoder.layers.len());
    let mut off = 0;
    for l in &encoder.layers {
        offsets.push(off);
        off += l.param_count();
    }
    let mut g = grad_out.to_vec();
    for l in (0..encoder.layers.len()).rev() {
        let net = &encoder.layers[l];
        let slot = &mut grads[offsets[l]..offsets[l] + net.param_count()];
        let need_input = l > 0;
        let gx = net.backward_batch(&trace.caches[l], &g, slot, need_input);
        let Some(gx) = gx else { break };
        let d = trace.widths[l];
        let width = 2 * d + graph.relation_dim;
        let mut gz = vec![0.0; m * d];
        for e in 0..m {
            let row = &gx[e * width..(e + 1) * width];
            for k in 0..d {
                gz[e * d + k] += row[k];
            }
            let edges = &graph.in_edges[e];
            if edges.is_empty() {
                continue;
            }
            let inv = 1.0 / edges.len() as f64;
            for &(src, _) in edges {
                for k in 0..d {
                    gz[src * d + k] += row[d + k] * inv;
                }
            }
        }
        g = gz;
    }
}

/// Updated entity vectors after all encoder layers.
pub fn graphsage_encode(
    kg: &KnowledgeGraph,
    candidates: &[TripleId],
    entity_embs: &EntityVectors,
    relation_embs: &HashMap<RelationId, Vec<f64>>,
    encoder: &SageEncoder,
) -> Result<EntityVectors> {
    let graph = SageGraph::new(kg, candidates, &BTreeSet::new(), entity_embs, relation_embs)?;
    let trace = sage_forward(encoder, &graph)?;
    let d = encoder.output_dim();
    Ok(graph
        .entities
        .iter()
        .enumerate()
        .map(|(i, &e)| (e, trace.output[i * d..(i + 1) * d].to_vec()))
        .collect())
}
