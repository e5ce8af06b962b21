//! Structural features of a candidate subgraph relative to the topic entities.
//!
//! The directional distance encoding of an entity is its topic-membership bit
//! followed by `L` rounds of mean propagation along edge direction and `L`
//! rounds against it. Entities without in- (resp. out-) neighbours receive
//! `0` for that round. Each triple contributes one term to the mean, so
//! parallel edges weigh more.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, TripleId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DdeConfig {
    pub rounds: usize,
}

impl Default for DdeConfig {
    fn default() -> Self {
        DdeConfig { rounds: 2 }
    }
}

impl DdeConfig {
    pub fn entity_dim(&self) -> usize {
        1 + 2 * self.rounds
    }

    pub fn triple_dim(&self) -> usize {
        2 * self.entity_dim()
    }
}

/// Per-entity structural vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityEncoding(pub Vec<f64>);

pub type EntityEncodings = HashMap<EntityId, EntityEncoding>;

/// Dense local view of a candidate subgraph: sorted entity list plus
/// per-triple `(head, tail)` local indices.
struct LocalGraph {
    entities: Vec<EntityId>,
    edges: Vec<(usize, usize)>,
}

impl LocalGraph {
    fn new(kg: &KnowledgeGraph, candidates: &[TripleId], topics: &BTreeSet<EntityId>) -> Self {
        let mut set: BTreeSet<EntityId> = topics.clone();
        for &id in candidates {
            let t = kg.triple(id);
            set.insert(t.head);
            set.insert(t.tail);
        }
        let entities: Vec<EntityId> = set.into_iter().collect();
        let pos: HashMap<EntityId, usize> = entities.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let edges = candidates
            .iter()
            .map(|&id| {
                let t = kg.triple(id);
                (pos[&t.head], pos[&t.tail])
            })
            .collect();
        LocalGraph { entities, edges }
    }

    fn seed(&self, topics: &BTreeSet<EntityId>) -> Vec<f64> {
        self.entities
            .iter()
            .map(|e| if topics.contains(e) { 1.0 } else { 0.0 })
            .collect()
    }
}

/// One round of mean propagation from `src` endpoints to `dst` endpoints.
fn propagate(n: usize, edges: &[(usize, usize)], prev: &[f64], reverse: bool) -> Vec<f64> {
    let mut sum = vec![0.0; n];
    let mut count = vec![0u32; n];
    for &(h, t) in edges {
        let (from, to) = if reverse { (t, h) } else { (h, t) };
        sum[to] += prev[from];
        count[to] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect()
}

/// Directional distance encoding for every entity touched by `candidates`
/// or listed in `topics`.
pub fn compute_dde(
    kg: &KnowledgeGraph,
    candidates: &[TripleId],
    topics: &BTreeSet<EntityId>,
    config: DdeConfig,
) -> EntityEncodings {
    let g = LocalGraph::new(kg, candidates, topics);
    let n = g.entities.len();
    let seed = g.seed(topics);
    let mut forward = Vec::with_capacity(config.rounds);
    let mut backward = Vec::with_capacity(config.rounds);
    let mut f_prev = seed.clone();
    let mut b_prev = seed.clone();
    for _ in 0..config.rounds {
        f_prev = propagate(n, &g.edges, &f_prev, false);
        b_prev = propagate(n, &g.edges, &b_prev, true);
        forward.push(f_prev.clone());
        backward.push(b_prev.clone());
    }
    g.entities
        .iter()
        .enumerate()
        .map(|(i, &e)| {
            let mut v = Vec::with_capacity(config.entity_dim());
            v.push(seed[i]);
            v.extend(forward.iter().map(|round| round[i]));
            v.extend(backward.iter().map(|round| round[i]));
            (e, EntityEncoding(v))
        })
        .collect()
}

/// Topic-membership bit only (the zero-round encoding).
pub fn topic_onehot(
    kg: &KnowledgeGraph,
    candidates: &[TripleId],
    topics: &BTreeSet<EntityId>,
) -> EntityEncodings {
    compute_dde(kg, candidates, topics, DdeConfig { rounds: 0 })
}

/// `[s_head || s_tail]` for one triple.
pub fn triple_encoding(kg: &KnowledgeGraph, enc: &EntityEncodings, triple: TripleId) -> Result<Vec<f64>> {
    let t = kg.triple(triple);
    let lookup = |e: EntityId| {
        enc.get(&e)
            .ok_or_else(|| Error::MissingEncoding(kg.entity_name(e).to_owned()))
    };
    let h = lookup(t.head)?;
    let tl = lookup(t.tail)?;
    let mut out = Vec::with_capacity(h.0.len() + tl.0.len());
    out.extend_from_slice(&h.0);
    out.extend_from_slice(&tl.0);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PprConfig {
    pub damping: f64,
    pub iterations: usize,
    pub tolerance: f64,
}

impl Default for PprConfig {
    fn default() -> Self {
        PprConfig {
            damping: 0.85,
            iterations: 1000,
            tolerance: 1e-12,
        }
    }
}

/// Personalized PageRank on the undirected candidate graph, teleporting
/// uniformly to the topic entities. Mass at entities with no neighbours is
/// returned to the teleport distribution.
pub fn ppr_scores(
    kg: &KnowledgeGraph,
    candidates: &[TripleId],
    topics: &BTreeSet<EntityId>,
    config: PprConfig,
) -> Result<HashMap<EntityId, f64>> {
    if topics.is_empty() {
        return Err(Error::InvalidArgument("personalized pagerank needs at least one topic entity".into()));
    }
    if !(config.damping > 0.0 && config.damping < 1.0) {
        return Err(Error::InvalidArgument(format!("damping {} not in (0,1)", config.damping)));
    }
    let g = LocalGraph::new(kg, candidates, topics);
    let n = g.entities.len();
    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(h, t) in &g.edges {
        neighbors[h].push(t);
        if h != t {
            neighbors[t].push(h);
        }
    }
    let teleport: Vec<f64> = {
        let seed = g.seed(topics);
        let total: f64 = seed.iter().sum();
        seed.into_iter().map(|x| x / total).collect()
    };
    let d = config.damping;
    let mut scores = teleport.clone();
    let mut next = vec![0.0; n];
    for _ in 0..config.iterations {
        let dangling: f64 = (0..n).filter(|&i| neighbors[i].is_empty()).map(|i| scores[i]).sum();
        for i in 0..n {
            next[i] = (1.0 - d + d * dangling) * teleport[i];
        }
        for u in 0..n {
            if neighbors[u].is_empty() {
                continue;
            }
            let share = d * scores[u] / neighbors[u].len() as f64;
            for &v in &neighbors[u] {
                next[v] += share;
            }
        }
        let delta = scores
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        std::mem::swap(&mut scores, &mut next);
        if delta < config.tolerance {
            break;
        }
    }
    Ok(g.entities.iter().copied().zip(scores).collect())
}
