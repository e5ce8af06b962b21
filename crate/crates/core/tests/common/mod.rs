//! Independent oracles and fixtures shared by the integration tests. Nothing
//! here calls the code under test except to build inputs.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use kgrag::embeddings::{EmbeddingLookup, EmbeddingStore, HashEncoder, TextEncoder};
use kgrag::kg::{EntityId, KgBuilder, KnowledgeGraph, TripleId};
use kgrag::pipeline::SyntheticQuestion;
use kgrag::retriever::PreparedSample;
use kgrag::scorer::Network;
use kgrag::supervision::shortest_path_labels;
use rand::Rng;

/// Random directed multigraph on `n` named nodes (isolated nodes included).
pub fn random_kg(rng: &mut impl Rng, n: usize, edges: usize, relations: usize) -> KnowledgeGraph {
    let mut b = KgBuilder::new();
    for i in 0..n {
        b.entity(&format!("e{i}"));
    }
    for _ in 0..edges {
        let h = rng.gen_range(0..n);
        let t = rng.gen_range(0..n);
        let r = rng.gen_range(0..relations.max(1));
        b.add(&format!("e{h}"), &format!("r{r}"), &format!("e{t}"));
    }
    b.build()
}

pub fn all_triples(kg: &KnowledgeGraph) -> Vec<TripleId> {
    (0..kg.triple_count() as u32).map(TripleId).collect()
}

pub fn random_subset(rng: &mut impl Rng, n: usize, min: usize, max: usize) -> BTreeSet<EntityId> {
    let k = rng.gen_range(min..=max.min(n));
    let mut out = BTreeSet::new();
    while out.len() < k {
        out.insert(EntityId(rng.gen_range(0..n) as u32));
    }
    out
}

/// Local entity order used by the dense oracles: topics plus triple endpoints, sorted.
fn local_entities(kg: &KnowledgeGraph, cands: &[TripleId], topics: &BTreeSet<EntityId>) -> Vec<EntityId> {
    let mut s = topics.clone();
    for &c in cands {
        let t = kg.triple(c);
        s.insert(t.head);
        s.insert(t.tail);
    }
    s.into_iter().collect()
}

/// Directional distance encoding by dense matrix products: `A[v][u]` counts
/// triples `u -> v`; rows of `A` (forward) and `Aᵀ` (reverse) are normalised
/// to sum to one, empty rows stay zero.
pub fn dense_dde(
    kg: &KnowledgeGraph,
    cands: &[TripleId],
    topics: &BTreeSet<EntityId>,
    rounds: usize,
) -> HashMap<EntityId, Vec<f64>> {
    let ents = local_entities(kg, cands, topics);
    let n = ents.len();
    let idx: HashMap<EntityId, usize> = ents.iter().enumerate().map(|(i, e)| (*e, i)).collect();
    let mut a = vec![vec![0.0; n]; n];
    for &c in cands {
        let t = kg.triple(c);
        a[idx[&t.tail]][idx[&t.head]] += 1.0;
    }
    let at: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| a[j][i]).collect()).collect();
    let normalise = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        m.iter()
            .map(|row| {
                let s: f64 = row.iter().sum();
                row.iter().map(|x| if s == 0.0 { 0.0 } else { x / s }).collect()
            })
            .collect()
    };
    let (pf, pb) = (normalise(&a), normalise(&at));
    let matvec = |m: &Vec<Vec<f64>>, x: &Vec<f64>| -> Vec<f64> {
        m.iter().map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    };
    let seed: Vec<f64> = ents.iter().map(|e| if topics.contains(e) { 1.0 } else { 0.0 }).collect();
    let mut out: Vec<Vec<f64>> = seed.iter().map(|&s| vec![s]).collect();
    let (mut f, mut b) = (seed.clone(), seed.clone());
    let mut fwd = Vec::new();
    let mut bwd = Vec::new();
    for _ in 0..rounds {
        f = matvec(&pf, &f);
        b = matvec(&pb, &b);
        fwd.push(f.clone());
        bwd.push(b.clone());
    }
    for (i, row) in out.iter_mut().enumerate() {
        row.extend(fwd.iter().map(|r| r[i]));
        row.extend(bwd.iter().map(|r| r[i]));
    }
    ents.into_iter().zip(out).collect()
}

/// Union of triples over every minimum-length undirected path, found by
/// enumerating all simple paths.
pub fn exhaustive_labels(
    kg: &KnowledgeGraph,
    topics: &BTreeSet<EntityId>,
    answers: &BTreeSet<EntityId>,
) -> BTreeSet<TripleId> {
    let mut adj: HashMap<EntityId, Vec<(EntityId, TripleId)>> = HashMap::new();
    for id in all_triples(kg) {
        let t = kg.triple(id);
        adj.entry(t.head).or_default().push((t.tail, id));
        adj.entry(t.tail).or_default().push((t.head, id));
    }
    fn dfs(
        adj: &HashMap<EntityId, Vec<(EntityId, TripleId)>>,
        at: EntityId,
        goal: EntityId,
        visited: &mut Vec<EntityId>,
        path: &mut Vec<TripleId>,
        found: &mut Vec<Vec<TripleId>>,
    ) {
        if at == goal {
            found.push(path.clone());
            return;
        }
        for &(next, id) in adj.get(&at).map(Vec::as_slice).unwrap_or(&[]) {
            if visited.contains(&next) {
                continue;
            }
            visited.push(next);
            path.push(id);
            dfs(adj, next, goal, visited, path, found);
            path.pop();
            visited.pop();
        }
    }
    let mut out = BTreeSet::new();
    for &t in topics {
        for &a in answers {
            if t == a {
                continue;
            }
            let mut found = Vec::new();
            dfs(&adj, t, a, &mut vec![t], &mut Vec::new(), &mut found);
            if let Some(min) = found.iter().map(Vec::len).min() {
                for p in found.iter().filter(|p| p.len() == min) {
                    out.extend(p.iter().copied());
                }
            }
        }
    }
    out
}

/// Dense power iteration for personalized PageRank on the undirected
/// candidate graph (one neighbour entry per triple endpoint, self-loops once),
/// with dangling mass sent back to the teleport vector.
pub fn dense_ppr(
    kg: &KnowledgeGraph,
    cands: &[TripleId],
    topics: &BTreeSet<EntityId>,
    damping: f64,
    iterations: usize,
) -> HashMap<EntityId, f64> {
    let ents = local_entities(kg, cands, topics);
    let n = ents.len();
    let idx: HashMap<EntityId, usize> = ents.iter().enumerate().map(|(i, e)| (*e, i)).collect();
    // m[v][u]: transition weight u -> v before degree normalisation
    let mut m = vec![vec![0.0; n]; n];
    let mut deg = vec![0.0; n];
    for &c in cands {
        let t = kg.triple(c);
        let (h, tl) = (idx[&t.head], idx[&t.tail]);
        m[tl][h] += 1.0;
        deg[h] += 1.0;
        if h != tl {
            m[h][tl] += 1.0;
            deg[tl] += 1.0;
        }
    }
    let p: Vec<f64> = {
        let k = ents.iter().filter(|e| topics.contains(e)).count() as f64;
        ents.iter().map(|e| if topics.contains(e) { 1.0 / k } else { 0.0 }).collect()
    };
    let mut x = p.clone();
    for _ in 0..iterations {
        let dangling: f64 = (0..n).filter(|&u| deg[u] == 0.0).map(|u| x[u]).sum();
        x = (0..n)
            .map(|v| {
                let walk: f64 = (0..n).filter(|&u| deg[u] > 0.0).map(|u| m[v][u] / deg[u] * x[u]).sum();
                damping * walk + (1.0 - damping) * p[v] + damping * dangling * p[v]
            })
            .collect();
    }
    ents.into_iter().zip(x).collect()
}

/// Straight-line forward pass over the flat parameter layout: per layer the
/// row-major weights then the biases; hidden layers use `act`, the output is
/// the raw logit.
pub fn oracle_logit(net: &Network, x: &[f64], act: fn(f64) -> f64) -> f64 {
    let params = net.params();
    let mut at = 0;
    let mut h = x.to_vec();
    let layers = net.shapes().len();
    for (l, &(rows, cols)) in net.shapes().iter().enumerate() {
        let w = &params[at..at + rows * cols];
        let b = &params[at + rows * cols..at + rows * cols + rows];
        at += rows * cols + rows;
        h = (0..rows)
            .map(|r| {
                let z = b[r] + (0..cols).map(|c| w[r * cols + c] * h[c]).sum::<f64>();
                if l + 1 == layers {
                    z
                } else {
                    act(z)
                }
            })
            .collect();
    }
    h[0]
}

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

/// Synthetic questions prepared for retrieval with hash embeddings.
pub struct SynthFixture {
    pub data: kgrag::pipeline::SyntheticData,
    pub entities: EmbeddingStore,
    pub relations: EmbeddingStore,
    pub train: Vec<PreparedSample>,
    pub test: Vec<PreparedSample>,
    pub labels: BTreeMap<String, BTreeSet<TripleId>>,
}

impl SynthFixture {
    pub fn new(spec: &kgrag::pipeline::SyntheticKgSpec, dim: usize, hops: usize) -> Self {
        let data = kgrag::pipeline::generate_synthetic(spec).unwrap();
        let enc = HashEncoder::new(dim, 0);
        let store = |keys: Vec<String>| {
            let rows = enc.embed(&keys).unwrap();
            EmbeddingStore::from_rows(dim, keys, rows).unwrap()
        };
        let entities = store(data.kg.entity_names().to_vec());
        let relations = store(data.kg.relation_names().to_vec());
        let prep = |qs: &[SyntheticQuestion]| -> Vec<PreparedSample> {
            qs.iter()
                .map(|q| {
                    let topics: BTreeSet<EntityId> =
                        q.topic_entities.iter().map(|t| data.kg.entity_id(t).unwrap()).collect();
                    PreparedSample {
                        id: q.id.clone(),
                        candidates: data.kg.extract_candidate_subgraph(&topics, hops),
                        topics,
                        query: enc.embed_one(&q.question),
                    }
                })
                .collect()
        };
        let train = prep(&data.train);
        let test = prep(&data.test);
        let labels = data
            .train
            .iter()
            .chain(&data.test)
            .zip(train.iter().chain(&test))
            .map(|(q, s)| (q.id.clone(), shortest_path_labels(&data.kg, &s.topics, &answer_set(&data.kg, q))))
            .collect();
        SynthFixture {
            data,
            entities,
            relations,
            train,
            test,
            labels,
        }
    }

    pub fn lookup(&self) -> EmbeddingLookup<'_> {
        EmbeddingLookup {
            entities: &self.entities,
            relations: &self.relations,
        }
    }
}

pub fn answer_set(kg: &KnowledgeGraph, q: &SyntheticQuestion) -> BTreeSet<EntityId> {
    q.answers.iter().map(|a| kg.entity_id(a).unwrap()).collect()
}
