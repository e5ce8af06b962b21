//! Seeded synthetic knowledge graph with planted multi-hop questions.
//!
//! Background edges are random; a question follows a forward relation chain
//! `topic -r1-> e1 -r2-> ... -rk-> answer` and names every relation on it,
//! so relation surface text carries the signal a retriever must pick up.
//! Chains are kept only when the answer is the unique end of the relation
//! chain and the chain is the unique shortest undirected path.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{write_triples, EntityId, KgBuilder, KnowledgeGraph, TripleId};
use crate::supervision::shortest_path_labels;

pub const DEFAULT_RELATIONS: [&str; 8] = [
    "spouse", "director", "capital", "founder", "genre", "language", "currency", "mascot",
];

/// Questions of one hop count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HopTemplate {
    pub hops: usize,
    pub train: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticKgSpec {
    pub entities: usize,
    pub relations: Vec<String>,
    /// Random out-edges per entity.
    pub out_degree: usize,
    pub templates: Vec<HopTemplate>,
    pub seed: u64,
    /// Walks tried per requested question before giving up.
    pub attempts_per_question: usize,
}

impl Default for SyntheticKgSpec {
    fn default() -> Self {
        SyntheticKgSpec {
            entities: 200,
            relations: DEFAULT_RELATIONS.iter().map(|s| s.to_string()).collect(),
            out_degree: 2,
            templates: vec![
                HopTemplate {
                    hops: 1,
                    train: 100,
                    test: 34,
                },
                HopTemplate {
                    hops: 2,
                    train: 100,
                    test: 33,
                },
                HopTemplate {
                    hops: 3,
                    train: 100,
                    test: 33,
                },
            ],
            seed: 7,
            attempts_per_question: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticQuestion {
    pub id: String,
    pub question: String,
    pub topic_entities: Vec<String>,
    pub answers: Vec<String>,
    pub hops: usize,
    /// The planted path as `[head, relation, tail]`.
    pub path: Vec<[String; 3]>,
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub kg: KnowledgeGraph,
    pub train: Vec<SyntheticQuestion>,
    pub test: Vec<SyntheticQuestion>,
}

impl SyntheticData {
    pub fn kg_text(&self) -> String {
        write_triples(&self.kg)
    }

    pub fn dataset_text(questions: &[SyntheticQuestion]) -> Result<String> {
        let mut s = String::new();
        for q in questions {
            s.push_str(&serde_json::to_string(q)?);
            s.push('\n');
        }
        Ok(s)
    }
}

pub fn entity_name(i: usize) -> String {
    format!("ent{i:03}")
}

fn question_text(kg: &KnowledgeGraph, topic: EntityId, path: &[TripleId]) -> String {
    let mut s = String::from("what is the");
    for (i, &id) in path.iter().rev().enumerate() {
        if i > 0 {
            s.push_str(" of the");
        }
        s.push(' ');
        s.push_str(kg.relation_name(kg.triple(id).relation));
    }
    s.push_str(" of ");
    s.push_str(kg.entity_name(topic));
    s.push('?');
    s
}

/// Largest finite undirected eccentricity.
fn diameter(kg: &KnowledgeGraph) -> usize {
    (0..kg.entity_count())
        .map(|e| {
            kg.undirected_distances([EntityId(e as u32)], usize::MAX)
                .values()
                .copied()
                .max()
                .unwrap_or(0)
        })
        .max()
        .unwrap_or(0)
}

/// Entities reached from `start` by following `relations` forward.
fn follow_chain(kg: &KnowledgeGraph, start: EntityId, relations: &[crate::kg::RelationId]) -> BTreeSet<EntityId> {
    let mut frontier: BTreeSet<EntityId> = [start].into();
    for &r in relations {
        frontier = frontier
            .iter()
            .flat_map(|&e| kg.out_index(e).filter(move |(rel, _)| *rel == r).map(|(_, t)| t))
            .collect();
    }
    frontier
}

fn random_walk(kg: &KnowledgeGraph, hops: usize, rng: &mut ChaCha8Rng) -> Option<(EntityId, Vec<TripleId>)> {
    let topic = EntityId(rng.gen_range(0..kg.entity_count()) as u32);
    let mut visited = vec![topic];
    let mut path = Vec::with_capacity(hops);
    let mut at = topic;
    for _ in 0..hops {
        let &id = kg.out_triples(at).choose(rng)?;
        let next = kg.triple(id).tail;
        if visited.contains(&next) {
            return None;
        }
        visited.push(next);
        path.push(id);
        at = next;
    }
    Some((topic, path))
}

fn accept(kg: &KnowledgeGraph, topic: EntityId, path: &[TripleId]) -> bool {
    let answer = kg.triple(*path.last().expect("nonempty path")).tail;
    let relations: Vec<_> = path.iter().map(|&id| kg.triple(id).relation).collect();
    if follow_chain(kg, topic, &relations) != [answer].into() {
        return false;
    }
    let labels = shortest_path_labels(kg, &[topic].into(), &[answer].into());
    labels == path.iter().copied().collect::<BTreeSet<_>>()
}

/// Deterministic given the spec (including its seed).
pub fn generate_synthetic(spec: &SyntheticKgSpec) -> Result<SyntheticData> {
    if spec.entities < 2 || spec.relations.is_empty() {
        return Err(Error::Generation("need at least 2 entities and 1 relation".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut b = KgBuilder::new();
    for i in 0..spec.entities {
        b.entity(&entity_name(i));
    }
    for r in &spec.relations {
        b.relation(r);
    }
    for i in 0..spec.entities {
        let mut placed = 0;
        let mut tries = 0;
        while placed < spec.out_degree && tries < 50 * spec.out_degree.max(1) {
            tries += 1;
            let j = rng.gen_range(0..spec.entities);
            if j == i {
                continue;
            }
            let r = &spec.relations[rng.gen_range(0..spec.relations.len())];
            if b.add(&entity_name(i), r, &entity_name(j)).is_some() {
                placed += 1;
            }
        }
    }
    let kg = b.build();

    let diam = diameter(&kg);
    let distinct: BTreeSet<usize> = spec.templates.iter().map(|t| t.hops).collect();
    if distinct.len() != spec.templates.len() {
        return Err(Error::Generation("each hop count may appear in one template only".into()));
    }
    if let Some(t) = spec.templates.iter().find(|t| t.hops == 0 || t.hops > diam) {
        return Err(Error::Generation(format!(
            "template needs {} hops but the graph diameter is {diam}",
            t.hops
        )));
    }

    let mut by_hops: BTreeMap<usize, Vec<SyntheticQuestion>> = BTreeMap::new();
    let mut used: BTreeSet<(EntityId, Vec<TripleId>)> = BTreeSet::new();
    for t in &spec.templates {
        let want = t.train + t.test;
        let budget = want.max(1) * spec.attempts_per_question.max(1);
        let bucket = by_hops.entry(t.hops).or_default();
        let mut tries = 0;
        while bucket.len() < want {
            tries += 1;
            if tries > budget {
                return Err(Error::Generation(format!(
                    "found only {} of {want} {}-hop questions with a unique planted path",
                    bucket.len(),
                    t.hops
                )));
            }
            let Some((topic, path)) = random_walk(&kg, t.hops, &mut rng) else {
                continue;
            };
            if used.contains(&(topic, path.clone())) || !accept(&kg, topic, &path) {
                continue;
            }
            used.insert((topic, path.clone()));
            let answer = kg.entity_name(kg.triple(*path.last().unwrap()).tail).to_owned();
            bucket.push(SyntheticQuestion {
                id: String::new(),
                question: question_text(&kg, topic, &path),
                topic_entities: vec![kg.entity_name(topic).to_owned()],
                answers: vec![answer],
                hops: t.hops,
                path: path
                    .iter()
                    .map(|&id| {
                        let (h, r, tl) = kg.surface(id);
                        [h.to_owned(), r.to_owned(), tl.to_owned()]
                    })
                    .collect(),
            });
        }
    }

    let mut train = Vec::new();
    let mut test = Vec::new();
    for t in &spec.templates {
        let bucket = by_hops.get_mut(&t.hops).expect("bucket filled above");
        let rest = bucket.split_off(t.train.min(bucket.len()));
        train.append(bucket);
        test.extend(rest.into_iter().take(t.test));
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    for (i, q) in train.iter_mut().enumerate() {
        q.id = format!("train-{i:04}");
    }
    for (i, q) in test.iter_mut().enumerate() {
        q.id = format!("test-{i:04}");
    }
    Ok(SyntheticData { kg, train, test })
}

/// Whether every question's planted path is exactly its weak label set.
pub fn planted_paths_match_labels(kg: &KnowledgeGraph, questions: &[SyntheticQuestion]) -> bool {
    questions.iter().all(|q| {
        let topics: BTreeSet<EntityId> = q.topic_entities.iter().filter_map(|t| kg.entity_id(t)).collect();
        let answers: BTreeSet<EntityId> = q.answers.iter().filter_map(|a| kg.entity_id(a)).collect();
        let planted: Option<BTreeSet<TripleId>> = q.path.iter().map(|[h, r, t]| kg.resolve(h, r, t)).collect();
        planted.is_some_and(|p| shortest_path_labels(kg, &topics, &answers) == p)
    })
}
