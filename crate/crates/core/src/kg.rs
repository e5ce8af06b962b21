//! Triple store, query datasets, and topic-centred candidate extraction.
//!
//! Entities and relations get dense `u32` handles assigned by first
//! occurrence in the triples file. Triples are deduplicated and get a
//! [`TripleId`] equal to their position in the deduplicated list, which is
//! also the tie-break order used everywhere else in the crate.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RelationId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TripleId(pub u32);

impl EntityId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl TripleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple {
            head,
            relation,
            tail,
        }
    }
}

/// Immutable indexed knowledge graph.
#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    entity_names: Vec<String>,
    relation_names: Vec<String>,
    entity_lookup: HashMap<String, EntityId>,
    relation_lookup: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_lookup: HashMap<Triple, TripleId>,
    out_edges: Vec<Vec<TripleId>>,
    in_edges: Vec<Vec<TripleId>>,
}

/// Incremental builder used by the loaders and by tests.
#[derive(Debug, Default)]
pub struct KgBuilder {
    kg: KnowledgeGraph,
}

impl KgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.kg.entity_lookup.get(name) {
            return id;
        }
        let id = EntityId(self.kg.entity_names.len() as u32);
        self.kg.entity_names.push(name.to_owned());
        self.kg.entity_lookup.insert(name.to_owned(), id);
        self.kg.out_edges.push(Vec::new());
        self.kg.in_edges.push(Vec::new());
        id
    }

    pub fn relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.kg.relation_lookup.get(name) {
            return id;
        }
        let id = RelationId(self.kg.relation_names.len() as u32);
        self.kg.relation_names.push(name.to_owned());
        self.kg.relation_lookup.insert(name.to_owned(), id);
        id
    }

    /// Adds a triple by surface text; returns `None` when it was a duplicate.
    pub fn add(&mut self, head: &str, relation: &str, tail: &str) -> Option<TripleId> {
        let h = self.entity(head);
        let r = self.relation(relation);
        let t = self.entity(tail);
        self.add_ids(Triple::new(h, r, t))
    }

    fn add_ids(&mut self, triple: Triple) -> Option<TripleId> {
        if self.kg.triple_lookup.contains_key(&triple) {
            return None;
        }
        let id = TripleId(self.kg.triples.len() as u32);
        self.kg.triples.push(triple);
        self.kg.triple_lookup.insert(triple, id);
        self.kg.out_edges[triple.head.index()].push(id);
        self.kg.in_edges[triple.tail.index()].push(id);
        Some(id)
    }

    pub fn build(self) -> KnowledgeGraph {
        self.kg
    }
}

impl KnowledgeGraph {
    pub fn from_triples<'a, I>(triples: I) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut b = KgBuilder::new();
        for (h, r, t) in triples {
            b.add(h, r, t);
        }
        b.build()
    }

    pub fn entity_count(&self) -> usize {
        self.entity_names.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_names.len()
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn triple(&self, id: TripleId) -> Triple {
        self.triples[id.index()]
    }

    pub fn triple_id(&self, triple: &Triple) -> Option<TripleId> {
        self.triple_lookup.get(triple).copied()
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        &self.entity_names[id.index()]
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        &self.relation_names[id.index()]
    }

    pub fn entity_names(&self) -> &[String] {
        &self.entity_names
    }

    pub fn relation_names(&self) -> &[String] {
        &self.relation_names
    }

    pub fn entity_id(&self, name: &str) -> Option<EntityId> {
        self.entity_lookup.get(name).copied()
    }

    pub fn relation_id(&self, name: &str) -> Option<RelationId> {
        self.relation_lookup.get(name).copied()
    }

    /// Resolves a surface-text triple, if every part and the triple itself exist.
    pub fn resolve(&self, head: &str, relation: &str, tail: &str) -> Option<TripleId> {
        let t = Triple::new(
            self.entity_id(head)?,
            self.relation_id(relation)?,
            self.entity_id(tail)?,
        );
        self.triple_id(&t)
    }

    pub fn surface(&self, id: TripleId) -> (&str, &str, &str) {
        let t = self.triple(id);
        (
            self.entity_name(t.head),
            self.relation_name(t.relation),
            self.entity_name(t.tail),
        )
    }

    pub fn out_triples(&self, e: EntityId) -> &[TripleId] {
        &self.out_edges[e.index()]
    }

    pub fn in_triples(&self, e: EntityId) -> &[TripleId] {
        &self.in_edges[e.index()]
    }

    /// Outgoing `(relation, tail)` pairs of `e`.
    pub fn out_index(&self, e: EntityId) -> impl Iterator<Item = (RelationId, EntityId)> + '_ {
        self.out_edges[e.index()].iter().map(|&id| {
            let t = self.triple(id);
            (t.relation, t.tail)
        })
    }

    /// Incoming `(relation, head)` pairs of `e`.
    pub fn in_index(&self, e: EntityId) -> impl Iterator<Item = (RelationId, EntityId)> + '_ {
        self.in_edges[e.index()].iter().map(|&id| {
            let t = self.triple(id);
            (t.relation, t.head)
        })
    }

    /// Undirected BFS distances from `sources`, truncated at `max_depth`.
    /// Unreached entities are absent from the map.
    pub fn undirected_distances(
        &self,
        sources: impl IntoIterator<Item = EntityId>,
        max_depth: usize,
    ) -> HashMap<EntityId, usize> {
        let mut dist = HashMap::new();
        let mut queue = VecDeque::new();
        for s in sources {
            if s.index() < self.entity_count() && !dist.contains_key(&s) {
                dist.insert(s, 0);
                queue.push_back(s);
            }
        }
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            if d >= max_depth {
                continue;
            }
            let neighbors = self
                .out_index(u)
                .map(|(_, v)| v)
                .chain(self.in_index(u).map(|(_, v)| v));
            for v in neighbors {
                if let std::collections::hash_map::Entry::Vacant(slot) = dist.entry(v) {
                    slot.insert(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }

    /// All triples whose endpoints both lie within `hops` undirected steps of
    /// some topic entity, in ascending handle order.
    pub fn extract_candidate_subgraph(
        &self,
        topics: &BTreeSet<EntityId>,
        hops: usize,
    ) -> Vec<TripleId> {
        if topics.is_empty() {
            return Vec::new();
        }
        let dist = self.undirected_distances(topics.iter().copied(), hops);
        let mut out: Vec<TripleId> = dist
            .keys()
            .flat_map(|&e| self.out_triples(e).iter().copied())
            .filter(|&id| dist.contains_key(&self.triple(id).tail))
            .collect();
        out.sort_unstable();
        out
    }
}

/// Loads a TAB-separated `head relation tail` file.
pub fn load_triples(path: impl AsRef<Path>) -> Result<KnowledgeGraph> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut b = KgBuilder::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: format!("expected 3 TAB-separated fields, found {}", fields.len()),
            });
        }
        if fields.iter().any(|f| f.is_empty()) {
            return Err(Error::Parse {
                path: path.to_owned(),
                line: i + 1,
                message: "empty field".into(),
            });
        }
        b.add(fields[0], fields[1], fields[2]);
    }
    Ok(b.build())
}

/// Writes the graph back out in triples-file format (handle order).
pub fn write_triples(kg: &KnowledgeGraph) -> String {
    let mut s = String::new();
    for id in 0..kg.triple_count() {
        let (h, r, t) = kg.surface(TripleId(id as u32));
        s.push_str(h);
        s.push('\t');
        s.push_str(r);
        s.push('\t');
        s.push_str(t);
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuerySample {
    pub id: String,
    pub question: String,
    pub topic_entities: BTreeSet<EntityId>,
    pub answers: Vec<String>,
    pub answer_entities: BTreeSet<EntityId>,
    /// Reasoning hop count when the dataset provides it.
    pub hops: Option<usize>,
}

#[derive(Debug, Deserialize)]
struct RawSample {
    id: Option<String>,
    question: Option<String>,
    topic_entities: Option<Vec<String>>,
    answers: Option<Vec<String>>,
    #[serde(default)]
    hops: Option<usize>,
}

/// Loads a JSON-Lines question dataset and resolves surface texts against `kg`.
pub fn load_dataset(path: impl AsRef<Path>, kg: &KnowledgeGraph) -> Result<Vec<QuerySample>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSample = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let id = raw.id.ok_or_else(|| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: "record missing `id`".into(),
        })?;
        let missing = |field: &str| Error::Record {
            id: id.clone(),
            message: format!("missing required field `{field}`"),
        };
        let question = raw.question.ok_or_else(|| missing("question"))?;
        let topics = raw.topic_entities.ok_or_else(|| missing("topic_entities"))?;
        let answers = raw.answers.ok_or_else(|| missing("answers"))?;

        let mut topic_entities = BTreeSet::new();
        for t in &topics {
            match kg.entity_id(t) {
                Some(e) => {
                    topic_entities.insert(e);
                }
                None => log::warn!("sample {id}: topic entity `{t}` not in graph, dropped"),
            }
        }
        let answer_entities = answers.iter().filter_map(|a| kg.entity_id(a)).collect();
        out.push(QuerySample {
            id,
            question,
            topic_entities,
            answers,
            answer_entities,
            hops: raw.hops,
        });
    }
    Ok(out)
}

/// Checks that the forward and reverse adjacency describe the same triples.
pub fn indexes_consistent(kg: &KnowledgeGraph) -> bool {
    let mut from_out = HashSet::new();
    let mut from_in = HashSet::new();
    let mut out_total = 0;
    let mut in_total = 0;
    for e in 0..kg.entity_count() {
        let e = EntityId(e as u32);
        for (r, t) in kg.out_index(e) {
            out_total += 1;
            from_out.insert(Triple::new(e, r, t));
        }
        for (r, h) in kg.in_index(e) {
            in_total += 1;
            from_in.insert(Triple::new(h, r, e));
        }
    }
    out_total == kg.triple_count() && in_total == kg.triple_count() && from_out == from_in
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn chain() -> KnowledgeGraph {
        KnowledgeGraph::from_triples([("A", "r1", "B"), ("B", "r2", "C")])
    }

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_two_line_file() {
        let f = write_tmp("A\tr1\tB\nB\tr2\tC");
        let kg = load_triples(f.path()).unwrap();
        assert_eq!(kg.entity_count(), 3);
        assert_eq!(kg.relation_count(), 2);
        assert_eq!(kg.triple_count(), 2);
        assert_eq!(kg.entity_id("A"), Some(EntityId(0)));
        assert_eq!(kg.entity_id("C"), Some(EntityId(2)));
    }

    #[test]
    fn duplicate_lines_collapse() {
        let f = write_tmp("A\tr1\tB\nA\tr1\tB\n");
        let kg = load_triples(f.path()).unwrap();
        assert_eq!(kg.triple_count(), 1);
    }

    #[test]
    fn empty_file_is_empty_graph() {
        let f = write_tmp("");
        let kg = load_triples(f.path()).unwrap();
        assert_eq!(kg.triple_count(), 0);
        assert_eq!(kg.entity_count(), 0);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = write_tmp("A\tr1\tB\n\nA\tr1\n");
        match load_triples(f.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn chain_extraction_by_hops() {
        let kg = chain();
        let a: BTreeSet<_> = [kg.entity_id("A").unwrap()].into();
        let one = kg.extract_candidate_subgraph(&a, 1);
        assert_eq!(one, vec![TripleId(0)]);
        let two = kg.extract_candidate_subgraph(&a, 2);
        assert_eq!(two, vec![TripleId(0), TripleId(1)]);
        assert!(kg.extract_candidate_subgraph(&BTreeSet::new(), 3).is_empty());
        assert!(kg.extract_candidate_subgraph(&a, 0).is_empty());
    }

    #[test]
    fn extraction_follows_edges_backwards() {
        let kg = chain();
        let c: BTreeSet<_> = [kg.entity_id("C").unwrap()].into();
        assert_eq!(kg.extract_candidate_subgraph(&c, 1), vec![TripleId(1)]);
    }

    #[test]
    fn self_loop_on_topic_is_candidate() {
        let kg = KnowledgeGraph::from_triples([("A", "r", "A"), ("B", "r", "C")]);
        let a: BTreeSet<_> = [EntityId(0)].into();
        assert_eq!(kg.extract_candidate_subgraph(&a, 0), vec![TripleId(0)]);
    }

    #[test]
    fn dataset_resolution() {
        let kg = chain();
        let f = write_tmp(concat!(
            r#"{"id":"q1","question":"x?","topic_entities":["A"],"answers":["B","NotInKG"]}"#,
            "\n",
            r#"{"id":"q2","question":"y?","topic_entities":["Zz"],"answers":[]}"#,
            "\n"
        ));
        let ds = load_dataset(f.path(), &kg).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0].topic_entities, [EntityId(0)].into());
        assert_eq!(ds[0].answers, vec!["B".to_string(), "NotInKG".to_string()]);
        assert_eq!(ds[0].answer_entities, [EntityId(1)].into());
        assert!(ds[1].topic_entities.is_empty());
    }

    #[test]
    fn dataset_missing_field_names_record() {
        let kg = chain();
        let f = write_tmp(r#"{"id":"q9","question":"x?","answers":[]}"#);
        match load_dataset(f.path(), &kg) {
            Err(Error::Record { id, message }) => {
                assert_eq!(id, "q9");
                assert!(message.contains("topic_entities"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn write_then_load_is_identity() {
        let kg = KnowledgeGraph::from_triples([("A", "r1", "B"), ("B", "r2", "C"), ("C", "r1", "A")]);
        let f = write_tmp(&write_triples(&kg));
        let back = load_triples(f.path()).unwrap();
        assert_eq!(back.triples(), kg.triples());
        assert_eq!(back.entity_names(), kg.entity_names());
    }
}
