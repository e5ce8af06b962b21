//! Weak relevance labels for retriever training.
//!
//! The surrogate evidence for a question is the union of every triple lying
//! on some minimum-length undirected path between a topic entity and an
//! answer entity. Externally produced labels (e.g. from an LLM labeller)
//! share the same JSON-Lines format.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, TripleId};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WeakLabelSet {
    pub sample_id: String,
    pub positive_triples: BTreeSet<TripleId>,
}

/// Undirected adjacency restricted to a triple subset.
struct SubgraphView {
    adj: HashMap<EntityId, Vec<(EntityId, TripleId)>>,
}

impl SubgraphView {
    fn new(kg: &KnowledgeGraph, triples: impl Iterator<Item = TripleId>) -> Self {
        let mut adj: HashMap<EntityId, Vec<(EntityId, TripleId)>> = HashMap::new();
        for id in triples {
            let t = kg.triple(id);
            adj.entry(t.head).or_default().push((t.tail, id));
            if t.head != t.tail {
                adj.entry(t.tail).or_default().push((t.head, id));
            }
        }
        SubgraphView { adj }
    }

    fn bfs(&self, source: EntityId) -> HashMap<EntityId, usize> {
        let mut dist = HashMap::from([(source, 0usize)]);
        let mut queue = VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            let d = dist[&u];
            for &(v, _) in self.adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                dist.entry(v).or_insert_with(|| {
                    queue.push_back(v);
                    d + 1
                });
            }
        }
        dist
    }

    fn labels(&self, topics: &BTreeSet<EntityId>, answers: &BTreeSet<EntityId>) -> BTreeSet<TripleId> {
        let mut out = BTreeSet::new();
        if topics.is_empty() || answers.is_empty() {
            return out;
        }
        let answer_dists: Vec<(EntityId, HashMap<EntityId, usize>)> =
            answers.iter().map(|&a| (a, self.bfs(a))).collect();
        for &t in topics {
            let from_topic = self.bfs(t);
            for (a, from_answer) in &answer_dists {
                let Some(&total) = from_topic.get(a) else {
                    continue;
                };
                if total == 0 {
                    continue;
                }
                // A triple lies on a shortest t-a path iff one orientation of it
                // bridges distance layers exactly.
                for (&u, &du) in &from_topic {
                    if du >= total {
                        continue;
                    }
                    for &(v, id) in self.adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
                        if from_answer.get(&v).is_some_and(|&dv| du + 1 + dv == total) {
                            out.insert(id);
                        }
                    }
                }
            }
        }
        out
    }
}

/// Shortest-path surrogate labels over the whole graph.
pub fn shortest_path_labels(
    kg: &KnowledgeGraph,
    topics: &BTreeSet<EntityId>,
    answers: &BTreeSet<EntityId>,
) -> BTreeSet<TripleId> {
    let ids = (0..kg.triple_count() as u32).map(TripleId);
    SubgraphView::new(kg, ids).labels(topics, answers)
}

/// Shortest-path labels computed inside a candidate subgraph only, so that
/// the positives are always a subset of `candidates`.
pub fn shortest_path_labels_within(
    kg: &KnowledgeGraph,
    candidates: &[TripleId],
    topics: &BTreeSet<EntityId>,
    answers: &BTreeSet<EntityId>,
) -> BTreeSet<TripleId> {
    SubgraphView::new(kg, candidates.iter().copied()).labels(topics, answers)
}

/// One JSON-Lines record of the shared triple-list format.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TripleListRecord {
    pub id: String,
    pub triples: Vec<[String; 3]>,
}

impl TripleListRecord {
    pub fn from_ids(id: &str, kg: &KnowledgeGraph, triples: impl IntoIterator<Item = TripleId>) -> Self {
        TripleListRecord {
            id: id.to_owned(),
            triples: triples
                .into_iter()
                .map(|t| {
                    let (h, r, tl) = kg.surface(t);
                    [h.to_owned(), r.to_owned(), tl.to_owned()]
                })
                .collect(),
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq)]
pub struct ImportedLabels {
    pub labels: BTreeMap<String, BTreeSet<TripleId>>,
    /// Triples that did not resolve against the graph.
    pub dropped: usize,
}

#[derive(Deserialize)]
struct RawLabelRecord {
    id: Option<String>,
    triples: Option<Vec<Vec<String>>>,
}

/// Reads `{"id", "triples": [[h, r, t], ...]}` records and resolves them.
pub fn import_relevance_labels(path: impl AsRef<Path>, kg: &KnowledgeGraph) -> Result<ImportedLabels> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = ImportedLabels::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawLabelRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        let id = raw.id.ok_or_else(|| Error::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: "record missing `id`".into(),
        })?;
        let triples = raw.triples.ok_or_else(|| Error::Record {
            id: id.clone(),
            message: "missing `triples` array".into(),
        })?;
        let set = out.labels.entry(id.clone()).or_default();
        for parts in triples {
            if parts.len() != 3 {
                return Err(Error::Record {
                    id,
                    message: format!("triple has {} parts, expected 3", parts.len()),
                });
            }
            match kg.resolve(&parts[0], &parts[1], &parts[2]) {
                Some(t) => {
                    set.insert(t);
                }
                None => out.dropped += 1,
            }
        }
    }
    if out.dropped > 0 {
        log::warn!("{}: {} label triple(s) not found in graph", path.display(), out.dropped);
    }
    Ok(out)
}

/// Serializes label sets in the import format.
pub fn write_label_records<'a>(
    kg: &KnowledgeGraph,
    labels: impl IntoIterator<Item = (&'a str, &'a BTreeSet<TripleId>)>,
) -> Result<String> {
    let mut s = String::new();
    for (id, set) in labels {
        let rec = TripleListRecord::from_ids(id, kg, set.iter().copied());
        s.push_str(&serde_json::to_string(&rec)?);
        s.push('\n');
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn ids(kg: &KnowledgeGraph, names: &[&str]) -> BTreeSet<EntityId> {
        names.iter().map(|n| kg.entity_id(n).unwrap()).collect()
    }

    #[test]
    fn chain_labels() {
        let kg = KnowledgeGraph::from_triples([("A", "r1", "B"), ("B", "r2", "C")]);
        let l = shortest_path_labels(&kg, &ids(&kg, &["A"]), &ids(&kg, &["C"]));
        assert_eq!(l, [TripleId(0), TripleId(1)].into());
    }

    #[test]
    fn topic_equal_answer_is_empty() {
        let kg = KnowledgeGraph::from_triples([("A", "r1", "B")]);
        assert!(shortest_path_labels(&kg, &ids(&kg, &["A"]), &ids(&kg, &["A"])).is_empty());
    }

    #[test]
    fn diamond_keeps_both_paths() {
        let kg = KnowledgeGraph::from_triples([
            ("A", "r", "B"),
            ("B", "r", "D"),
            ("A", "r", "C"),
            ("C", "r", "D"),
        ]);
        let l = shortest_path_labels(&kg, &ids(&kg, &["A"]), &ids(&kg, &["D"]));
        assert_eq!(l.len(), 4);
    }

    #[test]
    fn unreachable_or_empty_sets() {
        let kg = KnowledgeGraph::from_triples([("A", "r", "B"), ("C", "r", "D")]);
        assert!(shortest_path_labels(&kg, &ids(&kg, &["A"]), &ids(&kg, &["D"])).is_empty());
        assert!(shortest_path_labels(&kg, &BTreeSet::new(), &ids(&kg, &["D"])).is_empty());
        assert!(shortest_path_labels(&kg, &ids(&kg, &["A"]), &BTreeSet::new()).is_empty());
    }

    #[test]
    fn against_edge_direction() {
        let kg = KnowledgeGraph::from_triples([("B", "r", "A"), ("B", "s", "C")]);
        let l = shortest_path_labels(&kg, &ids(&kg, &["A"]), &ids(&kg, &["C"]));
        assert_eq!(l.len(), 2);
    }

    #[test]
    fn within_candidates_is_subset() {
        let kg = KnowledgeGraph::from_triples([("A", "r", "B"), ("B", "r", "C"), ("C", "r", "D")]);
        let topics = ids(&kg, &["A"]);
        let cands = kg.extract_candidate_subgraph(&topics, 2);
        let l = shortest_path_labels_within(&kg, &cands, &topics, &ids(&kg, &["D"]));
        assert!(l.is_empty());
        let l = shortest_path_labels_within(&kg, &cands, &topics, &ids(&kg, &["C"]));
        assert_eq!(l, [TripleId(0), TripleId(1)].into());
    }

    fn tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn import_resolves_and_counts_drops() {
        let kg = KnowledgeGraph::from_triples([("A", "r1", "B"), ("B", "r2", "C")]);
        let f = tmp(concat!(
            r#"{"id":"q1","triples":[["A","r1","B"],["B","r2","C"]]}"#,
            "\n",
            r#"{"id":"q2","triples":[["A","r1","B"],["Nope","r1","B"]]}"#,
            "\n",
            r#"{"id":"q3","triples":[]}"#,
        ));
        let got = import_relevance_labels(f.path(), &kg).unwrap();
        assert_eq!(got.labels["q1"].len(), 2);
        assert_eq!(got.labels["q2"].len(), 1);
        assert!(got.labels["q3"].is_empty());
        assert_eq!(got.dropped, 1);
    }

    #[test]
    fn import_malformed_record_names_id() {
        let kg = KnowledgeGraph::from_triples([("A", "r1", "B")]);
        let f = tmp(r#"{"id":"bad","triples":[["A","r1"]]}"#);
        match import_relevance_labels(f.path(), &kg) {
            Err(Error::Record { id, .. }) => assert_eq!(id, "bad"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn written_labels_reimport() {
        let kg = KnowledgeGraph::from_triples([("A", "r1", "B"), ("B", "r2", "C")]);
        let set: BTreeSet<_> = [TripleId(1)].into();
        let text = write_label_records(&kg, [("q", &set)]).unwrap();
        let f = tmp(&text);
        let got = import_relevance_labels(f.path(), &kg).unwrap();
        assert_eq!(got.labels["q"], set);
    }
}
