use crate::error::Result;
use crate::kg::{KnowledgeGraph, TripleId};

use super::EmbeddingStore;

/// Entity and relation stores, keyed by surface text.
#[derive(Debug, Clone, Copy)]
pub struct EmbeddingLookup<'a> {
    pub entities: &'a EmbeddingStore,
    pub relations: &'a EmbeddingStore,
}

/// How the baseline represents a triple.
#[derive(Debug, Clone, Copy)]
pub enum BaselineMode<'a> {
    /// Mean of the head, relation and tail vectors.
    ComponentMean,
    /// A store keyed by [`triple_text`].
    WholeTriple(&'a EmbeddingStore),
}

pub fn triple_text(head: &str, relation: &str, tail: &str) -> String {
    format!("{head} {relation} {tail}")
}

/// Cosine similarity in `f64`; zero-norm inputs give `0`.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Structure-free retrieval scores, one per candidate in input order.
pub fn cosine_baseline_scores(
    kg: &KnowledgeGraph,
    lookup: EmbeddingLookup<'_>,
    query: &[f32],
    candidates: &[TripleId],
    mode: BaselineMode<'_>,
) -> Result<Vec<(TripleId, f64)>> {
    candidates
        .iter()
        .map(|&id| {
            let (h, r, t) = kg.surface(id);
            let score = match mode {
                BaselineMode::ComponentMean => {
                    let zh = lookup.entities.require(h)?;
                    let zr = lookup.relations.require(r)?;
                    let zt = lookup.entities.require(t)?;
                    let mean: Vec<f32> = zh
                        .iter()
                        .zip(zr)
                        .zip(zt)
                        .map(|((a, b), c)| ((*a as f64 + *b as f64 + *c as f64) / 3.0) as f32)
                        .collect();
                    cosine(query, &mean)
                }
                BaselineMode::WholeTriple(store) => cosine(query, store.require(&triple_text(h, r, t))?),
            };
            Ok((id, score))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn setup() -> (KnowledgeGraph, EmbeddingStore, EmbeddingStore) {
        let kg = KnowledgeGraph::from_triples([("A", "r", "B"), ("A", "s", "C")]);
        let ents = EmbeddingStore::from_rows(
            2,
            vec!["A".into(), "B".into(), "C".into()],
            vec![vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, -1.0]],
        )
        .unwrap();
        let rels =
            EmbeddingStore::from_rows(2, vec!["r".into(), "s".into()], vec![vec![1.0, 0.0], vec![-1.0, 0.0]])
                .unwrap();
        (kg, ents, rels)
    }

    #[test]
    fn identical_direction_scores_one() {
        let (kg, e, r) = setup();
        let lookup = EmbeddingLookup {
            entities: &e,
            relations: &r,
        };
        let s = cosine_baseline_scores(&kg, lookup, &[2.0, 0.0], &[TripleId(0)], BaselineMode::ComponentMean)
            .unwrap();
        assert!((s[0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_scores_zero() {
        let (kg, e, r) = setup();
        let lookup = EmbeddingLookup {
            entities: &e,
            relations: &r,
        };
        // mean of A, s, C = (0, -1/3)
        let s = cosine_baseline_scores(&kg, lookup, &[1.0, 0.0], &[TripleId(1)], BaselineMode::ComponentMean)
            .unwrap();
        assert_eq!(s[0].1, 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn missing_key_is_named() {
        let (kg, e, _) = setup();
        let empty = EmbeddingStore::new(2);
        let lookup = EmbeddingLookup {
            entities: &e,
            relations: &empty,
        };
        match cosine_baseline_scores(&kg, lookup, &[1.0, 0.0], &[TripleId(0)], BaselineMode::ComponentMean) {
            Err(Error::MissingEmbedding(k)) => assert_eq!(k, "r"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn whole_triple_mode_uses_triple_keys() {
        let (kg, e, r) = setup();
        let whole = EmbeddingStore::from_rows(
            2,
            vec![triple_text("A", "r", "B"), triple_text("A", "s", "C")],
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap();
        let lookup = EmbeddingLookup {
            entities: &e,
            relations: &r,
        };
        let s = cosine_baseline_scores(
            &kg,
            lookup,
            &[1.0, 0.0],
            &[TripleId(0), TripleId(1)],
            BaselineMode::WholeTriple(&whole),
        )
        .unwrap();
        assert_eq!(s[0].1, 0.0);
        assert!((s[1].1 - 1.0).abs() < 1e-12);
    }
}
