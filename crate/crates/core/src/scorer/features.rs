//! Per-triple input rows `[z_q || z_h || z_r || z_t || z_tau]`.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingLookup;
use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, TripleId};
use crate::structural::{compute_dde, ppr_scores, topic_onehot, DdeConfig, EntityEncoding, EntityEncodings, PprConfig};

/// Which structural signal accompanies the text embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum FeatureVariant {
    /// Directional distance encoding.
    #[default]
    #[serde(rename = "dde")]
    Dde,
    /// Topic-membership bit of head and tail.
    #[serde(rename = "topic_onehot")]
    TopicOnehot,
    /// Text embeddings only.
    #[serde(rename = "none")]
    None,
    /// Distance encoding plus personalized PageRank of head and tail.
    #[serde(rename = "dde+ppr")]
    DdePpr,
    /// GraphSAGE-updated entity embeddings plus the topic bit.
    #[serde(rename = "graphsage")]
    GraphSage,
}

impl FeatureVariant {
    pub fn name(self) -> &'static str {
        match self {
            FeatureVariant::Dde => "dde",
            FeatureVariant::TopicOnehot => "topic_onehot",
            FeatureVariant::None => "none",
            FeatureVariant::DdePpr => "dde+ppr",
            FeatureVariant::GraphSage => "graphsage",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "dde" => FeatureVariant::Dde,
            "topic_onehot" => FeatureVariant::TopicOnehot,
            "none" => FeatureVariant::None,
            "dde+ppr" => FeatureVariant::DdePpr,
            "graphsage" => FeatureVariant::GraphSage,
            other => return Err(Error::Config(format!("unknown feature variant `{other}`"))),
        })
    }

    pub const ALL: [FeatureVariant; 5] = [
        FeatureVariant::Dde,
        FeatureVariant::TopicOnehot,
        FeatureVariant::None,
        FeatureVariant::DdePpr,
        FeatureVariant::GraphSage,
    ];
}

/// Everything that determines the width and layout of a feature row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSpec {
    pub variant: FeatureVariant,
    pub text_dim: usize,
    pub dde: DdeConfig,
    /// Output width of the GraphSAGE encoder (only for that variant).
    pub sage_dim: usize,
}

impl FeatureSpec {
    /// Width of the per-entity structural vector.
    pub fn entity_struct_dim(&self) -> usize {
        match self.variant {
            FeatureVariant::Dde => self.dde.entity_dim(),
            FeatureVariant::DdePpr => self.dde.entity_dim() + 1,
            FeatureVariant::TopicOnehot | FeatureVariant::GraphSage => 1,
            FeatureVariant::None => 0,
        }
    }

    /// Width of the entity segments `z_h`, `z_t`.
    pub fn entity_dim(&self) -> usize {
        match self.variant {
            FeatureVariant::GraphSage => self.sage_dim,
            _ => self.text_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.text_dim + 2 * self.entity_dim() + 2 * self.entity_struct_dim()
    }
}

/// Per-entity structural vectors for the chosen variant. For `dde+ppr` the
/// PageRank score is scaled by the number of subgraph entities so that a
/// uniform distribution maps to 1.
pub fn structural_encodings(
    kg: &KnowledgeGraph,
    candidates: &[TripleId],
    topics: &BTreeSet<EntityId>,
    spec: &FeatureSpec,
) -> Result<EntityEncodings> {
    Ok(match spec.variant {
        FeatureVariant::Dde => compute_dde(kg, candidates, topics, spec.dde),
        FeatureVariant::TopicOnehot | FeatureVariant::GraphSage => topic_onehot(kg, candidates, topics),
        FeatureVariant::None => compute_dde(kg, candidates, topics, spec.dde)
            .into_keys()
            .map(|e| (e, EntityEncoding(Vec::new())))
            .collect(),
        FeatureVariant::DdePpr => {
            let mut enc = compute_dde(kg, candidates, topics, spec.dde);
            if topics.is_empty() {
                for v in enc.values_mut() {
                    v.0.push(0.0);
                }
            } else {
                let ppr = ppr_scores(kg, candidates, topics, PprConfig::default())?;
                let n = ppr.len() as f64;
                for (e, v) in enc.iter_mut() {
                    v.0.push(ppr.get(e).copied().unwrap_or(0.0) * n);
                }
            }
            enc
        }
    })
}

/// Entity-segment vectors keyed by entity; the default source is the text
/// embedding store, GraphSAGE supplies its own.
pub type EntityVectors = HashMap<EntityId, Vec<f64>>;

pub fn entity_text_vectors(
    kg: &KnowledgeGraph,
    lookup: EmbeddingLookup<'_>,
    candidates: &[TripleId],
) -> Result<EntityVectors> {
    let mut out = HashMap::new();
    for &id in candidates {
        let t = kg.triple(id);
        for e in [t.head, t.tail] {
            if let std::collections::hash_map::Entry::Vacant(slot) = out.entry(e) {
                let v = lookup.entities.require(kg.entity_name(e))?;
                slot.insert(v.iter().map(|&x| x as f64).collect());
            }
        }
    }
    Ok(out)
}

/// Builds one row per candidate, in candidate order, into a flat buffer.
pub fn assemble_features(
    kg: &KnowledgeGraph,
    spec: &FeatureSpec,
    query: &[f32],
    candidates: &[TripleId],
    lookup: EmbeddingLookup<'_>,
    entity_vectors: &EntityVectors,
    structural: &EntityEncodings,
) -> Result<Vec<f64>> {
    if query.len() != spec.text_dim {
        return Err(Error::Shape(format!(
            "query embedding has dim {}, expected {}",
            query.len(),
            spec.text_dim
        )));
    }
    let dim = spec.input_dim();
    let mut out = Vec::with_capacity(candidates.len() * dim);
    for &id in candidates {
        let t = kg.triple(id);
        let (h, r, tl) = kg.surface(id);
        let name_triple = || format!("({h},{r},{tl})");
        let zh = entity_vectors
            .get(&t.head)
            .ok_or_else(|| Error::MissingEmbedding(format!("{h} in {}", name_triple())))?;
        let zt = entity_vectors
            .get(&t.tail)
            .ok_or_else(|| Error::MissingEmbedding(format!("{tl} in {}", name_triple())))?;
        let zr = lookup
            .relations
            .get(r)
            .ok_or_else(|| Error::MissingEmbedding(format!("{r} in {}", name_triple())))?;
        let sh = structural
            .get(&t.head)
            .ok_or_else(|| Error::MissingEncoding(format!("{h} in {}", name_triple())))?;
        let st = structural
            .get(&t.tail)
            .ok_or_else(|| Error::MissingEncoding(format!("{tl} in {}", name_triple())))?;
        let start = out.len();
        out.extend(query.iter().map(|&x| x as f64));
        out.extend_from_slice(zh);
        out.extend(zr.iter().map(|&x| x as f64));
        out.extend_from_slice(zt);
        out.extend_from_slice(&sh.0);
        out.extend_from_slice(&st.0);
        if out.len() - start != dim {
            return Err(Error::Shape(format!(
                "feature row for {} has dim {}, expected {dim}",
                name_triple(),
                out.len() - start
            )));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::EmbeddingStore;

    fn fixture() -> (KnowledgeGraph, EmbeddingStore, EmbeddingStore) {
        let kg = KnowledgeGraph::from_triples([("A", "r", "B"), ("A", "s", "C")]);
        let ents = EmbeddingStore::from_rows(
            4,
            vec!["A".into(), "B".into(), "C".into()],
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]],
        )
        .unwrap();
        let rels = EmbeddingStore::from_rows(
            4,
            vec!["r".into(), "s".into()],
            vec![vec![0.5; 4], vec![-0.5; 4]],
        )
        .unwrap();
        (kg, ents, rels)
    }

    #[test]
    fn dims_follow_variant() {
        let spec = |variant| FeatureSpec {
            variant,
            text_dim: 4,
            dde: DdeConfig { rounds: 1 },
            sage_dim: 8,
        };
        assert_eq!(spec(FeatureVariant::Dde).input_dim(), 22);
        assert_eq!(spec(FeatureVariant::TopicOnehot).input_dim(), 18);
        assert_eq!(spec(FeatureVariant::None).input_dim(), 16);
        assert_eq!(spec(FeatureVariant::DdePpr).input_dim(), 24);
        assert_eq!(spec(FeatureVariant::GraphSage).input_dim(), 4 + 8 + 4 + 8 + 2);
    }

    #[test]
    fn rows_share_head_segment_and_follow_order() {
        let (kg, e, r) = fixture();
        let lookup = EmbeddingLookup {
            entities: &e,
            relations: &r,
        };
        let spec = FeatureSpec {
            variant: FeatureVariant::Dde,
            text_dim: 4,
            dde: DdeConfig { rounds: 1 },
            sage_dim: 0,
        };
        let cands = [TripleId(0), TripleId(1)];
        let topics = [EntityId(0)].into();
        let ev = entity_text_vectors(&kg, lookup, &cands).unwrap();
        let st = structural_encodings(&kg, &cands, &topics, &spec).unwrap();
        let q = [0.1f32, 0.2, 0.3, 0.4];
        let f = assemble_features(&kg, &spec, &q, &cands, lookup, &ev, &st).unwrap();
        assert_eq!(f.len(), 2 * 22);
        assert_eq!(f[4..8], f[22 + 4..22 + 8]);
        assert_eq!(&f[16..22], &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);

        let rev = [TripleId(1), TripleId(0)];
        let g = assemble_features(&kg, &spec, &q, &rev, lookup, &ev, &st).unwrap();
        assert_eq!(f[..22], g[22..]);
        assert_eq!(f[22..], g[..22]);
    }

    #[test]
    fn missing_relation_names_triple() {
        let (kg, e, _) = fixture();
        let empty = EmbeddingStore::new(4);
        let lookup = EmbeddingLookup {
            entities: &e,
            relations: &empty,
        };
        let spec = FeatureSpec {
            variant: FeatureVariant::None,
            text_dim: 4,
            dde: DdeConfig { rounds: 1 },
            sage_dim: 0,
        };
        let cands = [TripleId(0)];
        let topics = [EntityId(0)].into();
        let ev = entity_text_vectors(&kg, lookup, &cands).unwrap();
        let st = structural_encodings(&kg, &cands, &topics, &spec).unwrap();
        let err = assemble_features(&kg, &spec, &[0.0; 4], &cands, lookup, &ev, &st).unwrap_err();
        assert!(err.to_string().contains("(A,r,B)"), "{err}");
    }
}
