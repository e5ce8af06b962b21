//! Hashed bag-of-words embeddings, the binary embedding store, and the
//! cosine-similarity retrieval baseline.
//!
//! cargo run --example embedding_store

use kgrag::embeddings::{
    cosine, cosine_baseline_scores, BaselineMode, EmbeddingLookup, EmbeddingStore, HashEncoder, TextEncoder,
};
use kgrag::kg::{KnowledgeGraph, TripleId};
use kgrag::scorer::select_top_k;

fn main() -> kgrag::Result<()> {
    let kg = KnowledgeGraph::from_triples([
        ("Paris", "capital of", "France"),
        ("Berlin", "capital of", "Germany"),
        ("France", "currency", "Euro"),
        ("Paris", "mascot", "Rooster"),
    ]);
    let enc = HashEncoder::new(64, 0);
    let store = |keys: &[String]| -> kgrag::Result<EmbeddingStore> {
        EmbeddingStore::from_rows(enc.dim(), keys.to_vec(), enc.embed(keys)?)
    };
    let entities = store(kg.entity_names())?;
    let relations = store(kg.relation_names())?;

    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("entities.embs");
    entities.save(&path)?;
    let loaded = EmbeddingStore::load(&path)?;
    println!(
        "stored {} vectors of dim {} in {} bytes",
        loaded.len(),
        loaded.dim(),
        std::fs::metadata(&path).expect("stat").len()
    );

    let q = enc.embed_one("what is the capital of France?");
    println!("cos(q, France) = {:.3}", cosine(&q, loaded.require("France")?));
    let lookup = EmbeddingLookup {
        entities: &entities,
        relations: &relations,
    };
    let cands: Vec<TripleId> = (0..kg.triple_count() as u32).map(TripleId).collect();
    let scores = cosine_baseline_scores(&kg, lookup, &q, &cands, BaselineMode::ComponentMean)?;
    for (t, s) in select_top_k(&scores, 3) {
        let (h, r, tl) = kg.surface(t);
        println!("  {s:.3} ({h}, {r}, {tl})");
    }
    Ok(())
}
