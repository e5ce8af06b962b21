//! Directional distance encodings, personalized PageRank, and the feature
//! row layout fed to the triple scorer.
//!
//! cargo run --example dde_features

use std::collections::BTreeSet;

use kgrag::kg::{KnowledgeGraph, TripleId};
use kgrag::scorer::{FeatureSpec, FeatureVariant};
use kgrag::structural::{compute_dde, ppr_scores, triple_encoding, DdeConfig, PprConfig};

fn main() -> kgrag::Result<()> {
    let kg = KnowledgeGraph::from_triples([
        ("A", "r", "B"),
        ("B", "r", "C"),
        ("D", "r", "B"),
        ("C", "r", "A"),
    ]);
    let cands: Vec<TripleId> = (0..kg.triple_count() as u32).map(TripleId).collect();
    let topics = BTreeSet::from([kg.entity_id("A").expect("A")]);
    let config = DdeConfig { rounds: 2 };
    let enc = compute_dde(&kg, &cands, &topics, config);
    println!("layout [topic, fwd1, fwd2, rev1, rev2]");
    for name in ["A", "B", "C", "D"] {
        let v = &enc[&kg.entity_id(name).expect("entity")].0;
        println!("  {name}: {v:.3?}");
    }
    let z = triple_encoding(&kg, &enc, TripleId(0))?;
    println!("triple (A,r,B) structural part: {z:.3?}");

    let ppr = ppr_scores(&kg, &cands, &topics, PprConfig::default())?;
    let mut ranked: Vec<_> = ppr.iter().map(|(e, p)| (kg.entity_name(*e), *p)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("ppr: {ranked:.3?}");

    for variant in FeatureVariant::ALL {
        let spec = FeatureSpec {
            variant,
            text_dim: 32,
            dde: config,
            sage_dim: 64,
        };
        println!("{:<13} input dim {}", variant.name(), spec.input_dim());
    }
    Ok(())
}
