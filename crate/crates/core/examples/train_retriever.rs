//! Trains the triple scorer on a synthetic graph and compares feature
//! variants by answer-entity recall at K=20, overall and per hop count.
//!
//! cargo run --release --example train_retriever [-- text_dim epochs hidden]

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use kgrag::embeddings::{EmbeddingLookup, EmbeddingStore, HashEncoder, TextEncoder};
use kgrag::evalkit::answer_entity_recall;
use kgrag::kg::{EntityId, KnowledgeGraph, TripleId};
use kgrag::pipeline::{generate_synthetic, SyntheticKgSpec, SyntheticQuestion};
use kgrag::retriever::{feature_spec, train_retriever, PreparedSample, RetrieverModel};
use kgrag::scorer::{FeatureVariant, TrainConfig};
use kgrag::supervision::shortest_path_labels;

fn store(enc: &HashEncoder, keys: Vec<String>) -> kgrag::Result<EmbeddingStore> {
    let rows = enc.embed(&keys)?;
    EmbeddingStore::from_rows(enc.dim(), keys, rows)
}

fn prepare(kg: &KnowledgeGraph, enc: &HashEncoder, qs: &[SyntheticQuestion], hops: usize) -> Vec<PreparedSample> {
    qs.iter()
        .map(|q| {
            let topics: BTreeSet<EntityId> = q.topic_entities.iter().filter_map(|t| kg.entity_id(t)).collect();
            PreparedSample {
                id: q.id.clone(),
                candidates: kg.extract_candidate_subgraph(&topics, hops),
                topics,
                query: enc.embed_one(&q.question),
            }
        })
        .collect()
}

fn main() -> kgrag::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let dim = args.first().copied().unwrap_or(32);
    let epochs = args.get(1).copied().unwrap_or(15);
    let hidden = args.get(2).copied().unwrap_or(64);

    let data = generate_synthetic(&SyntheticKgSpec::default())?;
    let kg = &data.kg;
    let enc = HashEncoder::new(dim, 0);
    let entities = store(&enc, kg.entity_names().to_vec())?;
    let relations = store(&enc, kg.relation_names().to_vec())?;
    let lookup = EmbeddingLookup {
        entities: &entities,
        relations: &relations,
    };
    let train_set = prepare(kg, &enc, &data.train, 3);
    let test_set = prepare(kg, &enc, &data.test, 3);
    let labels: BTreeMap<String, BTreeSet<TripleId>> = data
        .train
        .iter()
        .zip(&train_set)
        .map(|(q, s)| {
            let answers = q.answers.iter().filter_map(|a| kg.entity_id(a)).collect();
            (q.id.clone(), shortest_path_labels(kg, &s.topics, &answers))
        })
        .collect();
    let mean_cands = train_set.iter().map(|s| s.candidates.len()).sum::<usize>() as f64 / train_set.len() as f64;
    println!(
        "{} entities, {} triples, {:.1} candidates per question",
        kg.entity_count(),
        kg.triple_count(),
        mean_cands
    );

    let config = TrainConfig {
        epochs,
        batch_size: 128,
        hidden: vec![hidden, hidden],
        ..TrainConfig::default()
    };
    // (overall, per hop 1..=3)
    let recall_at = |model: &RetrieverModel, k: usize| -> kgrag::Result<(f64, [f64; 3])> {
        let mut sums = [(0.0, 0usize); 4];
        for (q, s) in data.test.iter().zip(&test_set) {
            let got: BTreeSet<TripleId> = model.rank(kg, lookup, s, k, 0)?.triples().collect();
            let answers = q.answers.iter().filter_map(|a| kg.entity_id(a)).collect();
            if let Some(r) = answer_entity_recall(kg, &got, &answers) {
                for slot in [0, q.hops] {
                    sums[slot].0 += r;
                    sums[slot].1 += 1;
                }
            }
        }
        let avg = |(s, n): (f64, usize)| s / n.max(1) as f64;
        Ok((avg(sums[0]), [avg(sums[1]), avg(sums[2]), avg(sums[3])]))
    };

    println!("{:<14} {:>6} {:>6} {:>6} {:>6} {:>6}", "variant", "R@20", "1-hop", "2-hop", "3-hop", "secs");
    let show = |name: &str, (all, by): (f64, [f64; 3]), secs: f64| {
        println!("{name:<14} {all:>6.3} {:>6.3} {:>6.3} {:>6.3} {secs:>6.1}", by[0], by[1], by[2]);
    };
    let t = Instant::now();
    show("cosine", recall_at(&RetrieverModel::Cosine, 20)?, t.elapsed().as_secs_f64());
    for variant in [FeatureVariant::Dde, FeatureVariant::TopicOnehot, FeatureVariant::None, FeatureVariant::DdePpr] {
        let t = Instant::now();
        let spec = feature_spec(variant, dim, 2, &config);
        let (model, _) = train_retriever(kg, lookup, &train_set, &labels, spec, &config)?;
        show(variant.name(), recall_at(&model, 20)?, t.elapsed().as_secs_f64());
    }
    Ok(())
}
