//! Scores reasoner outputs: F1, Hit, Hit@1, the hallucination score, and
//! retrieval recall.
//!
//! cargo run --example evaluate

use std::collections::BTreeSet;

use kgrag::evalkit::{triple_recall, MetricsReport, SampleJudgment};
use kgrag::kg::TripleId;
use kgrag::reasoner::parse_answers;

fn main() -> kgrag::Result<()> {
    // (id, gold, gold in KG, reply, retrieved triples as text)
    type Row<'a> = (&'a str, &'a [&'a str], bool, &'a str, &'a [&'a str]);
    let rows: [Row; 4] = [
        ("q1", &["Haitian Creole", "French"], true, "ans: Haitian Creole\nans: French", &[]),
        ("q2", &["Paris"], true, "ans: Lyon\nans: Paris", &["(France,city,Lyon)"]),
        ("q3", &["3.048"], false, "ans: not available", &[]),
        ("q4", &["Rome"], false, "ans: Milan", &[]),
    ];
    let mut judgments = Vec::new();
    for (i, (id, gold, in_kg, reply, surfaces)) in rows.iter().enumerate() {
        let gold: Vec<String> = gold.iter().map(|s| s.to_string()).collect();
        let surfaces: Vec<String> = surfaces.iter().map(|s| s.to_string()).collect();
        let mut j = SampleJudgment::new(id, &parse_answers(reply), &gold, *in_kg, &surfaces);
        j.hops = Some(1 + i % 2);
        j.topic_count = 1;
        println!("{id}: verdicts {:?}, F1 {:.3}", j.verdicts, j.precision_recall_f1().2);
        judgments.push(j);
    }
    let mut report = MetricsReport::compute(&judgments)?;
    report.breakdown.insert("hops".into(), kgrag::evalkit::breakdown(&judgments, "hops")?);
    print!("{}", report.to_table());

    let gold: BTreeSet<TripleId> = [TripleId(1), TripleId(4)].into();
    let retrieved: BTreeSet<TripleId> = [TripleId(1), TripleId(2)].into();
    println!("triple recall {:?}", triple_recall(&retrieved, &gold));
    Ok(())
}
