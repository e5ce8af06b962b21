//! Shortest-path weak labels: every triple on some minimum-length
//! undirected path between a topic and an answer entity.
//!
//! cargo run --example weak_labels

use std::collections::BTreeSet;

use kgrag::kg::KnowledgeGraph;
use kgrag::supervision::{shortest_path_labels, write_label_records};

fn main() -> kgrag::Result<()> {
    let kg = KnowledgeGraph::from_triples([
        ("Lou Seal", "mascot.team", "Giants"),
        ("Giants", "team.championships", "2010 World Series"),
        ("Giants", "team.championships", "2012 World Series"),
        ("Giants", "team.arena", "AT&T Park"),
        ("AT&T Park", "location.events", "2012 World Series"),
        ("Crazy Crab", "mascot.team", "Giants"),
    ]);
    let id = |n: &str| kg.entity_id(n).expect("entity");
    let topics = BTreeSet::from([id("Lou Seal")]);
    let answers = BTreeSet::from([id("2010 World Series"), id("2012 World Series")]);
    let labels = shortest_path_labels(&kg, &topics, &answers);
    println!("{} of {} triples are weak positives:", labels.len(), kg.triple_count());
    for &t in &labels {
        let (h, r, tl) = kg.surface(t);
        println!("  ({h}, {r}, {tl})");
    }
    // the longer route through the stadium is not on a shortest path
    print!("{}", write_label_records(&kg, [("q1", &labels)])?);
    Ok(())
}
