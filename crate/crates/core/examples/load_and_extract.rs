//! Loads a TAB-separated triples file and extracts the candidate subgraph
//! around a topic entity.
//!
//! cargo run --example load_and_extract

use std::collections::BTreeSet;

use kgrag::kg::load_triples;

const TRIPLES: &str = "\
Lou Seal\tsports.mascot.team\tSan Francisco Giants
San Francisco Giants\tsports.sports_team.championships\t2010 World Series
San Francisco Giants\tsports.sports_team.championships\t2012 World Series
San Francisco Giants\tsports.sports_team.arena_stadium\tAT&T Park
AT&T Park\tlocation.location.events\t2012 World Series
San Francisco\tsports.sports_team_location.teams\tSan Francisco Giants
Bill Neukom\tpeople.person.profession\tLawyer
";

fn main() -> kgrag::Result<()> {
    let dir = tempfile::tempdir().expect("temp dir");
    let path = dir.path().join("kg.tsv");
    std::fs::write(&path, TRIPLES).expect("write triples");
    let kg = load_triples(&path)?;
    println!("{} entities, {} relations, {} triples", kg.entity_count(), kg.relation_count(), kg.triple_count());

    let topic = kg.entity_id("Lou Seal").expect("topic in graph");
    let topics = BTreeSet::from([topic]);
    for hops in 0..=3 {
        let cands = kg.extract_candidate_subgraph(&topics, hops);
        println!("radius {hops}: {} candidate triples", cands.len());
        if hops == 2 {
            for t in cands {
                let (h, r, tl) = kg.surface(t);
                println!("  ({h}, {r}, {tl})");
            }
        }
    }
    Ok(())
}
