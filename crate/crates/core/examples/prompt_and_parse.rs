//! Builds the QA prompt with the in-context example and parses replies,
//! including a refusal and an evidence list from a labelling reply.
//!
//! cargo run --example prompt_and_parse

use kgrag::kg::KnowledgeGraph;
use kgrag::reasoner::{build_labeling_prompt, build_qa_prompt, evidence_triples, parse_answers};

fn main() {
    let triples = [
        ("Haiti", "location.country.languages_spoken", "Haitian Creole"),
        ("Nord-Ouest Department", "location.location.containedby", "Haiti"),
        ("Haiti", "location.country.languages_spoken", "French"),
    ];
    let q = "The people from the country that contains Nord-Ouest Department speak what languages today?";
    let bundle = build_qa_prompt(q, &triples, true);
    println!("{} messages; final user turn:\n{}\n", bundle.messages.len(), bundle.messages[3].content);

    let reply = "Nord-Ouest Department is contained by Haiti.\n\nans: Haitian Creole\nans: French";
    let out = parse_answers(reply);
    println!("answers {:?}, refusal {}, explanation {:?}", out.answers, out.refusal, out.explanation);

    let refusal = parse_answers("There is no information about the depth.\n\nans: not available");
    println!("answers {:?}, refusal {}", refusal.answers, refusal.refusal);

    let labelling = build_labeling_prompt(q, &triples);
    println!("\nlabelling system prompt: {}", labelling.messages[0].content);
    let kg = KnowledgeGraph::from_triples(triples);
    let picked = evidence_triples(
        "evidence: (Nord-Ouest Department,location.location.containedby,Haiti)\n\
         evidence: (Haiti,location.country.languages_spoken,French)",
        &kg,
    );
    println!("evidence handles {picked:?}");
}
