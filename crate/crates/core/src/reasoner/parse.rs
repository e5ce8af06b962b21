use serde::{Deserialize, Serialize};

use crate::kg::{KnowledgeGraph, TripleId};

pub const DEFAULT_REFUSAL_TOKENS: [&str; 4] = ["not available", "none", "no answer", "unknown"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasonerOutput {
    pub raw_text: String,
    pub answers: Vec<String>,
    pub refusal: bool,
    /// Free text preceding the first `ans:` line.
    pub explanation: String,
}

/// Lowercase, trim, strip trailing punctuation.
pub fn normalize_refusal(s: &str) -> String {
    s.trim()
        .to_lowercase()
        .trim_end_matches(|c: char| c.is_ascii_punctuation())
        .trim()
        .to_owned()
}

/// Text after a case-insensitive `prefix` on a trimmed line.
fn strip_prefix_ci<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    let t = line.trim();
    let head = t.get(..prefix.len())?;
    head.eq_ignore_ascii_case(prefix).then(|| t[prefix.len()..].trim())
}

pub fn parse_answers(raw: &str) -> ReasonerOutput {
    parse_answers_with(raw, &DEFAULT_REFUSAL_TOKENS)
}

/// Total parser: `ans:` lines in order, deduplicated; refusal when none
/// remain after dropping refusal tokens.
pub fn parse_answers_with<S: AsRef<str>>(raw: &str, refusal_tokens: &[S]) -> ReasonerOutput {
    let mut answers: Vec<String> = Vec::new();
    let mut explanation_end = raw.len();
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        if let Some(a) = strip_prefix_ci(line, "ans:") {
            explanation_end = explanation_end.min(offset);
            let norm = normalize_refusal(a);
            let is_refusal = refusal_tokens.iter().any(|t| normalize_refusal(t.as_ref()) == norm);
            if !a.is_empty() && !is_refusal && !answers.iter().any(|x| x == a) {
                answers.push(a.to_owned());
            }
        }
        offset += line.len();
    }
    ReasonerOutput {
        raw_text: raw.to_owned(),
        refusal: answers.is_empty(),
        explanation: raw[..explanation_end].trim().to_owned(),
        answers,
    }
}

/// Assistant-format rendering that [`parse_answers`] inverts.
pub fn render_answers<S: AsRef<str>>(answers: &[S]) -> String {
    let mut s = String::from("Therefore, the formatted answers are:\n\n");
    for a in answers {
        s.push_str("ans: ");
        s.push_str(a.as_ref());
        s.push('\n');
    }
    s
}

/// Splits `(h,r,t)` on commas. Surface texts may contain commas, so when
/// more than two appear the split that names a KG triple wins.
pub fn split_triple(text: &str, kg: Option<&KnowledgeGraph>) -> Option<(String, String, String)> {
    let t = text.trim();
    let inner = t.strip_prefix('(').and_then(|s| s.strip_suffix(')')).unwrap_or(t);
    let commas: Vec<usize> = inner.match_indices(',').map(|(i, _)| i).collect();
    if commas.len() < 2 {
        return None;
    }
    let split = |i: usize, j: usize| {
        (
            inner[..i].trim().to_owned(),
            inner[i + 1..j].trim().to_owned(),
            inner[j + 1..].trim().to_owned(),
        )
    };
    if commas.len() > 2 {
        if let Some(kg) = kg {
            for a in 0..commas.len() {
                for b in a + 1..commas.len() {
                    let (h, r, tl) = split(commas[a], commas[b]);
                    if kg.resolve(&h, &r, &tl).is_some() {
                        return Some((h, r, tl));
                    }
                }
            }
        }
    }
    Some(split(commas[0], commas[1]))
}

/// Triples named on `evidence:` lines, resolved against the KG when given.
pub fn parse_evidence(raw: &str, kg: Option<&KnowledgeGraph>) -> Vec<(String, String, String)> {
    let mut out: Vec<(String, String, String)> = Vec::new();
    for line in raw.lines() {
        if let Some(rest) = strip_prefix_ci(line, "evidence:") {
            if let Some(t) = split_triple(rest, kg) {
                if !out.contains(&t) {
                    out.push(t);
                }
            }
        }
    }
    out
}

/// Evidence lines resolved to handles; unknown triples are skipped.
pub fn evidence_triples(raw: &str, kg: &KnowledgeGraph) -> Vec<TripleId> {
    parse_evidence(raw, Some(kg))
        .iter()
        .filter_map(|(h, r, t)| kg.resolve(h, r, t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn world_series_reply() {
        let raw = "So they won in 2010, 2012, and 2014.\n\nans: 2014 (2014 World Series)\nans: 2012 (2012 World Series)\nans: 2010 (2010 World Series)";
        let out = parse_answers(raw);
        assert_eq!(out.answers, ["2014 (2014 World Series)", "2012 (2012 World Series)", "2010 (2010 World Series)"]);
        assert!(!out.refusal);
        assert_eq!(out.explanation, "So they won in 2010, 2012, and 2014.");
    }

    #[test]
    fn refusals() {
        let out = parse_answers("ans: not available");
        assert!(out.answers.is_empty() && out.refusal);
        assert!(parse_answers("I cannot tell.").refusal);
        assert!(parse_answers("ANS: Unknown.").refusal);
    }

    #[test]
    fn dedup_and_case() {
        let out = parse_answers("  Ans: x\nans: x\nans:y");
        assert_eq!(out.answers, ["x", "y"]);
    }

    #[test]
    fn evidence_lines() {
        let raw = "evidence: (A,r,B)\nnoise\nevidence: (B,s,C)";
        assert_eq!(parse_evidence(raw, None).len(), 2);
        assert!(parse_evidence("nothing here", None).is_empty());
    }

    #[test]
    fn comma_in_surface_uses_kg() {
        let kg = KnowledgeGraph::from_triples([("Paris, France", "capital_of", "France")]);
        let t = split_triple("(Paris, France,capital_of,France)", Some(&kg)).unwrap();
        assert_eq!(t, ("Paris, France".into(), "capital_of".into(), "France".into()));
        assert_eq!(evidence_triples("evidence: (Paris, France,capital_of,France)", &kg), vec![TripleId(0)]);
    }
}
