//! Retrieval recall, answer F1/Hit metrics and the hallucination score.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kg::{EntityId, KnowledgeGraph, TripleId};
use crate::reasoner::ReasonerOutput;

/// `|retrieved ∩ gold| / |gold|`; `None` when gold is empty.
pub fn triple_recall(retrieved: &BTreeSet<TripleId>, gold: &BTreeSet<TripleId>) -> Option<f64> {
    if gold.is_empty() {
        return None;
    }
    Some(gold.intersection(retrieved).count() as f64 / gold.len() as f64)
}

/// Fraction of answer entities that appear as head or tail of a retrieved
/// triple; `None` when there are no answer entities.
pub fn answer_entity_recall(
    kg: &KnowledgeGraph,
    retrieved: &BTreeSet<TripleId>,
    answer_entities: &BTreeSet<EntityId>,
) -> Option<f64> {
    if answer_entities.is_empty() {
        return None;
    }
    let mut seen = BTreeSet::new();
    for &id in retrieved {
        let t = kg.triple(id);
        seen.insert(t.head);
        seen.insert(t.tail);
    }
    Some(answer_entities.iter().filter(|e| seen.contains(e)).count() as f64 / answer_entities.len() as f64)
}

/// Mean of the defined values, `None` if there are none.
pub fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values.into_iter().flatten() {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Trim, drop one trailing parenthetical qualifier, lowercase.
pub fn normalize_answer(s: &str) -> String {
    let t = s.trim();
    let t = match (t.ends_with(')'), t.rfind('(')) {
        (true, Some(i)) if i > 0 => t[..i].trim_end(),
        _ => t,
    };
    t.to_lowercase()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    WrongRetrieved,
    WrongNotRetrieved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleJudgment {
    pub sample_id: String,
    pub predicted: Vec<String>,
    pub gold: Vec<String>,
    /// Whether any gold answer entity exists in the KG.
    pub gold_in_kg: bool,
    pub verdicts: Vec<Verdict>,
    pub refusal: bool,
    pub raw_response: String,
    #[serde(default)]
    pub hops: Option<usize>,
    #[serde(default)]
    pub topic_count: usize,
    #[serde(default)]
    pub triple_recall: Option<f64>,
    #[serde(default)]
    pub entity_recall: Option<f64>,
}

/// Per-answer verdicts. A wrong answer counts as retrieved when its
/// normalized text occurs in the lowercased surface text of any retrieved
/// triple.
pub fn judge_answers(predicted: &[String], gold: &[String], retrieved_surfaces: &[String]) -> Vec<Verdict> {
    let gold_norm: BTreeSet<String> = gold.iter().map(|g| normalize_answer(g)).collect();
    let surfaces: Vec<String> = retrieved_surfaces.iter().map(|s| s.to_lowercase()).collect();
    predicted
        .iter()
        .map(|p| {
            let n = normalize_answer(p);
            if gold_norm.contains(&n) {
                Verdict::Correct
            } else if !n.is_empty() && surfaces.iter().any(|s| s.contains(&n)) {
                Verdict::WrongRetrieved
            } else {
                Verdict::WrongNotRetrieved
            }
        })
        .collect()
}

impl SampleJudgment {
    pub fn new(
        sample_id: &str,
        output: &ReasonerOutput,
        gold: &[String],
        gold_in_kg: bool,
        retrieved_surfaces: &[String],
    ) -> Self {
        SampleJudgment {
            sample_id: sample_id.to_owned(),
            verdicts: judge_answers(&output.answers, gold, retrieved_surfaces),
            predicted: output.answers.clone(),
            gold: gold.to_vec(),
            gold_in_kg,
            refusal: output.refusal,
            raw_response: output.raw_text.clone(),
            hops: None,
            topic_count: 0,
            triple_recall: None,
            entity_recall: None,
        }
    }

    fn correct(&self) -> usize {
        self.verdicts.iter().filter(|v| **v == Verdict::Correct).count()
    }

    /// Distinct gold answers matched by some prediction.
    fn gold_matched(&self) -> usize {
        let pred: BTreeSet<String> = self.predicted.iter().map(|p| normalize_answer(p)).collect();
        let gold: BTreeSet<String> = self.gold.iter().map(|g| normalize_answer(g)).collect();
        gold.intersection(&pred).count()
    }

    fn distinct_gold(&self) -> usize {
        self.gold.iter().map(|g| normalize_answer(g)).collect::<BTreeSet<_>>().len()
    }

    pub fn precision_recall_f1(&self) -> (f64, f64, f64) {
        let p = if self.predicted.is_empty() {
            0.0
        } else {
            self.correct() as f64 / self.predicted.len() as f64
        };
        let g = self.distinct_gold();
        let r = if g == 0 { 0.0 } else { self.gold_matched() as f64 / g as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        (p, r, f)
    }

    /// Any gold answer (or its normalized form) is a case-insensitive
    /// substring of the raw response.
    pub fn hit(&self) -> bool {
        let raw = self.raw_response.to_lowercase();
        self.gold.iter().any(|g| {
            let full = g.trim().to_lowercase();
            let norm = normalize_answer(g);
            (!full.is_empty() && raw.contains(&full)) || (!norm.is_empty() && raw.contains(&norm))
        })
    }

    pub fn hit_at_1(&self) -> bool {
        self.verdicts.first() == Some(&Verdict::Correct)
    }

    /// `s_i / a_i` with `a_i = max(1, |predicted|)`.
    pub fn hallucination_term(&self) -> f64 {
        if self.refusal || self.predicted.is_empty() {
            return if self.gold_in_kg { 0.0 } else { 1.0 };
        }
        let s: f64 = self
            .verdicts
            .iter()
            .map(|v| match (self.gold_in_kg, v) {
                (true, Verdict::Correct) => 1.0,
                (true, _) => -1.0,
                // without gold in the KG a matching answer is still ungrounded
                (false, Verdict::Correct | Verdict::WrongRetrieved) => -1.0,
                (false, Verdict::WrongNotRetrieved) => -1.5,
            })
            .sum();
        s / self.predicted.len().max(1) as f64
    }
}

/// `(macro_f1, micro_f1, hit, hit_at_1)`. F1 is averaged over samples with
/// nonempty gold; Hit and Hit@1 over all samples.
pub fn f1_hit_metrics(judgments: &[SampleJudgment]) -> Result<(f64, f64, f64, f64)> {
    if judgments.is_empty() {
        return Err(Error::InvalidArgument("no judgments to evaluate".into()));
    }
    let mut macro_sum = 0.0;
    let mut with_gold = 0usize;
    let (mut correct, mut predicted, mut matched, mut gold) = (0usize, 0usize, 0usize, 0usize);
    for j in judgments {
        if j.distinct_gold() == 0 {
            continue;
        }
        with_gold += 1;
        macro_sum += j.precision_recall_f1().2;
        correct += j.correct();
        predicted += j.predicted.len();
        matched += j.gold_matched();
        gold += j.distinct_gold();
    }
    let macro_f1 = if with_gold == 0 { 0.0 } else { macro_sum / with_gold as f64 };
    let p = if predicted == 0 { 0.0 } else { correct as f64 / predicted as f64 };
    let r = if gold == 0 { 0.0 } else { matched as f64 / gold as f64 };
    let micro_f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    let n = judgments.len() as f64;
    let hit = judgments.iter().filter(|j| j.hit()).count() as f64 / n;
    let hit1 = judgments.iter().filter(|j| j.hit_at_1()).count() as f64 / n;
    Ok((macro_f1, micro_f1, hit, hit1))
}

/// Lower and upper bound of the raw hallucination score.
pub const SCORE_H_RAW_RANGE: (f64, f64) = (-1.5, 1.0);

/// Hallucination score mapped linearly from `[-1.5, 1]` onto `[0, 100]`.
pub fn score_h(judgments: &[SampleJudgment]) -> Result<f64> {
    if judgments.is_empty() {
        return Err(Error::InvalidArgument("no judgments to evaluate".into()));
    }
    let raw = judgments.iter().map(|j| j.hallucination_term()).sum::<f64>() / judgments.len() as f64;
    let (lo, hi) = SCORE_H_RAW_RANGE;
    Ok((raw - lo) / (hi - lo) * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub samples: usize,
    /// Samples with nonempty gold (the F1 denominator).
    pub f1_samples: usize,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub hit: f64,
    pub hit_at_1: f64,
    pub score_h: f64,
    pub refusals: usize,
    pub triple_recall: Option<f64>,
    pub answer_entity_recall: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub breakdown: BTreeMap<String, BTreeMap<String, MetricsReport>>,
}

impl MetricsReport {
    pub fn compute(judgments: &[SampleJudgment]) -> Result<Self> {
        let (macro_f1, micro_f1, hit, hit_at_1) = f1_hit_metrics(judgments)?;
        Ok(MetricsReport {
            samples: judgments.len(),
            f1_samples: judgments.iter().filter(|j| j.distinct_gold() > 0).count(),
            macro_f1,
            micro_f1,
            hit,
            hit_at_1,
            score_h: score_h(judgments)?,
            refusals: judgments.iter().filter(|j| j.refusal).count(),
            triple_recall: mean_defined(judgments.iter().map(|j| j.triple_recall)),
            answer_entity_recall: mean_defined(judgments.iter().map(|j| j.entity_recall)),
            breakdown: BTreeMap::new(),
        })
    }

    /// Aligned plain-text table; breakdown buckets follow the global row.
    pub fn to_table(&self) -> String {
        let fmt_opt = |v: Option<f64>| v.map(|x| format!("{:.4}", x)).unwrap_or_else(|| "-".into());
        let header = format!(
            "{:<18} {:>7} {:>9} {:>9} {:>7} {:>7} {:>8} {:>8} {:>8}\n",
            "bucket", "n", "macro_f1", "micro_f1", "hit", "hit@1", "score_h", "t_rec", "a_rec"
        );
        let row = |name: &str, m: &MetricsReport| {
            format!(
                "{:<18} {:>7} {:>9.4} {:>9.4} {:>7.4} {:>7.4} {:>8.2} {:>8} {:>8}\n",
                name,
                m.samples,
                m.macro_f1,
                m.micro_f1,
                m.hit,
                m.hit_at_1,
                m.score_h,
                fmt_opt(m.triple_recall),
                fmt_opt(m.answer_entity_recall)
            )
        };
        let mut out = header;
        out.push_str(&row("all", self));
        for (key, buckets) in &self.breakdown {
            for (b, m) in buckets {
                out.push_str(&row(&format!("{key}={b}"), m));
            }
        }
        out
    }
}

/// Metrics recomputed within buckets keyed by `"hops"` or `"topics"`.
pub fn breakdown(judgments: &[SampleJudgment], key: &str) -> Result<BTreeMap<String, MetricsReport>> {
    let label = |j: &SampleJudgment| -> Result<String> {
        Ok(match key {
            "hops" => j.hops.map(|h| h.to_string()).unwrap_or_else(|| "unknown".into()),
            "topics" => j.topic_count.to_string(),
            other => return Err(Error::InvalidArgument(format!("unknown breakdown key `{other}`"))),
        })
    };
    let mut groups: BTreeMap<String, Vec<SampleJudgment>> = BTreeMap::new();
    for j in judgments {
        groups.entry(label(j)?).or_default().push(j.clone());
    }
    if judgments.is_empty() {
        label_check(key)?;
    }
    groups
        .into_iter()
        .map(|(k, js)| MetricsReport::compute(&js).map(|m| (k, m)))
        .collect()
}

fn label_check(key: &str) -> Result<()> {
    match key {
        "hops" | "topics" => Ok(()),
        other => Err(Error::InvalidArgument(format!("unknown breakdown key `{other}`"))),
    }
}
