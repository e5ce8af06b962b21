use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::Result;
use crate::kg::TripleId;

use super::nn::{sigmoid, Network};

pub const DEFAULT_TOP_K: usize = 100;

/// Ranked triples for one question, best first.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub sample_id: String,
    pub ranked: Vec<(TripleId, f64)>,
}

impl RetrievalResult {
    pub fn triples(&self) -> impl Iterator<Item = TripleId> + '_ {
        self.ranked.iter().map(|(t, _)| *t)
    }
}

/// Descending score, then ascending handle. NaN sorts last.
fn rank_order(a: &(TripleId, f64), b: &(TripleId, f64)) -> Ordering {
    match (a.1.is_nan(), b.1.is_nan()) {
        (false, false) => b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)),
        (x, y) => x.cmp(&y).then(a.0.cmp(&b.0)),
    }
}

/// Exact top-`k` with the deterministic tie-break.
pub fn select_top_k(scores: &[(TripleId, f64)], k: usize) -> Vec<(TripleId, f64)> {
    if k == 0 {
        return Vec::new();
    }
    let mut v = scores.to_vec();
    if k < v.len() {
        v.select_nth_unstable_by(k - 1, rank_order);
        v.truncate(k);
    }
    v.sort_by(rank_order);
    v
}

const SCORE_CHUNK: usize = 256;

/// Relevance probabilities for `n` feature rows. Rows are scored in fixed
/// chunks, so the result does not depend on the number of workers.
pub fn score_rows(params: &Network, features: &[f64], n: usize, workers: usize) -> Result<Vec<f64>> {
    let dim = params.input_dim();
    if features.len() != n * dim {
        return Err(crate::error::Error::Shape(format!(
            "{} feature values for {n} rows of dim {dim}",
            features.len()
        )));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let run = || -> Result<Vec<f64>> {
        let parts: Vec<Vec<f64>> = features
            .par_chunks(SCORE_CHUNK * dim)
            .map(|chunk| {
                let cache = params.forward_batch(chunk, chunk.len() / dim)?;
                Ok(cache.output().iter().map(|&z| sigmoid(z)).collect())
            })
            .collect::<Result<_>>()?;
        Ok(parts.concat())
    };
    if workers == 0 {
        return run();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| crate::error::Error::Config(e.to_string()))?;
    pool.install(run)
}

/// Scores every candidate and keeps the best `k`.
pub fn score_and_select(
    params: &Network,
    sample_id: &str,
    candidates: &[TripleId],
    features: &[f64],
    k: usize,
    workers: usize,
) -> Result<RetrievalResult> {
    let probs = score_rows(params, features, candidates.len(), workers)?;
    let scored: Vec<(TripleId, f64)> = candidates.iter().copied().zip(probs).collect();
    Ok(RetrievalResult {
        sample_id: sample_id.to_owned(),
        ranked: select_top_k(&scored, k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tie_goes_to_lower_handle() {
        let s = [(TripleId(1), 0.9), (TripleId(3), 0.5), (TripleId(2), 0.5)];
        assert_eq!(select_top_k(&s, 2), vec![(TripleId(1), 0.9), (TripleId(2), 0.5)]);
    }

    #[test]
    fn k_bounds() {
        let s = [(TripleId(0), 0.1), (TripleId(1), 0.7)];
        assert!(select_top_k(&s, 0).is_empty());
        assert_eq!(select_top_k(&s, 10), vec![(TripleId(1), 0.7), (TripleId(0), 0.1)]);
    }

    #[test]
    fn nan_ranks_last() {
        let s = [(TripleId(0), f64::NAN), (TripleId(1), 0.0)];
        assert_eq!(select_top_k(&s, 1)[0].0, TripleId(1));
    }
}
