use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::http::{JsonPoster, RetryPolicy};

/// Anything that maps texts to fixed-width vectors, one per input, in order.
pub trait TextEncoder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;
}

/// Lower-cased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn fnv1a(bytes: &[u8], seed: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic offline encoder: each token maps to a fixed Gaussian
/// vector derived from its hash, and a text is the L2-normalised sum of
/// its token vectors. Texts sharing words therefore have correlated
/// embeddings. A text with no tokens embeds to the zero vector.
#[derive(Debug, Clone)]
pub struct HashEncoder {
    dim: usize,
    seed: u64,
}

impl HashEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        HashEncoder { dim, seed }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn token_vector(&self, token: &str, acc: &mut [f64]) {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes(), self.seed));
        for a in acc.iter_mut() {
            let x: f64 = StandardNormal.sample(&mut rng);
            *a += x;
        }
    }

    pub fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dim];
        for tok in tokenize(text) {
            self.token_vector(&tok, &mut acc);
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            acc.iter().map(|x| (x / norm) as f32).collect()
        } else {
            vec![0.0; self.dim]
        }
    }
}

impl TextEncoder for HashEncoder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

/// Client for an encoder service: `POST {endpoint}/embed` with
/// `{"texts": [...]}`, answered by `{"embeddings": [[...], ...]}`.
pub struct HttpEncoder {
    url: String,
    batch_size: usize,
    parallelism: usize,
    poster: JsonPoster,
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
}

impl HttpEncoder {
    pub fn new(endpoint: &str, batch_size: usize, parallelism: usize, retry: RetryPolicy) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        Ok(HttpEncoder {
            url: format!("{}/embed", endpoint.trim_end_matches('/')),
            batch_size,
            parallelism: parallelism.max(1),
            poster: JsonPoster::new(retry)?,
        })
    }

    fn embed_batch(&self, batch: &[String]) -> Result<Vec<Vec<f32>>> {
        let resp = self.poster.post(&self.url, &json!({ "texts": batch }))?;
        let resp: EmbedResponse = serde_json::from_value(resp)
            .map_err(|e| Error::Protocol(format!("{}: {e}", self.url)))?;
        if resp.embeddings.len() != batch.len() {
            return Err(Error::Protocol(format!(
                "{}: sent {} texts, got {} embeddings",
                self.url,
                batch.len(),
                resp.embeddings.len()
            )));
        }
        Ok(resp.embeddings)
    }
}

impl TextEncoder for HttpEncoder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.parallelism)
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let batches: Vec<Vec<Vec<f32>>> = pool.install(|| {
            texts
                .par_chunks(self.batch_size)
                .map(|b| self.embed_batch(b))
                .collect::<Result<_>>()
        })?;
        let out: Vec<Vec<f32>> = batches.into_iter().flatten().collect();
        if let Some(first) = out.first() {
            let dim = first.len();
            if let Some((i, v)) = out.iter().enumerate().find(|(_, v)| v.len() != dim) {
                return Err(Error::Shape(format!(
                    "encoder returned dim {} for text {i}, expected {dim}",
                    v.len()
                )));
            }
        }
        Ok(out)
    }
}

/// Embeds `texts` through the encoder service at `endpoint`.
pub fn embed_texts(endpoint: &str, texts: &[String], batch_size: usize) -> Result<Vec<Vec<f32>>> {
    HttpEncoder::new(endpoint, batch_size, 1, RetryPolicy::default())?.embed(texts)
}
