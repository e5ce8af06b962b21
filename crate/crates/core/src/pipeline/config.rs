use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::http::RetryPolicy;
use crate::reasoner::{LlmConfig, DEFAULT_REFUSAL_TOKENS};
use crate::scorer::{FeatureVariant, TrainConfig, DEFAULT_TOP_K};

use super::synth::SyntheticKgSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Directory for every stage output and the manifest.
    pub work_dir: PathBuf,
    pub kg: PathBuf,
    pub train_dataset: PathBuf,
    pub test_dataset: PathBuf,
    /// External relevance labels for `import-labels`; when set, they replace
    /// the shortest-path labels.
    pub labels_import: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            work_dir: "work".into(),
            kg: "data/kg.tsv".into(),
            train_dataset: "data/train.jsonl".into(),
            test_dataset: "data/test.jsonl".into(),
            labels_import: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMethod {
    /// Trained triple scorer.
    #[default]
    Scorer,
    /// Untrained cosine-similarity baseline.
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrieverConfig {
    /// Radius of the candidate subgraph around the topic entities.
    pub hops: usize,
    pub dde_rounds: usize,
    pub top_k: usize,
    pub variant: FeatureVariant,
    pub method: RetrievalMethod,
    /// Scoring threads; 0 uses all cores.
    pub workers: usize,
}

impl Default for RetrieverConfig {
    fn default() -> Self {
        RetrieverConfig {
            hops: 2,
            dde_rounds: 2,
            top_k: DEFAULT_TOP_K,
            variant: FeatureVariant::Dde,
            method: RetrievalMethod::Scorer,
            workers: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncoderConfig {
    /// Deterministic in-process hashed bag of words.
    Hash { dim: usize, seed: u64 },
    /// Remote encoder service.
    Http {
        endpoint: String,
        #[serde(default = "default_batch")]
        batch_size: usize,
        #[serde(default = "default_parallelism")]
        parallelism: usize,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

fn default_batch() -> usize {
    128
}

fn default_parallelism() -> usize {
    4
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig::Hash { dim: 32, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReasonerConfig {
    pub llm: LlmConfig,
    /// Questions in flight at once.
    pub parallelism: usize,
    pub refusal_tokens: Vec<String>,
    pub icl: bool,
    /// Send no triples at all (answering without retrieval).
    pub empty_context: bool,
}

impl Default for ReasonerConfig {
    fn default() -> Self {
        ReasonerConfig {
            llm: LlmConfig::default(),
            parallelism: 4,
            refusal_tokens: DEFAULT_REFUSAL_TOKENS.iter().map(|s| s.to_string()).collect(),
            icl: true,
            empty_context: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Breakdown keys: `hops`, `topics`.
    pub breakdown: Vec<String>,
    /// Recall is also reported at these retrieval budgets.
    pub recall_at: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            breakdown: vec!["hops".into(), "topics".into()],
            recall_at: vec![5, 10, 20, 50, 100],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub synth: SyntheticKgSpec,
    pub retriever: RetrieverConfig,
    pub train: TrainConfig,
    pub encoder: EncoderConfig,
    pub reasoner: ReasonerConfig,
    pub eval: EvalConfig,
}

/// Sets `key` (dotted path) in a JSON document. The value is parsed as JSON
/// when possible and taken as a string otherwise.
pub fn apply_override(doc: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    if key.is_empty() {
        return Err(Error::Config(format!("override `{assignment}` has an empty key")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut at = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !at.is_object() {
            return Err(Error::Config(format!("`{}` is not an object", parts[..i].join("."))));
        }
        let map = at.as_object_mut().expect("checked above");
        if i + 1 == parts.len() {
            map.insert(part.to_string(), value);
            return Ok(());
        }
        at = map.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

impl PipelineConfig {
    /// Parses a JSON document, applies `--set` overrides, and resolves
    /// relative paths against `base`.
    pub fn from_json(text: &str, overrides: &[String], base: &Path) -> Result<Self> {
        let mut doc: Value = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        let mut cfg: PipelineConfig = serde_json::from_value(doc).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_json(&text, overrides, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.work_dir);
        fix(&mut self.paths.kg);
        fix(&mut self.paths.train_dataset);
        fix(&mut self.paths.test_dataset);
        if let Some(p) = self.paths.labels_import.as_mut() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be positive".into()));
        }
        if self.train.learning_rate.is_nan() || self.train.learning_rate <= 0.0 {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.train.val_fraction) {
            return Err(Error::Config("train.val_fraction must be in [0, 1)".into()));
        }
        if let EncoderConfig::Hash { dim: 0, .. } = self.encoder {
            return Err(Error::Config("encoder.dim must be positive".into()));
        }
        if self.retriever.variant == FeatureVariant::GraphSage && self.train.sage_layers == 0 {
            return Err(Error::Config("train.sage_layers must be at least 1".into()));
        }
        for key in &self.eval.breakdown {
            if key != "hops" && key != "topics" {
                return Err(Error::Config(format!("unknown breakdown key `{key}`")));
            }
        }
        Ok(())
    }

    pub fn work_path(&self, file: &str) -> PathBuf {
        self.paths.work_dir.join(file)
    }
}
