//! Staged workflow driven by one JSON config, plus the synthetic generator.

mod config;
mod stages;
mod synth;

pub use config::{
    apply_override, EncoderConfig, EvalConfig, Paths, PipelineConfig, ReasonerConfig, RetrievalMethod,
    RetrieverConfig,
};
pub use stages::{
    check_prerequisites, run_stage, stage_fingerprint, ArtifactRecord, CandidateRecord, EvalReport, Manifest,
    ResponseRecord, RetrievalRecord, Stage, StageOutcome, CANDIDATES_FILE, ENTITY_EMBS, JUDGMENTS_FILE, LABELS_FILE,
    MANIFEST_FILE, QUESTION_EMBS, RELATION_EMBS, REPORT_JSON, REPORT_TXT, RESPONSES_FILE, RETRIEVAL_FILE,
    TRAIN_REPORT_FILE,
};
pub use synth::{
    entity_name, generate_synthetic, planted_paths_match_labels, HopTemplate, SyntheticData, SyntheticKgSpec,
    SyntheticQuestion, DEFAULT_RELATIONS,
};
