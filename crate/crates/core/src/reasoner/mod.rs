//! Prompt assembly, the chat-completion client, and answer parsing.

mod client;
mod parse;
mod prompt;

pub use client::{call_llm, LlmClient, LlmConfig};
pub use parse::{
    evidence_triples, normalize_refusal, parse_answers, parse_answers_with, parse_evidence, render_answers,
    split_triple, ReasonerOutput, DEFAULT_REFUSAL_TOKENS,
};
pub use prompt::{
    build_labeling_prompt, build_qa_prompt, icl_example, render_triple, user_content, Message, PromptBundle, Role,
    LABELING_SYSTEM, QA_SYSTEM,
};
