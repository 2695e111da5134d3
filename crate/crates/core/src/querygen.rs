//! Query generation for retrieval benchmarks: an offline TF-IDF template
//! generator and an HTTP LLM client that falls back to it.

use std::time::Duration;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::Chunk;
use crate::dataset::{top_terms, word_count, DatasetError, IdfTable, MAX_QUERY_WORDS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedQuery {
    pub text: String,
    pub fallback: bool,
}

pub trait QueryGenerator {
    fn name(&self) -> &str;
    fn generate(&self, chunk: &Chunk) -> Result<GeneratedQuery, DatasetError>;
}

/// `"What does <t1> specify regarding <t2>?"` from the chunk's top two
/// TF-IDF terms.
#[derive(Debug, Clone)]
pub struct StubQueryGenerator {
    idf: IdfTable,
}

impl StubQueryGenerator {
    pub fn new(corpus: &[Chunk]) -> Self {
        let texts: Vec<&str> = corpus.iter().map(|c| c.text.as_str()).collect();
        StubQueryGenerator { idf: IdfTable::from_texts(&texts) }
    }

    pub fn query_for(&self, chunk: &Chunk) -> Result<String, DatasetError> {
        let (t1, t2) = top_terms(&chunk.text, &self.idf)
            .ok_or_else(|| DatasetError::EmptyChunk(chunk.chunk_id.clone()))?;
        Ok(format!("What does {t1} specify regarding {t2}?"))
    }
}

impl QueryGenerator for StubQueryGenerator {
    fn name(&self) -> &str {
        "stub"
    }

    fn generate(&self, chunk: &Chunk) -> Result<GeneratedQuery, DatasetError> {
        Ok(GeneratedQuery { text: self.query_for(chunk)?, fallback: false })
    }
}

pub const QUERY_PROMPT_TEMPLATE: &str = "\
You are a telecommunications expert assisting in the development of a technical search engine. \
Given a snippet from an RFC or vendor document, generate a question that would retrieve this snippet \
as a top-ranked result.

Guidelines:
- The question must be answerable from the content of the passage, though it need not cover the entire snippet.
- Prefer domain-relevant, technical terminology, and use paraphrasing where possible instead of copying text verbatim.
- Avoid overly broad or overly specific questions. Keep the focus on key technical concepts present in the passage.
- Limit the query to a maximum of 20 words.

Output Formatting: Return only the query on a single line with no quotation marks, metadata, or explanation.";

pub fn build_prompt(chunk_text: &str) -> String {
    format!("{QUERY_PROMPT_TEMPLATE}\n\nSnippet:\n{chunk_text}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct LlmClientConfig {
    pub endpoint_url: String,
    pub model_name: String,
    pub api_key_env_var: String,
    pub timeout: Duration,
    pub max_retries: usize,
    /// JSON field of the response body holding the generated text.
    pub response_field: String,
}

impl Default for LlmClientConfig {
    fn default() -> Self {
        LlmClientConfig {
            endpoint_url: "http://127.0.0.1:8080/generate".into(),
            model_name: "default".into(),
            api_key_env_var: "TELEMB_LLM_API_KEY".into(),
            timeout: Duration::from_secs(30),
            max_retries: 2,
            response_field: "response".into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("invalid response: {0}")]
    Invalid(String),
}

#[derive(Serialize)]
struct LlmRequest<'a> {
    model: &'a str,
    prompt: &'a str,
}

pub struct LlmQueryGenerator {
    cfg: LlmClientConfig,
    agent: ureq::Agent,
    fallback: StubQueryGenerator,
}

impl LlmQueryGenerator {
    pub fn new(cfg: LlmClientConfig, fallback: StubQueryGenerator) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        LlmQueryGenerator { cfg, agent, fallback }
    }

    fn request_once(&self, prompt: &str) -> Result<String, LlmError> {
        let key = std::env::var(&self.cfg.api_key_env_var)
            .map_err(|_| LlmError::Auth(format!("environment variable {} not set", self.cfg.api_key_env_var)))?;
        let body = LlmRequest { model: &self.cfg.model_name, prompt };
        let mut resp = self
            .agent
            .post(&self.cfg.endpoint_url)
            .header("Authorization", &format!("Bearer {key}"))
            .send_json(&body)
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        if status == 401 || status == 403 {
            return Err(LlmError::Auth(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(LlmError::Transport(format!("HTTP {status}")));
        }
        let value: serde_json::Value =
            resp.body_mut().read_json().map_err(|e| LlmError::Invalid(e.to_string()))?;
        value
            .get(&self.cfg.response_field)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| LlmError::Invalid(format!("missing string field {:?}", self.cfg.response_field)))
    }

    /// Single request with validation; used by [`QueryGenerator::generate`].
    pub fn try_generate(&self, chunk: &Chunk) -> Result<String, LlmError> {
        let raw = self.request_once(&build_prompt(&chunk.text))?;
        validate_query(&raw).map_err(LlmError::Invalid)
    }
}

/// Accepts a non-empty single-line query of at most 20 words.
pub fn validate_query(raw: &str) -> Result<String, String> {
    let q = raw.trim();
    if q.is_empty() {
        return Err("empty query".into());
    }
    if q.contains('\n') {
        return Err("query spans multiple lines".into());
    }
    let n = word_count(q);
    if n > MAX_QUERY_WORDS {
        return Err(format!("query has {n} words"));
    }
    Ok(q.to_string())
}

impl QueryGenerator for LlmQueryGenerator {
    fn name(&self) -> &str {
        "llm"
    }

    fn generate(&self, chunk: &Chunk) -> Result<GeneratedQuery, DatasetError> {
        if chunk.text.trim().is_empty() {
            return Err(DatasetError::EmptyChunk(chunk.chunk_id.clone()));
        }
        for _ in 0..=self.cfg.max_retries {
            match self.try_generate(chunk) {
                Ok(text) => return Ok(GeneratedQuery { text, fallback: false }),
                Err(LlmError::Auth(_)) => break,
                Err(_) => continue,
            }
        }
        Ok(GeneratedQuery { text: self.fallback.query_for(chunk)?, fallback: true })
    }
}

/// Generates one query per chunk with at most `max_in_flight` concurrent
/// calls; results come back in chunk order.
pub fn generate_all(
    gen: &(dyn QueryGenerator + Sync),
    chunks: &[Chunk],
    max_in_flight: usize,
) -> Result<Vec<GeneratedQuery>, DatasetError> {
    let workers = max_in_flight.clamp(1, chunks.len().max(1));
    if workers == 1 {
        return chunks.iter().map(|c| gen.generate(c)).collect();
    }
    let per = chunks.len().div_ceil(workers);
    let parts: Vec<Result<Vec<GeneratedQuery>, DatasetError>> = std::thread::scope(|s| {
        let handles: Vec<_> = chunks
            .chunks(per)
            .map(|part| s.spawn(move || part.iter().map(|c| gen.generate(c)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("query worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(chunks.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}
