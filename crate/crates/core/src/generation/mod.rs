//! Prompt assembly, generator backends and candidate scoring.

mod backend;
mod output;
mod prompt;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use backend::{
    Backoff, BackoffConfig, BackendError, CallMeta, GeneratorBackend, RemoteChatBackend, RemoteChatConfig, ScriptFile,
    ScriptMode, ScriptStep, ScriptedGenerator, DEFAULT_SCRIPT,
};
pub use output::{dedent, parse_model_output};
pub use prompt::{
    assemble_prompt, fixed_system_prompt, format_instructions, ChatMessage, OutputFormat, PromptRequest, Role,
};

use crate::error::GenerationError;
use crate::metrics::MetricDef;
use crate::proof_model::{parse_tactic_proof, strip_state_comments, TacticProof, TheoremEntry};
use crate::verifier::{is_correct, VerificationResult, Verifier};

pub const UNPARSEABLE_OUTPUT: &str = "unparseable output";

/// A scored, verified candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub raw_output: String,
    pub proof: Option<TacticProof>,
    pub verification: Option<VerificationResult>,
    pub metric_score: Option<f64>,
    pub correct: bool,
    pub error_count: usize,
    pub error_messages: Vec<String>,
    /// Improvement over the theorem's initial proof; zero unless correct.
    pub improvement: f64,
}

impl GenerationResult {
    /// Candidate that could not be turned into a proof.
    pub fn unparseable(raw_output: impl Into<String>, detail: &str) -> Self {
        GenerationResult {
            raw_output: raw_output.into(),
            proof: None,
            verification: None,
            metric_score: None,
            correct: false,
            error_count: 1,
            error_messages: vec![format!("{UNPARSEABLE_OUTPUT}: {detail}")],
            improvement: 0.0,
        }
    }

    /// Scores an already verified proof.
    pub fn scored(
        raw_output: impl Into<String>,
        proof: TacticProof,
        verification: VerificationResult,
        metric: &MetricDef,
        baseline: f64,
    ) -> Self {
        let correct = is_correct(&verification);
        let score = metric.score(&proof, &verification);
        let improvement = metric.improvement(baseline, score, correct).unwrap_or_else(|e| {
            log::warn!("{}: {e}; treating improvement as 0", metric.name);
            0.0
        });
        GenerationResult {
            raw_output: raw_output.into(),
            error_count: verification.errors.len(),
            error_messages: verification.error_messages(),
            proof: Some(proof),
            verification: Some(verification),
            metric_score: Some(score),
            correct,
            improvement,
        }
    }
}

/// Generator backend plus the verifier and retry policy used to check its
/// output.
#[derive(Clone)]
pub struct Generator {
    pub backend: Arc<dyn GeneratorBackend>,
    pub verifier: Arc<Verifier>,
    pub backoff: Backoff,
}

impl Generator {
    pub fn new(backend: Arc<dyn GeneratorBackend>, verifier: Arc<Verifier>, backoff: Backoff) -> Self {
        Generator {
            backend,
            verifier,
            backoff,
        }
    }
}

/// Metric score of the theorem's initial proof.
pub fn baseline_score(metric: &MetricDef, entry: &TheoremEntry, verifier: &Verifier) -> Result<f64, crate::error::VerifierError> {
    let v = verifier.verify(entry, &entry.initial_proof)?;
    Ok(metric.score(&entry.initial_proof, &v))
}

/// Verifies and scores the proof text in `raw`.
pub fn evaluate_output(
    raw: &str,
    request: &PromptRequest,
    verifier: &Verifier,
    baseline: f64,
) -> GenerationResult {
    let text = match parse_model_output(raw, request.output_format) {
        Ok(t) => t,
        Err(e) => return GenerationResult::unparseable(raw, &e.to_string()),
    };
    let proof = match strip_state_comments(&text).and_then(|t| parse_tactic_proof(&t)) {
        Ok(p) => p,
        Err(e) => return GenerationResult::unparseable(raw, &e.to_string()),
    };
    let verification = match verifier.verify(&request.entry, &proof) {
        Ok(v) => v,
        Err(e) => VerificationResult::failed(format!("verifier error: {e}")),
    };
    GenerationResult::scored(raw, proof, verification, &request.metric, baseline)
}

/// One generator call: assemble the prompt, call the backend with backoff,
/// parse, verify and score. Only backend exhaustion is an error; parse and
/// verification failures come back as incorrect candidates.
pub fn generate_candidate(
    generator: &Generator,
    request: &PromptRequest,
    baseline: f64,
    meta: &CallMeta,
) -> Result<GenerationResult, GenerationError> {
    let owned;
    let request = if request.cos_enabled && request.current_states.is_empty() {
        let mut r = request.clone();
        if let Ok(v) = generator.verifier.verify(&r.entry, &r.current_proof) {
            r.current_states = v.states;
        }
        owned = r;
        &owned
    } else {
        request
    };
    let messages = assemble_prompt(request);
    let raw = generator.backoff.call(generator.backend.as_ref(), &messages, meta)?;
    Ok(evaluate_output(&raw, request, &generator.verifier, baseline))
}
