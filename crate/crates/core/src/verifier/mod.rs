//! Proof checking against a proof assistant.
//!
//! A [`VerifierBackend`] checks one `(context, statement, proof)` triple and
//! reports errors plus the proof state after each counted tactic. The
//! [`Verifier`] front end adds a content-addressed result cache.

mod cache;
mod mock;
mod repl;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cache::ResultCache;
pub use mock::{MockBackend, MockFixture};
pub use repl::{serve, ReplBackend, ReplConfig, WireMessage, WireRequest, WireResponse};

use crate::error::VerifierError;
use crate::proof_model::{render_at, TacticProof, TheoremEntry, DEFAULT_INDENT};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifierMessage {
    pub message: String,
    #[serde(default)]
    pub line: u32,
    #[serde(default)]
    pub col: u32,
}

impl VerifierMessage {
    pub fn new(message: impl Into<String>, line: u32, col: u32) -> Self {
        VerifierMessage {
            message: message.into(),
            line,
            col,
        }
    }
}

/// Goals open after a tactic. For a tactic that opens a nested block this is
/// the state at the start of that block.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofState {
    /// Pretty-printed goals, hypotheses included.
    pub goals: Vec<String>,
    pub solved: bool,
}

impl ProofState {
    pub fn open(goals: Vec<String>) -> Self {
        let solved = goals.is_empty();
        ProofState { goals, solved }
    }

    pub fn solved() -> Self {
        ProofState {
            goals: Vec::new(),
            solved: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub errors: Vec<VerifierMessage>,
    /// One state per counted tactic in pre-order, truncated at a failure.
    pub states: Vec<ProofState>,
    pub solved: bool,
    #[serde(default)]
    pub elapsed: Duration,
}

pub const TIMEOUT_MESSAGE: &str = "timeout";

impl VerificationResult {
    pub fn solved(states: Vec<ProofState>) -> Self {
        VerificationResult {
            errors: Vec::new(),
            states,
            solved: true,
            elapsed: Duration::ZERO,
        }
    }

    pub fn failed(message: impl Into<String>) -> Self {
        VerificationResult {
            errors: vec![VerifierMessage::new(message, 0, 0)],
            states: Vec::new(),
            solved: false,
            elapsed: Duration::ZERO,
        }
    }

    pub fn error_messages(&self) -> Vec<String> {
        self.errors.iter().map(|e| e.message.clone()).collect()
    }

    fn is_timeout(&self) -> bool {
        self.errors.len() == 1 && self.errors[0].message == TIMEOUT_MESSAGE
    }
}

/// True iff the proof checked without errors and closed every goal.
pub fn is_correct(result: &VerificationResult) -> bool {
    result.errors.is_empty() && result.solved
}

/// One unit of work for a backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckRequest {
    pub context: String,
    pub statement: String,
    /// Tactic block as it appears under `:= by`.
    pub proof: String,
}

impl CheckRequest {
    pub fn new(entry: &TheoremEntry, proof: &TacticProof) -> Self {
        CheckRequest {
            context: entry.context.clone(),
            statement: entry.statement.clone(),
            proof: render_at(proof, DEFAULT_INDENT, DEFAULT_INDENT),
        }
    }

    /// Content hash of the request.
    pub fn key(&self) -> String {
        let mut h = Sha256::new();
        for part in [&self.context, &self.statement, &self.proof] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }
}

pub trait VerifierBackend: Send + Sync {
    fn id(&self) -> &str;
    fn check(&self, request: &CheckRequest) -> Result<VerificationResult, VerifierError>;
}

/// Backend front end with result caching.
pub struct Verifier {
    backend: Arc<dyn VerifierBackend>,
    cache: ResultCache,
}

impl Verifier {
    pub fn new(backend: Arc<dyn VerifierBackend>) -> Self {
        Verifier {
            backend,
            cache: ResultCache::in_memory(),
        }
    }

    pub fn with_cache(backend: Arc<dyn VerifierBackend>, cache: ResultCache) -> Self {
        Verifier { backend, cache }
    }

    pub fn backend(&self) -> &Arc<dyn VerifierBackend> {
        &self.backend
    }

    pub fn verify(&self, entry: &TheoremEntry, proof: &TacticProof) -> Result<VerificationResult, VerifierError> {
        self.verify_request(&CheckRequest::new(entry, proof))
    }

    pub fn verify_request(&self, request: &CheckRequest) -> Result<VerificationResult, VerifierError> {
        let key = request.key();
        if let Some(hit) = self.cache.get(&key)? {
            return Ok(hit);
        }
        let result = self.backend.check(request)?;
        if !result.is_timeout() {
            self.cache.put(&key, &result)?;
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proof_model::parse_tactic_proof;

    fn entry(proof: &str) -> TheoremEntry {
        TheoremEntry {
            name: "t".into(),
            statement: "theorem t : True".into(),
            context: "import Mathlib".into(),
            initial_proof: parse_tactic_proof(proof).unwrap(),
            source_path: "t.lean".into(),
        }
    }

    #[test]
    fn correctness_predicate() {
        assert!(is_correct(&VerificationResult::solved(vec![ProofState::solved()])));
        let mut unsolved = VerificationResult::solved(vec![ProofState::open(vec!["⊢ True".into()])]);
        unsolved.solved = false;
        assert!(!is_correct(&unsolved));
        assert!(!is_correct(&VerificationResult::failed("boom")));
    }

    #[test]
    fn request_key_depends_on_all_parts() {
        let e = entry("trivial");
        let a = CheckRequest::new(&e, &e.initial_proof);
        let mut b = a.clone();
        b.context.push(' ');
        assert_ne!(a.key(), b.key());
        let mut c = a.clone();
        c.statement = "theorem u : True".into();
        assert_ne!(a.key(), c.key());
        assert_eq!(a.key(), CheckRequest::new(&e, &e.initial_proof).key());
    }

    #[test]
    fn repeat_calls_are_served_from_cache() {
        let e = entry("trivial");
        let mock = Arc::new(MockBackend::from_fixtures(vec![MockFixture::correct(
            &e.statement,
            "trivial",
            vec![ProofState::solved()],
        )]));
        let verifier = Verifier::new(mock.clone());
        let first = verifier.verify(&e, &e.initial_proof).unwrap();
        let second = verifier.verify(&e, &e.initial_proof).unwrap();
        assert_eq!(first, second);
        assert_eq!(mock.calls(), 1);
        assert!(is_correct(&first));
    }

    #[test]
    fn sorry_is_never_correct() {
        let e = entry("sorry");
        let verifier = Verifier::new(Arc::new(MockBackend::default()));
        let r = verifier.verify(&e, &e.initial_proof).unwrap();
        assert!(!r.solved);
        assert!(!r.errors.is_empty());
    }
}
