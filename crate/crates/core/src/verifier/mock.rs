use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CheckRequest, ProofState, VerificationResult, VerifierBackend, VerifierMessage};
use crate::error::VerifierError;
use crate::proof_model::{normalize_whitespace, parse_tactic_proof, render_proof, strip_state_comments};

/// Canned verification outcome for one `(statement, proof)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockFixture {
    pub statement: String,
    pub proof: String,
    #[serde(default = "yes")]
    pub solved: bool,
    #[serde(default)]
    pub errors: Vec<VerifierMessage>,
    #[serde(default)]
    pub states: Vec<ProofState>,
}

fn yes() -> bool {
    true
}

impl MockFixture {
    pub fn correct(statement: &str, proof: &str, states: Vec<ProofState>) -> Self {
        MockFixture {
            statement: statement.into(),
            proof: proof.into(),
            solved: true,
            errors: Vec::new(),
            states,
        }
    }

    pub fn failing(statement: &str, proof: &str, errors: Vec<VerifierMessage>) -> Self {
        MockFixture {
            statement: statement.into(),
            proof: proof.into(),
            solved: false,
            errors,
            states: Vec::new(),
        }
    }

    fn result(&self) -> VerificationResult {
        VerificationResult {
            solved: self.solved && self.errors.is_empty(),
            errors: self.errors.clone(),
            states: self.states.clone(),
            elapsed: std::time::Duration::ZERO,
        }
    }
}

/// Deterministic offline backend.
///
/// Looks proofs up in a fixture table keyed on the whitespace-normalized
/// statement and the comment-free rendering of the proof. Unknown proofs are
/// reported incorrect with a single error; proofs containing `sorry` always
/// are.
#[derive(Default)]
pub struct MockBackend {
    table: HashMap<String, VerificationResult>,
    calls: AtomicUsize,
}

pub(crate) fn canonical_proof(text: &str) -> String {
    let stripped = strip_state_comments(text).unwrap_or_else(|_| text.to_string());
    match parse_tactic_proof(&stripped) {
        Ok(mut proof) => {
            proof.trailing_comments.clear();
            fn clear(steps: &mut [crate::proof_model::TacticStep]) {
                for s in steps {
                    s.comments.clear();
                    clear(&mut s.children);
                }
            }
            clear(&mut proof.steps);
            normalize_whitespace(&render_proof(&proof, 2))
        }
        Err(_) => normalize_whitespace(&stripped),
    }
}

fn fixture_key(statement: &str, proof: &str) -> String {
    let mut h = Sha256::new();
    h.update(normalize_whitespace(statement).as_bytes());
    h.update([0u8]);
    h.update(canonical_proof(proof).as_bytes());
    hex::encode(h.finalize())
}

fn has_sorry(proof: &str) -> bool {
    proof
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .any(|w| w == "sorry")
}

pub const SORRY_MESSAGE: &str = "declaration uses 'sorry'";
pub const UNKNOWN_PROOF_MESSAGE: &str = "mock verifier: no fixture for this proof";

impl MockBackend {
    pub fn from_fixtures(fixtures: impl IntoIterator<Item = MockFixture>) -> Self {
        let mut backend = MockBackend::default();
        for f in fixtures {
            backend.insert(f);
        }
        backend
    }

    pub fn insert(&mut self, fixture: MockFixture) {
        self.table
            .insert(fixture_key(&fixture.statement, &fixture.proof), fixture.result());
    }

    /// Loads a JSON array of [`MockFixture`]s.
    pub fn load(path: &Path) -> Result<Self, VerifierError> {
        let text = std::fs::read_to_string(path)?;
        let fixtures: Vec<MockFixture> = serde_json::from_str(&text)
            .map_err(|e| VerifierError::ProtocolError(format!("bad fixture file {}: {e}", path.display())))?;
        Ok(Self::from_fixtures(fixtures))
    }

    /// Number of checks served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl VerifierBackend for MockBackend {
    fn id(&self) -> &str {
        "mock"
    }

    fn check(&self, request: &CheckRequest) -> Result<VerificationResult, VerifierError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(hit) = self.table.get(&fixture_key(&request.statement, &request.proof)) {
            return Ok(hit.clone());
        }
        if has_sorry(&request.proof) {
            return Ok(VerificationResult::failed(SORRY_MESSAGE));
        }
        Ok(VerificationResult::failed(UNKNOWN_PROOF_MESSAGE))
    }
}
