#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use proofopt::bench::{extract_theorems, load_dataset, DatasetEntry};
use proofopt::config::{RunConfig, Runtime};
use proofopt::generation::{GeneratorBackend, ScriptFile, ScriptedGenerator};
use proofopt::proof_model::{render_proof, TheoremEntry};
use proofopt::verifier::{MockBackend, MockFixture, ProofState, Verifier};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn read(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn choose_entry() -> TheoremEntry {
    let src = read("choose_original.lean");
    extract_theorems(&src, "choose_original.lean").unwrap().remove(0).0
}

pub fn corpus() -> Vec<DatasetEntry> {
    load_dataset(&fixture("corpus"), None).unwrap()
}

/// Every entry's initial proof verifies, with one open state per tactic and
/// a solved last state.
pub fn accepting_mock(entries: &[TheoremEntry]) -> MockBackend {
    MockBackend::from_fixtures(entries.iter().map(|e| {
        MockFixture::correct(&e.statement, &render_proof(&e.initial_proof, 2), synthetic_states(e.initial_proof.count()))
    }))
}

pub fn synthetic_states(n: usize) -> Vec<ProofState> {
    (0..n)
        .map(|i| {
            if i + 1 == n {
                ProofState::solved()
            } else {
                ProofState::open(vec![format!("x : ℕ\n⊢ goal {i}")])
            }
        })
        .collect()
}

pub fn load_script(name: &str) -> ScriptedGenerator {
    let file: ScriptFile = serde_json::from_str(&read(name)).unwrap();
    ScriptedGenerator::from_file(file)
}

/// Runtime with no retrieval, sleeping backoff disabled and the given pieces.
pub fn runtime(config: RunConfig, backend: Arc<dyn GeneratorBackend>, mock: MockBackend) -> Runtime {
    let mut rt = Runtime::new(config, backend, Arc::new(Verifier::new(Arc::new(mock))), None).unwrap();
    rt.generator.backoff = rt.generator.backoff.clone().with_sleeper(|_| {});
    rt
}

pub fn offline_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.examples = 0;
    c.rag = false;
    c
}
