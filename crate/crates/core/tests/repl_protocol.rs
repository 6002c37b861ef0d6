//! The REPL client against real child processes: the mock server built into
//! the binary, and small shell scripts that misbehave.

mod common;

use std::sync::Arc;
use std::time::Duration;

use proofopt::error::VerifierError;
use proofopt::verifier::{CheckRequest, ReplBackend, ReplConfig, Verifier, VerifierBackend};

use common::*;

fn inter_union_request() -> CheckRequest {
    CheckRequest {
        context: "import Mathlib\n".into(),
        statement: "theorem inter_union_sub : s ∩ t ∪ s ∩ u ⊆ s ∩ (t ∪ u)".into(),
        proof: read("inter_union_left.lean"),
    }
}

fn mock_server(pool: usize) -> ReplBackend {
    let mut cfg = ReplConfig::new(vec![
        env!("CARGO_BIN_EXE_proofopt").into(),
        "--mock-fixtures".into(),
        fixture("inter_union_mock.json").to_string_lossy().into_owned(),
        "serve-mock".into(),
    ]);
    cfg.pool_size = pool;
    cfg.timeout = Duration::from_secs(10);
    ReplBackend::new(cfg)
}

fn script(body: &str, timeout_ms: u64) -> ReplBackend {
    let mut cfg = ReplConfig::new(vec!["sh".into(), "-c".into(), body.into()]);
    cfg.timeout = Duration::from_millis(timeout_ms);
    ReplBackend::new(cfg)
}

#[test]
fn mock_server_returns_states() {
    let backend = mock_server(1);
    let r = backend.check(&inter_union_request()).unwrap();
    assert!(r.solved && r.errors.is_empty());
    assert_eq!(r.states.len(), 7);
    assert!(r.states[3].solved && r.states[6].solved);

    let mut wrong = inter_union_request();
    wrong.proof = "simp".into();
    let r = backend.check(&wrong).unwrap();
    assert!(!r.solved);
    assert_eq!(r.errors.len(), 1);
}

#[test]
fn pooled_processes_serve_concurrent_checks() {
    let verifier = Arc::new(Verifier::new(Arc::new(mock_server(2))));
    let entry = proofopt::proof_model::TheoremEntry {
        name: "inter_union_sub".into(),
        statement: inter_union_request().statement,
        context: String::new(),
        initial_proof: proofopt::proof_model::parse_tactic_proof(&read("inter_union_left.lean")).unwrap(),
        source_path: "inter_union.lean".into(),
    };
    std::thread::scope(|s| {
        for _ in 0..4 {
            let (v, e) = (verifier.clone(), entry.clone());
            s.spawn(move || {
                let r = v.verify(&e, &e.initial_proof).unwrap();
                assert!(r.solved);
            });
        }
    });
}

#[test]
fn silent_process_times_out() {
    let backend = script("echo '{\"ready\": true}'; sleep 5", 300);
    let r = backend.check(&inter_union_request()).unwrap();
    assert!(!r.solved);
    assert_eq!(r.error_messages(), ["timeout"]);
}

#[test]
fn bad_handshake_is_unavailable() {
    let backend = script("echo hello; sleep 1", 2000);
    assert!(matches!(backend.check(&inter_union_request()), Err(VerifierError::BackendUnavailable(_))));
}

#[test]
fn garbage_reply_is_a_protocol_error() {
    let backend = script("echo '{\"ready\": true}'; read line; echo 'not json'; sleep 1", 2000);
    assert!(matches!(backend.check(&inter_union_request()), Err(VerifierError::ProtocolError(_))));
}

#[test]
fn mismatched_id_is_a_protocol_error() {
    let backend = script(
        "echo '{\"ready\": true}'; read line; echo '{\"id\": 99, \"solved\": true}'; sleep 1",
        2000,
    );
    assert!(matches!(backend.check(&inter_union_request()), Err(VerifierError::ProtocolError(_))));
}

#[test]
fn exiting_process_is_unavailable() {
    let backend = script("echo '{\"ready\": true}'; read line; exit 0", 2000);
    assert!(matches!(backend.check(&inter_union_request()), Err(VerifierError::BackendUnavailable(_))));
}
