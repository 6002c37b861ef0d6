//! Optimize one theorem for length, offline: a scripted model and a mock
//! verifier stand in for the real backends.

use std::sync::Arc;

use proofopt::bench::{find_declaration, replace_proof};
use proofopt::config::{RunConfig, Runtime};
use proofopt::generation::ScriptedGenerator;
use proofopt::proof_model::render_proof;
use proofopt::sampling::run_sampler;
use proofopt::verifier::{MockBackend, MockFixture, Verifier};

const SOURCE: &str = "theorem swap (a b : ℕ) (h : a = b) : b = a := by\n  symm\n  exact h\n";

fn main() {
    let entry = find_declaration(SOURCE, "swap.lean", "swap").unwrap();
    let mock = MockBackend::from_fixtures([
        MockFixture::correct(&entry.statement, &render_proof(&entry.initial_proof, 2), vec![]),
        MockFixture::correct(&entry.statement, "exact h.symm", vec![]),
    ]);
    let model = ScriptedGenerator::constant(r#"["exact h.symm"]"#).cycling(true);
    let mut config = RunConfig::default();
    config.examples = 0;
    let runtime = Runtime::new(config, Arc::new(model), Arc::new(Verifier::new(Arc::new(mock))), None).unwrap();

    let mut ctx = runtime.sampler_context("swap");
    let request = runtime.config.request(&runtime.metric, &entry);
    let out = run_sampler(&runtime.config.sampler, &mut ctx, &request).unwrap();
    let best = out.result.proof.as_ref().expect("a parsed proof");
    println!(
        "{} → {}, improvement {:.1}%, {} model calls",
        out.baseline_score,
        out.result.metric_score.unwrap_or(out.baseline_score),
        out.result.improvement,
        out.generator_calls
    );
    print!("{}", replace_proof(SOURCE, "swap.lean", "swap", best).unwrap());
}
