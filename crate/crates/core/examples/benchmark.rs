//! Run a small benchmark offline and print the aggregate table. With a
//! directory argument, the report files are written there.

use std::path::PathBuf;
use std::sync::Arc;

use proofopt::bench::{extract_theorems, run_benchmark, DatasetEntry};
use proofopt::config::{RunConfig, Runtime};
use proofopt::generation::{ScriptStep, ScriptedGenerator};
use proofopt::proof_model::render_proof;
use proofopt::verifier::{MockBackend, MockFixture, Verifier};

const SOURCE: &str = "\
theorem swap (a b : ℕ) (h : a = b) : b = a := by
  symm
  exact h

theorem add_zero' (n : ℕ) : n + 0 = n := by
  simp

theorem both (p q : Prop) (hp : p) (hq : q) : p ∧ q := by
  constructor
  · exact hp
  · exact hq
";

fn main() {
    let dataset: Vec<DatasetEntry> = extract_theorems(SOURCE, "demo.lean")
        .unwrap()
        .into_iter()
        .map(|(entry, proof_start)| DatasetEntry { entry, dataset_id: "demo".into(), proof_start })
        .collect();
    let mut fixtures: Vec<MockFixture> = dataset
        .iter()
        .map(|d| MockFixture::correct(&d.entry.statement, &render_proof(&d.entry.initial_proof, 2), vec![]))
        .collect();
    fixtures.push(MockFixture::correct(&dataset[0].entry.statement, "exact h.symm", vec![]));
    fixtures.push(MockFixture::correct(&dataset[2].entry.statement, "exact ⟨hp, hq⟩", vec![]));

    let model = ScriptedGenerator::constant(r#"["exact h.symm"]"#)
        .with_script("both", vec![ScriptStep::Text(r#"["exact ⟨hp, hq⟩"]"#.into())])
        .cycling(true);
    let mut config = RunConfig::default();
    config.examples = 0;
    let verifier = Verifier::new(Arc::new(MockBackend::from_fixtures(fixtures)));
    let runtime = Runtime::new(config, Arc::new(model), Arc::new(verifier), None).unwrap();

    let out = std::env::args().nth(1).map(PathBuf::from);
    let report = run_benchmark(&dataset, &runtime, out.as_deref()).unwrap();
    for row in &report.rows {
        println!("{:<10} {} → {}", row.name, row.baseline_score, row.final_score);
    }
    println!("\n{}", report.table());
}
