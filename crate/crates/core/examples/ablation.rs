//! Compare sampler settings on one theorem. The scripted model only finds
//! the short proof on its third call, so a single sample misses it.

use std::sync::Arc;

use proofopt::bench::{find_declaration, run_ablation, AblationGrid, DatasetEntry};
use proofopt::config::{RunConfig, Runtime};
use proofopt::generation::ScriptedGenerator;
use proofopt::proof_model::render_proof;
use proofopt::verifier::{MockBackend, MockFixture, Verifier};

const SOURCE: &str = "theorem swap (a b : ℕ) (h : a = b) : b = a := by\n  symm\n  exact h\n";

const GRID: &str = r#"
[[group]]
name = "sampler"

[[group.variant]]
name = "single"
set = { sampler = { kind = "single" } }

[[group.variant]]
name = "best_of_3"
set = { sampler = { kind = "best_of_n", n = 3 } }

[[group]]
name = "examples"
[group.axes]
examples = [0, 2]
"#;

fn main() {
    let entry = find_declaration(SOURCE, "swap.lean", "swap").unwrap();
    let mock = MockBackend::from_fixtures([
        MockFixture::correct(&entry.statement, &render_proof(&entry.initial_proof, 2), vec![]),
        MockFixture::correct(&entry.statement, "exact h.symm", vec![]),
    ]);
    let model = ScriptedGenerator::from_texts([r#"["simp"]"#, r#"["rfl"]"#, r#"["exact h.symm"]"#]).cycling(true);
    let runtime = Runtime::new(RunConfig::default(), Arc::new(model), Arc::new(Verifier::new(Arc::new(mock))), None).unwrap();

    let dataset = [DatasetEntry { entry, dataset_id: "demo".into(), proof_start: None }];
    let grid = AblationGrid::from_toml(GRID).unwrap();
    let report = run_ablation(&grid, &dataset, &runtime, None).unwrap();
    println!("{}", report.table());
}
