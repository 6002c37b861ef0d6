//! Parse a tactic proof and count its steps.
//!
//! `cargo run --example count_tactics -- path/to/proof.lean`

use proofopt::proof_model::{count_tactics, parse_tactic_proof};

fn main() {
    let path = std::env::args().nth(1);
    let text = match &path {
        Some(p) => std::fs::read_to_string(p).expect("readable proof file"),
        None => "intro x\nconstructor\n· simp\n· exact h x; rfl\n".to_string(),
    };
    let proof = parse_tactic_proof(&text).expect("proof parses");
    println!("{} tactics", count_tactics(&proof));
    for step in proof.iter() {
        println!("  {}", step.head());
    }
}
