//! Print the chat messages sent to the model for one theorem.

use proofopt::bench::find_declaration;
use proofopt::generation::{assemble_prompt, PromptRequest};
use proofopt::metrics::MetricDef;

const SOURCE: &str = "theorem swap (a b : ℕ) (h : a = b) : b = a := by\n  symm\n  exact h\n";

fn main() {
    let entry = find_declaration(SOURCE, "swap.lean", "swap").unwrap();
    let request = PromptRequest::new(MetricDef::length(), entry);
    for m in assemble_prompt(&request) {
        println!("== {:?}\n{}\n", m.role, m.content);
    }
}
