//! Interleave proof states into a proof as comments, then strip them again.

use proofopt::cos::annotate_chain_of_states;
use proofopt::proof_model::{parse_tactic_proof, strip_state_comments};
use proofopt::verifier::ProofState;

fn main() {
    let proof = parse_tactic_proof("constructor\n· exact ha\n· exact hb\n").unwrap();
    let states = vec![
        ProofState::open(vec!["ha : a\nhb : b\n⊢ a".into(), "ha : a\nhb : b\n⊢ b".into()]),
        ProofState::open(vec!["ha : a\nhb : b\n⊢ b".into()]),
        ProofState::solved(),
    ];
    let annotated = annotate_chain_of_states(&proof, &states).unwrap();
    println!("{annotated}\n");
    println!("stripped:\n{}", strip_state_comments(&annotated).unwrap());
}
