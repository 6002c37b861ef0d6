//! Chain-of-States annotation: the proof state reached after each tactic line
//! is written into the proof as a block comment below that line.

use crate::error::CosError;
use crate::proof_model::{count_tactics, Renderer, TacticProof, DEFAULT_INDENT, SOLVED_MARKER};
use crate::verifier::ProofState;

/// Block comment for one state, indented to `col`.
pub fn render_state_comment(state: &ProofState, col: usize) -> String {
    let pad = " ".repeat(col);
    let mut lines = vec![format!("{pad}/-")];
    if state.solved || state.goals.is_empty() {
        lines.push(format!("{pad}{SOLVED_MARKER}"));
    } else {
        for goal in &state.goals {
            for l in goal.lines() {
                lines.push(format!("{pad}{}", l.trim_end()));
            }
        }
    }
    lines.push(format!("{pad}-/"));
    lines.join("\n")
}

/// Annotates `proof` with `states` (pre-order, one per counted tactic). Each
/// tactic line gets the state after the last tactic on it; lines past the
/// end of a truncated state list are left bare.
pub fn annotate_chain_of_states(proof: &TacticProof, states: &[ProofState]) -> Result<String, CosError> {
    annotate_at(proof, states, 0)
}

/// Like [`annotate_chain_of_states`] with top-level tactics at column `base`.
pub fn annotate_at(proof: &TacticProof, states: &[ProofState], base: usize) -> Result<String, CosError> {
    let tactics = count_tactics(proof);
    if states.len() > tactics {
        return Err(CosError::AlignmentError {
            states: states.len(),
            tactics,
        });
    }
    let mut r = Renderer::new(DEFAULT_INDENT, |last, col| {
        states.get(last).map(|s| render_state_comment(s, col))
    });
    r.block(&proof.steps, base);
    r.trailing(&proof.trailing_comments, base);
    Ok(r.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proof_model::{normalize_whitespace, parse_tactic_proof, render_proof, strip_state_comments};

    #[test]
    fn empty_states_leave_proof_unchanged() {
        let p = parse_tactic_proof("intro x\nexact x").unwrap();
        assert_eq!(annotate_chain_of_states(&p, &[]).unwrap(), render_proof(&p, 2));
    }

    #[test]
    fn too_many_states() {
        let p = parse_tactic_proof("rfl").unwrap();
        let err = annotate_chain_of_states(&p, &[ProofState::solved(), ProofState::solved()]);
        assert!(matches!(err, Err(CosError::AlignmentError { states: 2, tactics: 1 })));
    }

    #[test]
    fn single_solved_tactic() {
        let p = parse_tactic_proof("rfl").unwrap();
        let out = annotate_chain_of_states(&p, &[ProofState::solved()]).unwrap();
        assert_eq!(out, "rfl\n/-\nGoals Solved!\n-/");
    }

    #[test]
    fn chained_line_shows_last_state_only() {
        let p = parse_tactic_proof("constructor; simp\nrfl").unwrap();
        let states = vec![
            ProofState::open(vec!["⊢ a".into(), "⊢ b".into()]),
            ProofState::open(vec!["⊢ c".into()]),
            ProofState::solved(),
        ];
        let out = annotate_chain_of_states(&p, &states).unwrap();
        assert_eq!(out, "constructor; simp\n/-\n⊢ c\n-/\nrfl\n/-\nGoals Solved!\n-/");
    }

    #[test]
    fn truncated_states_and_nested_blocks() {
        let src = "have h : a := by\n  simp\n  ring\nexact h";
        let p = parse_tactic_proof(src).unwrap();
        let states = vec![ProofState::open(vec!["⊢ a".into()]), ProofState::open(vec!["⊢ a'".into()])];
        let out = annotate_chain_of_states(&p, &states).unwrap();
        assert_eq!(out, "have h : a := by\n/-\n⊢ a\n-/\n  simp\n  /-\n  ⊢ a'\n  -/\n  ring\nexact h");
        let back = strip_state_comments(&out).unwrap();
        assert_eq!(normalize_whitespace(&back), normalize_whitespace(src));
        assert_eq!(count_tactics(&parse_tactic_proof(&out).unwrap()), 4);
    }
}
