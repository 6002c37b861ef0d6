//! Score two versions of a proof under each built-in metric.

use proofopt::metrics::MetricDef;
use proofopt::proof_model::parse_tactic_proof;
use proofopt::verifier::VerificationResult;

fn main() {
    let before = parse_tactic_proof("intro x\nsimp at x\nhave h : x = x := by rfl\nexact h").unwrap();
    let after = parse_tactic_proof("intro x\nexact rfl").unwrap();
    let ok = VerificationResult::solved(vec![]);
    for metric in [MetricDef::length(), MetricDef::readability(), MetricDef::completion()] {
        let (b, a) = (metric.score(&before, &ok), metric.score(&after, &ok));
        let report = metric.report(b, a, true).unwrap();
        println!("{:<12} {b:>6.2} → {a:>6.2}  improvement {:.2}", metric.name, report.improvement);
    }
}
