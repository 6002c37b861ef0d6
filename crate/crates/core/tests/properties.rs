//! Property tests over generated proofs, documents, vectors and configs.

mod common;

use std::sync::Arc;

use proptest::prelude::*;

use proofopt::bench::{compute_performance_metrics, extract_theorems, ReportRow};
use proofopt::cos::annotate_chain_of_states;
use proofopt::generation::{
    assemble_prompt, parse_model_output, Backoff, BackoffConfig, CallMeta, OutputFormat, PromptRequest,
};
use proofopt::metrics::{score_length, score_readability, MetricDef};
use proofopt::proof_model::{
    count_tactics, normalize_whitespace, parse_tactic_proof, render_proof, strip_state_comments, TacticStep,
    TheoremEntry,
};
use proofopt::retrieval::{chunk_theorem_corpus, mmr_indices, Embedder, HashingEmbedder};
use proofopt::sampling::SamplerConfig;
use proofopt::verifier::{MockBackend, MockFixture, ProofState, ResultCache, VerificationResult, Verifier};

/// Proof shape with its own step count, independent of the parser.
#[derive(Debug, Clone)]
enum Node {
    Tactic(String),
    Chain(Vec<String>),
    Bullet(Vec<Node>),
    HaveBy(String, Vec<Node>),
}

impl Node {
    fn count(&self) -> usize {
        match self {
            Node::Tactic(_) => 1,
            Node::Chain(ts) => ts.len(),
            Node::Bullet(ch) => ch.iter().map(Node::count).sum(),
            Node::HaveBy(_, ch) => 1 + ch.iter().map(Node::count).sum::<usize>(),
        }
    }

    fn typed_haves(&self) -> usize {
        match self {
            Node::HaveBy(_, ch) => 1 + ch.iter().map(Node::typed_haves).sum::<usize>(),
            Node::Bullet(ch) => ch.iter().map(Node::typed_haves).sum(),
            _ => 0,
        }
    }

    fn render(&self, indent: usize, out: &mut String) {
        let pad = " ".repeat(indent);
        match self {
            Node::Tactic(t) => out.push_str(&format!("{pad}{t}\n")),
            Node::Chain(ts) => out.push_str(&format!("{pad}{}\n", ts.join("; "))),
            Node::Bullet(ch) => {
                let mut inner = String::new();
                for c in ch {
                    c.render(indent + 2, &mut inner);
                }
                out.push_str(&format!("{pad}· {}", &inner[indent + 2..]));
            }
            Node::HaveBy(name, ch) => {
                out.push_str(&format!("{pad}have {name} : a = b := by\n"));
                for c in ch {
                    c.render(indent + 2, out);
                }
            }
        }
    }
}

fn render_nodes(nodes: &[Node]) -> String {
    let mut s = String::new();
    for n in nodes {
        n.render(0, &mut s);
    }
    s
}

fn tactic() -> impl Strategy<Value = String> {
    prop_oneof![
        Just("simp".to_string()),
        Just("rfl".to_string()),
        Just("omega".to_string()),
        Just("constructor".to_string()),
        Just("constructor <;> simp".to_string()),
        "[a-z]{1,4}".prop_map(|v| format!("intro {v}")),
        "[a-z]{1,4}".prop_map(|v| format!("exact h_{v}")),
        "[a-z]{1,4}".prop_map(|v| format!("rw [lemma_{v}]")),
        "[a-z]{1,4}".prop_map(|v| format!("apply foo (f {v}) ⟨{v}, {v}⟩")),
    ]
}

fn node() -> impl Strategy<Value = Node> {
    let leaf = prop_oneof![
        3 => tactic().prop_map(Node::Tactic),
        1 => prop::collection::vec(tactic(), 2..4).prop_map(Node::Chain),
    ];
    leaf.prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 1..4).prop_map(Node::Bullet),
            ("h[0-9]", prop::collection::vec(inner, 1..4)).prop_map(|(n, ch)| Node::HaveBy(n, ch)),
        ]
    })
}

fn proof_nodes() -> impl Strategy<Value = Vec<Node>> {
    prop::collection::vec(node(), 1..6)
}

fn step_counts_are_additive(s: &TacticStep) -> bool {
    s.count() == 1 + s.children.iter().map(TacticStep::count).sum::<usize>()
        && s.children.iter().all(step_counts_are_additive)
}

fn states_for(n: usize, open_every: usize) -> Vec<ProofState> {
    (0..n)
        .map(|i| {
            if i % open_every == 0 {
                ProofState::open(vec![format!("h : a = b\n⊢ p {i}")])
            } else {
                ProofState::solved()
            }
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn count_matches_generator(nodes in proof_nodes()) {
        let text = render_nodes(&nodes);
        let p = parse_tactic_proof(&text).unwrap();
        prop_assert_eq!(count_tactics(&p), nodes.iter().map(Node::count).sum::<usize>(), "{}", text);
        prop_assert!(p.steps.iter().all(step_counts_are_additive));
    }

    #[test]
    fn render_parse_round_trip(nodes in proof_nodes()) {
        let p = parse_tactic_proof(&render_nodes(&nodes)).unwrap();
        let rendered = render_proof(&p, 2);
        let q = parse_tactic_proof(&rendered).unwrap();
        prop_assert_eq!(count_tactics(&q), count_tactics(&p));
        prop_assert_eq!(render_proof(&q, 2), rendered);
    }

    #[test]
    fn strip_inverts_annotate(nodes in proof_nodes(), every in 1usize..4, drop in 0usize..3) {
        let p = parse_tactic_proof(&render_nodes(&nodes)).unwrap();
        let n = count_tactics(&p);
        let states = states_for(n.saturating_sub(drop), every);
        let a = annotate_chain_of_states(&p, &states).unwrap();
        prop_assert_eq!(&a, &annotate_chain_of_states(&p, &states).unwrap());
        let back = strip_state_comments(&a).unwrap();
        prop_assert_eq!(normalize_whitespace(&back), normalize_whitespace(&render_proof(&p, 2)));
        prop_assert_eq!(strip_state_comments(&back).unwrap(), back);
    }

    #[test]
    fn one_comment_block_per_annotated_line(nodes in proof_nodes()) {
        let p = parse_tactic_proof(&render_nodes(&nodes)).unwrap();
        let a = annotate_chain_of_states(&p, &states_for(count_tactics(&p), 1)).unwrap();
        let tactic_lines = render_proof(&p, 2).lines().count();
        prop_assert_eq!(a.lines().filter(|l| l.trim() == "/-").count(), tactic_lines);
    }

    #[test]
    fn metric_bounds_and_monotonicity(nodes in proof_nodes()) {
        let p = parse_tactic_proof(&render_nodes(&nodes)).unwrap();
        let r = score_readability(&p);
        prop_assert!((0.0..=100.0).contains(&r));
        let typed: usize = nodes.iter().map(Node::typed_haves).sum();
        let expect = 100.0 * typed as f64 / count_tactics(&p) as f64;
        prop_assert!((r - expect).abs() < 1e-9);
        prop_assert!(score_length(&p) >= 1.0);

        // Dropping a trailing non-have top-level step.
        if let Some(Node::Tactic(_)) = nodes.last() {
            if nodes.len() > 1 {
                let shorter = parse_tactic_proof(&render_nodes(&nodes[..nodes.len() - 1])).unwrap();
                prop_assert_eq!(score_length(&shorter), score_length(&p) - 1.0);
                prop_assert!(score_readability(&shorter) >= r);
            }
        }
    }

    #[test]
    fn identity_rewrite_gains_nothing(score in 0.5f64..500.0, other in 0.5f64..500.0) {
        for m in [MetricDef::length(), MetricDef::readability(), MetricDef::completion()] {
            prop_assert_eq!(m.improvement(score, score, true).unwrap(), 0.0);
            prop_assert_eq!(m.improvement(score, other, false).unwrap(), 0.0);
        }
    }

    #[test]
    fn flat_output_round_trips(nodes in proof_nodes()) {
        let p = parse_tactic_proof(&render_nodes(&nodes)).unwrap();
        let lines: Vec<String> = render_proof(&p, 2).lines().map(str::to_string).collect();
        let raw = serde_json::to_string(&lines).unwrap();
        let text = parse_model_output(&raw, OutputFormat::Flat).unwrap();
        prop_assert_eq!(render_proof(&parse_tactic_proof(&text).unwrap(), 2), render_proof(&p, 2));
    }

    #[test]
    fn extraction_finds_every_declaration(bodies in prop::collection::vec(proof_nodes(), 1..6)) {
        let mut src = String::from("import Mathlib\n\n");
        for (i, b) in bodies.iter().enumerate() {
            src.push_str(&format!("theorem t{i} (a b : ℕ) : a = b := by\n"));
            for line in render_nodes(b).lines() {
                src.push_str(&format!("  {line}\n"));
            }
            src.push('\n');
        }
        let got = extract_theorems(&src, "gen.lean").unwrap();
        prop_assert_eq!(got.len(), bodies.len());
        for (i, ((e, _), b)) in got.iter().zip(&bodies).enumerate() {
            prop_assert_eq!(&e.name, &format!("t{}", i));
            prop_assert_eq!(count_tactics(&e.initial_proof), b.iter().map(Node::count).sum::<usize>());
        }
    }

    #[test]
    fn corpus_chunks_respect_limits(n in 1usize..30, body in 10usize..400, max in 100usize..600) {
        let overlap = max / 5;
        let doc: String = (0..n).map(|i| format!("theorem x{i} : True := by\n  {}\n", "trivial; ".repeat(body / 9))).collect();
        let chunks = chunk_theorem_corpus(&doc, max, overlap).unwrap();
        let total: Vec<char> = doc.chars().collect();
        for c in &chunks {
            prop_assert!(c.char_len() <= max);
            let slice: String = total[c.source.offset..c.source.offset + c.char_len()].iter().collect();
            prop_assert_eq!(&slice, &c.text);
        }
        for w in chunks.windows(2) {
            let end = w[0].source.offset + w[0].char_len();
            prop_assert!(w[1].source.offset == end || end - w[1].source.offset == overlap);
        }
    }

    #[test]
    fn mmr_picks_distinct_indices(
        vecs in prop::collection::vec(prop::collection::vec(-1.0f32..1.0, 4), 0..10),
        q in prop::collection::vec(-1.0f32..1.0, 4),
        k in 0usize..12,
        lambda in 0.0f64..=1.0,
    ) {
        let got = mmr_indices(&q, &vecs, k, lambda).unwrap();
        prop_assert_eq!(got.len(), k.min(vecs.len()));
        let mut sorted = got.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), got.len());
        prop_assert_eq!(&got, &mmr_indices(&q, &vecs, k, lambda).unwrap());
    }

    #[test]
    fn hashing_embeddings_are_unit_length(text in "\\PC{1,200}") {
        let e = HashingEmbedder::new(128);
        let v = e.embed_one(&text).unwrap();
        let norm: f64 = v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
        prop_assert!(norm == 0.0 || (norm - 1.0).abs() < 1e-4);
        prop_assert_eq!(v, e.embed_one(&text).unwrap());
    }

    #[test]
    fn backoff_delays_within_bounds(seed in any::<u64>(), base in 1u64..5000, ordinal in 0usize..50) {
        let b = Backoff::new(BackoffConfig { base_ms: base, max_retries: 6 }, seed);
        let meta = CallMeta { ordinal, ..CallMeta::default() };
        for r in 0..6u32 {
            let d = b.delay(&meta, r);
            prop_assert!(d.as_millis() <= (base << r) as u128);
            prop_assert_eq!(d, b.delay(&meta, r));
        }
    }

    #[test]
    fn sampler_budget_is_multiplicative(a in 1usize..6, b in 1usize..6, outer_refine in any::<bool>(), inner_refine in any::<bool>()) {
        let inner = if inner_refine {
            SamplerConfig::refinement(b, 1, true, SamplerConfig::Single)
        } else {
            SamplerConfig::best_of_n(b, SamplerConfig::Single)
        };
        let outer = if outer_refine {
            SamplerConfig::refinement(a, 2, false, inner)
        } else {
            SamplerConfig::best_of_n(a, inner)
        };
        prop_assert_eq!(outer.calls(), a * b);
        prop_assert!(outer.validate().is_ok());
    }

    #[test]
    fn aggregates_are_bounded(rows in prop::collection::vec((-50.0f64..50.0, any::<bool>()), 1..30)) {
        let rows: Vec<ReportRow> = rows.into_iter().map(|(i, c)| ReportRow::new("r", 1.0, 1.0, i, c)).collect();
        let a = compute_performance_metrics(&rows).unwrap();
        prop_assert!((0.0..=100.0).contains(&a.accuracy_pct));
        prop_assert!(a.improved_accuracy_pct <= a.accuracy_pct);
    }
}

fn entry(proof: &str) -> TheoremEntry {
    TheoremEntry {
        name: "t".into(),
        statement: "theorem t : 1 = 1".into(),
        context: "import Mathlib".into(),
        initial_proof: parse_tactic_proof(proof).unwrap(),
        source_path: "t.lean".into(),
    }
}

#[test]
fn mock_and_cache_are_transparent() {
    let fixtures = vec![
        MockFixture::correct("theorem t : 1 = 1", "rfl", vec![ProofState::solved()]),
        MockFixture::failing("theorem t : 1 = 1", "simp", vec![proofopt::verifier::VerifierMessage::new("simp failed", 1, 2)]),
    ];
    let uncached = MockBackend::from_fixtures(fixtures.clone());
    let dir = tempfile::tempdir().unwrap();
    let cached = Verifier::with_cache(
        Arc::new(MockBackend::from_fixtures(fixtures)),
        ResultCache::on_disk(dir.path()).unwrap(),
    );
    let plain = Verifier::new(Arc::new(uncached));
    for proof in ["rfl", "simp", "omega", "sorry"] {
        let e = entry(proof);
        let a = plain.verify(&e, &e.initial_proof).unwrap();
        let b = cached.verify(&e, &e.initial_proof).unwrap();
        let c = cached.verify(&e, &e.initial_proof).unwrap();
        let strip = |r: VerificationResult| VerificationResult { elapsed: Default::default(), ..r };
        assert_eq!(strip(a.clone()), strip(b));
        assert_eq!(strip(a), strip(c));
    }
}

#[test]
fn prompt_assembly_is_deterministic_for_every_format() {
    for format in [OutputFormat::Str, OutputFormat::Flat, OutputFormat::Structured] {
        for metric in [MetricDef::length(), MetricDef::readability(), MetricDef::completion()] {
            let mut r = PromptRequest::new(metric, entry("skip\nrfl"));
            r.output_format = format;
            let a = assemble_prompt(&r);
            assert!(!a.is_empty());
            assert_eq!(a, assemble_prompt(&r));
        }
    }
}
