//! Selection between candidates, best-of-n and refinement samplers, and the
//! fall-back-to-input rule.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::SamplerError;
use crate::generation::{baseline_score, generate_candidate, CallMeta, GenerationResult, Generator, PromptRequest};
use crate::metrics::MetricDef;
use crate::proof_model::{render_proof, DEFAULT_INDENT};
use crate::retrieval::{RetrievalCounts, Retriever};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerConfig {
    Single,
    BestOfN {
        n: usize,
        #[serde(default = "single")]
        inner: Box<SamplerConfig>,
    },
    Refinement {
        n: usize,
        #[serde(default = "one")]
        prev_num: usize,
        #[serde(default = "yes")]
        keep_best: bool,
        #[serde(default = "single")]
        inner: Box<SamplerConfig>,
    },
}

fn single() -> Box<SamplerConfig> {
    Box::new(SamplerConfig::Single)
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

pub const MAX_SAMPLER_DEPTH: usize = 2;

impl Default for SamplerConfig {
    /// Five refinement steps forwarding one previous iteration and keeping
    /// the best, each step a best-of-3.
    fn default() -> Self {
        SamplerConfig::refinement(5, 1, true, SamplerConfig::best_of_n(3, SamplerConfig::Single))
    }
}

impl SamplerConfig {
    pub fn best_of_n(n: usize, inner: SamplerConfig) -> Self {
        SamplerConfig::BestOfN { n, inner: Box::new(inner) }
    }

    pub fn refinement(n: usize, prev_num: usize, keep_best: bool, inner: SamplerConfig) -> Self {
        SamplerConfig::Refinement {
            n,
            prev_num,
            keep_best,
            inner: Box::new(inner),
        }
    }

    /// Nesting depth, counting only best-of-n and refinement levels.
    pub fn depth(&self) -> usize {
        match self {
            SamplerConfig::Single => 0,
            SamplerConfig::BestOfN { inner, .. } | SamplerConfig::Refinement { inner, .. } => 1 + inner.depth(),
        }
    }

    /// Generator calls one run issues.
    pub fn calls(&self) -> usize {
        match self {
            SamplerConfig::Single => 1,
            SamplerConfig::BestOfN { n, inner } | SamplerConfig::Refinement { n, inner, .. } => n * inner.calls(),
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.depth() > MAX_SAMPLER_DEPTH {
            return Err(SamplerError::InvalidConfig(format!(
                "sampler nesting depth {} exceeds {MAX_SAMPLER_DEPTH}",
                self.depth()
            )));
        }
        let mut node = self;
        loop {
            match node {
                SamplerConfig::Single => return Ok(()),
                SamplerConfig::BestOfN { n, inner } | SamplerConfig::Refinement { n, inner, .. } => {
                    if *n == 0 {
                        return Err(SamplerError::InvalidConfig("n must be at least 1".into()));
                    }
                    node = inner;
                }
            }
        }
    }

    /// Short form such as `refinement(5, best_of_n(3))`.
    pub fn describe(&self) -> String {
        match self {
            SamplerConfig::Single => "single".into(),
            SamplerConfig::BestOfN { n, inner } => match **inner {
                SamplerConfig::Single => format!("best_of_n({n})"),
                _ => format!("best_of_n({n}, {})", inner.describe()),
            },
            SamplerConfig::Refinement {
                n,
                prev_num,
                keep_best,
                inner,
            } => {
                let inner = match **inner {
                    SamplerConfig::Single => String::new(),
                    _ => format!(", {}", inner.describe()),
                };
                format!("refinement({n}, prev={prev_num}, keep_best={keep_best}{inner})")
            }
        }
    }
}

/// One refinement step as forwarded to later steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub index: usize,
    pub input_proof: String,
    pub output: GenerationResult,
    pub metric_score: Option<f64>,
    pub correct: bool,
    pub error_messages: Vec<String>,
}

impl IterationRecord {
    pub fn new(index: usize, input_proof: String, output: GenerationResult) -> Self {
        IterationRecord {
            index,
            input_proof,
            metric_score: output.metric_score,
            correct: output.correct,
            error_messages: output.error_messages.clone(),
            output,
        }
    }
}

/// True when `second` beats `first`: correctness first, then improvement,
/// then fewer errors. Exact ties keep `first`.
pub fn prefers_second(first: &GenerationResult, second: &GenerationResult) -> bool {
    match (first.correct, second.correct) {
        (true, true) => second.improvement > first.improvement,
        (false, true) => true,
        (true, false) => false,
        (false, false) => second.error_count < first.error_count,
    }
}

/// The selection function. Improvement values are already oriented so that
/// higher is better for the metric's direction.
pub fn compare_candidates<'a>(
    _metric: &MetricDef,
    y: &'a GenerationResult,
    y_prime: &'a GenerationResult,
) -> &'a GenerationResult {
    if prefers_second(y, y_prime) {
        y_prime
    } else {
        y
    }
}

/// Left fold of the selection function; `None` for an empty batch.
pub fn select_best(candidates: &[GenerationResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        match best {
            Some(b) if !prefers_second(&candidates[b], c) => {}
            _ => best = Some(i),
        }
    }
    best
}

/// Shared state for one sampler run.
pub struct SamplerContext {
    pub generator: Generator,
    pub retrieval: Option<(Arc<Retriever>, RetrievalCounts)>,
    /// Run best-of-n branches on separate threads.
    pub parallel: bool,
    pub seed: u64,
    /// Label passed to the backend, normally the theorem name.
    pub label: String,
    baseline: f64,
    calls: AtomicUsize,
}

impl SamplerContext {
    pub fn new(generator: Generator) -> Self {
        SamplerContext {
            generator,
            retrieval: None,
            parallel: true,
            seed: 0,
            label: String::new(),
            baseline: 0.0,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_retrieval(mut self, retriever: Arc<Retriever>, counts: RetrievalCounts) -> Self {
        self.retrieval = Some((retriever, counts));
        self
    }

    pub fn parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Generator calls issued so far, retries excluded.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn meta(&self, ordinal: usize) -> CallMeta {
        let mut h = self.seed ^ 0x51_7c_c1_b7_27_22_0a_95;
        for b in self.label.bytes().chain((ordinal as u64).to_le_bytes()) {
            h = (h ^ u64::from(b)).wrapping_mul(0x100000001b3);
        }
        CallMeta {
            label: self.label.clone(),
            ordinal,
            seed: h,
            attempt: 0,
        }
    }

    fn single(&self, request: &PromptRequest, ordinal: usize) -> Result<GenerationResult, SamplerError> {
        let owned;
        let request = match &self.retrieval {
            Some((retriever, counts)) => {
                let errors = request
                    .previous
                    .last()
                    .map(|r| r.error_messages.clone())
                    .unwrap_or_default();
                let mut r = request.clone();
                r.retrieved =
                    retriever.retrieve_for_request(&r.entry, &r.current_proof, &errors, &r.metric, *counts)?;
                owned = r;
                &owned
            }
            None => request,
        };
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(generate_candidate(&self.generator, request, self.baseline, &self.meta(ordinal))?)
    }

    fn run_node(&self, config: &SamplerConfig, request: &PromptRequest, base: usize) -> Result<GenerationResult, SamplerError> {
        match config {
            SamplerConfig::Single => self.single(request, base),
            SamplerConfig::BestOfN { n, inner } => self.best_of_n(inner, *n, request, base),
            SamplerConfig::Refinement {
                n,
                prev_num,
                keep_best,
                inner,
            } => self.refinement(inner, *n, *prev_num, *keep_best, request, base),
        }
    }

    /// Runs `inner` `n` times and folds the selection function over the
    /// results in branch order. Fails only when every branch failed.
    pub fn best_of_n(
        &self,
        inner: &SamplerConfig,
        n: usize,
        request: &PromptRequest,
        base: usize,
    ) -> Result<GenerationResult, SamplerError> {
        let stride = inner.calls();
        let outcomes: Vec<Result<GenerationResult, SamplerError>> = if self.parallel && n > 1 {
            std::thread::scope(|s| {
                let handles: Vec<_> = (0..n)
                    .map(|i| s.spawn(move || self.run_node(inner, request, base + i * stride)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("best-of-n branch panicked"))
                    .collect()
            })
        } else {
            (0..n).map(|i| self.run_node(inner, request, base + i * stride)).collect()
        };
        fold_outcomes(outcomes)
    }

    /// Sequential refinement. Step `i` sees the last `prev_num` records and
    /// starts from the latest output, or from the best so far when
    /// `keep_best` is set.
    pub fn refinement(
        &self,
        inner: &SamplerConfig,
        n: usize,
        prev_num: usize,
        keep_best: bool,
        request: &PromptRequest,
        base: usize,
    ) -> Result<GenerationResult, SamplerError> {
        let stride = inner.calls();
        let mut records: Vec<IterationRecord> = Vec::new();
        let mut best: Option<GenerationResult> = None;
        let mut last: Option<GenerationResult> = None;
        let mut last_err = None;
        let mut input = request.current_proof.clone();
        for i in 0..n {
            let mut step = request.clone();
            step.current_proof = input.clone();
            step.current_states.clear();
            step.previous = records[records.len().saturating_sub(prev_num)..].to_vec();
            let result = match self.run_node(inner, &step, base + i * stride) {
                Ok(r) => r,
                Err(e @ SamplerError::Generation(_)) => {
                    let failed = GenerationResult {
                        raw_output: String::new(),
                        proof: None,
                        verification: None,
                        metric_score: None,
                        correct: false,
                        error_count: 1,
                        error_messages: vec![e.to_string()],
                        improvement: 0.0,
                    };
                    last_err = Some(e);
                    records.push(IterationRecord::new(i, render_proof(&input, DEFAULT_INDENT), failed));
                    continue;
                }
                Err(e) => return Err(e),
            };
            records.push(IterationRecord::new(i, render_proof(&input, DEFAULT_INDENT), result.clone()));
            best = match best {
                Some(b) if !prefers_second(&b, &result) => Some(b),
                _ => Some(result.clone()),
            };
            let next = if keep_best { best.as_ref() } else { Some(&result) };
            if let Some(p) = next.and_then(|r| r.proof.as_ref()) {
                input = p.clone();
            }
            last = Some(result);
        }
        let chosen = if keep_best { best } else { last };
        match (chosen, last_err) {
            (Some(r), _) => Ok(r),
            (None, Some(e)) => Err(e),
            (None, None) => Err(SamplerError::InvalidConfig("refinement with n = 0".into())),
        }
    }
}

fn fold_outcomes(outcomes: Vec<Result<GenerationResult, SamplerError>>) -> Result<GenerationResult, SamplerError> {
    let mut ok = Vec::new();
    let mut last_err = None;
    for o in outcomes {
        match o {
            Ok(r) => ok.push(r),
            Err(e @ SamplerError::Generation(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    match select_best(&ok) {
        Some(i) => Ok(ok.swap_remove(i)),
        None => Err(last_err.unwrap_or_else(|| SamplerError::InvalidConfig("best_of_n with n = 0".into()))),
    }
}

/// Result of [`run_sampler`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerOutcome {
    pub result: GenerationResult,
    /// True when no correct candidate was found and the input proof was
    /// returned instead.
    pub fell_back: bool,
    pub baseline_score: f64,
    /// Generator calls issued, retries excluded.
    pub generator_calls: usize,
}

/// Runs `config` on `request` and applies the fallback rule: if the final
/// candidate is not correct, the theorem's initial proof is returned with
/// zero improvement.
///
/// Generation failures are absorbed by the fallback. Invalid configs,
/// retrieval setup errors and a failing baseline check are reported.
pub fn run_sampler(
    config: &SamplerConfig,
    ctx: &mut SamplerContext,
    request: &PromptRequest,
) -> Result<SamplerOutcome, SamplerError> {
    config.validate()?;
    let verifier = ctx.generator.verifier.clone();
    let baseline = baseline_score(&request.metric, &request.entry, &verifier)?;
    ctx.baseline = baseline;
    ctx.calls.store(0, Ordering::SeqCst);
    if ctx.label.is_empty() {
        ctx.label = request.entry.name.clone();
    }
    let outcome = match ctx.run_node(config, request, 0) {
        Ok(r) => Some(r),
        Err(SamplerError::Generation(e)) => {
            log::warn!("{}: generation failed: {e}", request.entry.name);
            None
        }
        Err(e) => return Err(e),
    };
    let generator_calls = ctx.calls();
    match outcome {
        Some(r) if r.correct => Ok(SamplerOutcome {
            result: r,
            fell_back: false,
            baseline_score: baseline,
            generator_calls,
        }),
        _ => {
            let entry = &request.entry;
            let v = verifier.verify(entry, &entry.initial_proof)?;
            let mut r = GenerationResult::scored(
                String::new(),
                entry.initial_proof.clone(),
                v,
                &request.metric,
                baseline,
            );
            r.improvement = 0.0;
            Ok(SamplerOutcome {
                result: r,
                fell_back: true,
                baseline_score: baseline,
                generator_calls,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::{Backoff, BackoffConfig, OutputFormat, ScriptStep, ScriptedGenerator};
    use crate::proof_model::{parse_tactic_proof, TheoremEntry};
    use crate::verifier::{MockBackend, MockFixture, Verifier, VerifierMessage};

    fn cand(correct: bool, improvement: f64, errors: usize) -> GenerationResult {
        GenerationResult {
            raw_output: String::new(),
            proof: None,
            verification: None,
            metric_score: None,
            correct,
            error_count: errors,
            error_messages: vec![],
            improvement,
        }
    }

    #[test]
    fn selection_cases() {
        let m = MetricDef::length();
        let (a, b) = (cand(true, 50.0, 0), cand(true, 30.0, 0));
        assert!(std::ptr::eq(compare_candidates(&m, &a, &b), &a));
        let (a, b) = (cand(true, 0.0, 0), cand(false, 0.0, 2));
        assert!(std::ptr::eq(compare_candidates(&m, &a, &b), &a));
        let (a, b) = (cand(false, 0.0, 3), cand(false, 0.0, 1));
        assert!(std::ptr::eq(compare_candidates(&m, &a, &b), &b));
        let (a, b) = (cand(true, 10.0, 0), cand(true, 10.0, 0));
        assert!(std::ptr::eq(compare_candidates(&m, &a, &b), &a));
        assert_eq!(select_best(&[cand(false, 0.0, 3), cand(false, 0.0, 1), cand(false, 0.0, 2)]), Some(1));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn config_budget_and_validation() {
        let c = SamplerConfig::default();
        assert_eq!(c.calls(), 15);
        assert_eq!(c.depth(), 2);
        c.validate().unwrap();
        let deep = SamplerConfig::best_of_n(2, SamplerConfig::best_of_n(2, SamplerConfig::best_of_n(2, SamplerConfig::Single)));
        assert!(deep.validate().is_err());
        assert!(SamplerConfig::best_of_n(0, SamplerConfig::Single).validate().is_err());
        let toml_text = "kind = \"refinement\"\nn = 5\n[inner]\nkind = \"best_of_n\"\nn = 3\n";
        let parsed: SamplerConfig = toml::from_str(toml_text).unwrap();
        assert_eq!(parsed, c);
        assert_eq!(c.describe(), "refinement(5, prev=1, keep_best=true, best_of_n(3))");
    }

    const STMT: &str = "theorem t : 1 = 1";

    fn context(replies: Vec<&str>) -> (SamplerContext, PromptRequest) {
        let entry = TheoremEntry {
            name: "t".into(),
            statement: STMT.into(),
            context: String::new(),
            initial_proof: parse_tactic_proof("skip\nskip\nskip\nskip\nrfl").unwrap(),
            source_path: "t.lean".into(),
        };
        let mock = MockBackend::from_fixtures(vec![
            MockFixture::correct(STMT, "skip\nskip\nskip\nskip\nrfl", vec![]),
            MockFixture::correct(STMT, "skip\nskip\nrfl", vec![]),
            MockFixture::correct(STMT, "skip\nrfl", vec![]),
            MockFixture::correct(STMT, "rfl", vec![]),
            MockFixture::failing(STMT, "simp", vec![VerifierMessage::new("simp made no progress", 1, 0)]),
        ]);
        let generator = Generator::new(
            Arc::new(ScriptedGenerator::new(replies.into_iter().map(|r| ScriptStep::Text(r.into())).collect())),
            Arc::new(Verifier::new(Arc::new(mock))),
            Backoff::new(BackoffConfig::default(), 0).with_sleeper(|_| {}),
        );
        let mut req = PromptRequest::new(MetricDef::length(), entry);
        req.output_format = OutputFormat::Flat;
        (SamplerContext::new(generator), req)
    }

    #[test]
    fn best_of_three_picks_shortest_correct() {
        let (mut ctx, req) = context(vec![r#"["simp"]"#, r#"["rfl"]"#, r#"["skip","skip","rfl"]"#]);
        let out = run_sampler(&SamplerConfig::best_of_n(3, SamplerConfig::Single), &mut ctx, &req).unwrap();
        assert!(!out.fell_back);
        assert_eq!(out.result.metric_score, Some(1.0));
        assert_eq!(out.result.improvement, 80.0);
        assert_eq!(out.generator_calls, 3);
    }

    #[test]
    fn refinement_keep_best() {
        let (mut ctx, req) = context(vec![r#"["skip","rfl"]"#, r#"["simp"]"#, r#"["skip","skip","rfl"]"#]);
        let cfg = SamplerConfig::refinement(3, 1, true, SamplerConfig::Single);
        let out = run_sampler(&cfg, &mut ctx, &req).unwrap();
        assert_eq!(out.result.metric_score, Some(2.0));
        let (mut ctx, req) = context(vec![r#"["skip","rfl"]"#, r#"["simp"]"#, r#"["skip","skip","rfl"]"#]);
        let cfg = SamplerConfig::refinement(3, 1, false, SamplerConfig::Single);
        let out = run_sampler(&cfg, &mut ctx, &req).unwrap();
        assert_eq!(out.result.metric_score, Some(3.0));
    }

    #[test]
    fn fallback_to_input() {
        let (mut ctx, req) = context(vec![r#"["simp"]"#]);
        let cfg = SamplerConfig::best_of_n(2, SamplerConfig::Single);
        let out = run_sampler(&cfg, &mut ctx, &req).unwrap();
        assert!(out.fell_back);
        assert!(out.result.correct);
        assert_eq!(out.result.improvement, 0.0);
        assert_eq!(out.result.metric_score, Some(5.0));
        assert_eq!(out.generator_calls, 2);
    }
}
