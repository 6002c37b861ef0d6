//! Proof metrics, their improvement formulas, and the prompts that describe
//! them to the generator.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::MetricError;
use crate::proof_model::{count_tactics, TacticProof, TacticStep};
use crate::verifier::VerificationResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Minimize,
    Maximize,
}

/// What a metric measures on a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    Length,
    Readability,
    Completion,
}

/// How a score change turns into an improvement value (higher is better).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImprovementRule {
    /// Relative change in percent of the baseline score.
    PercentChange,
    /// Absolute score difference.
    Difference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricDef {
    pub name: String,
    pub scorer: Scorer,
    pub direction: Direction,
    pub improvement: ImprovementRule,
    pub system_prompt: String,
    pub user_prompt: String,
    /// Name of the example store for this metric; defaults to the metric name.
    #[serde(default)]
    pub example_store: Option<String>,
}

impl MetricDef {
    pub fn length() -> Self {
        MetricDef {
            name: "length".into(),
            scorer: Scorer::Length,
            direction: Direction::Minimize,
            improvement: ImprovementRule::PercentChange,
            system_prompt: LENGTH_SYSTEM.into(),
            user_prompt: LENGTH_USER.into(),
            example_store: None,
        }
    }

    pub fn readability() -> Self {
        MetricDef {
            name: "readability".into(),
            scorer: Scorer::Readability,
            direction: Direction::Maximize,
            improvement: ImprovementRule::Difference,
            system_prompt: READABILITY_SYSTEM.into(),
            user_prompt: READABILITY_USER.into(),
            example_store: None,
        }
    }

    pub fn completion() -> Self {
        MetricDef {
            name: "completion".into(),
            scorer: Scorer::Completion,
            direction: Direction::Minimize,
            improvement: ImprovementRule::Difference,
            system_prompt: COMPLETION_SYSTEM.into(),
            user_prompt: COMPLETION_USER.into(),
            example_store: None,
        }
    }

    pub fn example_store_id(&self) -> &str {
        self.example_store.as_deref().unwrap_or(&self.name)
    }

    /// Raw metric score of a candidate.
    pub fn score(&self, proof: &TacticProof, verification: &VerificationResult) -> f64 {
        match self.scorer {
            Scorer::Length => score_length(proof),
            Scorer::Readability => score_readability(proof),
            Scorer::Completion => score_completion(verification),
        }
    }

    pub fn improvement(&self, baseline: f64, score: f64, correct: bool) -> Result<f64, MetricError> {
        improvement(self, baseline, score, correct)
    }

    pub fn report(&self, baseline: f64, score: f64, correct: bool) -> Result<ScoreReport, MetricError> {
        let improvement = self.improvement(baseline, score, correct)?;
        Ok(ScoreReport {
            raw_score: score,
            improvement,
            correct,
            nonzero_improvement: correct && improvement != 0.0,
        })
    }

    fn validate(&self) -> Result<(), MetricError> {
        if self.name.trim().is_empty() {
            return Err(MetricError::Invalid("metric name is empty".into()));
        }
        if self.system_prompt.trim().is_empty() || self.user_prompt.trim().is_empty() {
            return Err(MetricError::Invalid(format!("metric `{}` has an empty prompt", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub raw_score: f64,
    pub improvement: f64,
    pub correct: bool,
    pub nonzero_improvement: bool,
}

/// Number of tactic invocations.
pub fn score_length(proof: &TacticProof) -> f64 {
    count_tactics(proof) as f64
}

/// Percentage of tactic invocations that are explicitly typed `have`s.
pub fn score_readability(proof: &TacticProof) -> f64 {
    let total = count_tactics(proof);
    if total == 0 {
        return 0.0;
    }
    let typed = proof.iter().filter(|s| is_typed_have(s)).count();
    100.0 * typed as f64 / total as f64
}

/// Error count of the verification; zero means complete and correct.
pub fn score_completion(verification: &VerificationResult) -> f64 {
    verification.errors.len() as f64
}

/// `have <ident> : <type> := ...`. Anonymous and untyped `have`s do not count.
pub fn is_typed_have(step: &TacticStep) -> bool {
    let Some(rest) = step.text.strip_prefix("have") else {
        return false;
    };
    if !rest.starts_with(char::is_whitespace) {
        return false;
    }
    let rest = rest.trim_start();
    let ident_len = rest
        .find(|c: char| c.is_whitespace() || c == ':')
        .unwrap_or(rest.len());
    let ident = &rest[..ident_len];
    let valid_ident = ident
        .chars()
        .next()
        .is_some_and(|c| c.is_alphabetic() || c == '_');
    if !valid_ident {
        return false;
    }
    let after = rest[ident_len..].trim_start();
    let Some(ty) = after.strip_prefix(':') else {
        return false;
    };
    if ty.starts_with('=') {
        return false;
    }
    match ty.find(":=") {
        Some(at) => !ty[..at].trim().is_empty(),
        None => false,
    }
}

/// Improvement of `score` over `baseline`; zero for incorrect candidates.
pub fn improvement(metric: &MetricDef, baseline: f64, score: f64, correct: bool) -> Result<f64, MetricError> {
    if metric.improvement == ImprovementRule::PercentChange && baseline == 0.0 {
        return Err(MetricError::DivisionByZero);
    }
    if !correct {
        return Ok(0.0);
    }
    let delta = match metric.direction {
        Direction::Minimize => baseline - score,
        Direction::Maximize => score - baseline,
    };
    Ok(match metric.improvement {
        ImprovementRule::PercentChange => delta / baseline * 100.0,
        ImprovementRule::Difference => delta,
    })
}

/// Named metric definitions. Built-ins can be replaced and extended from a
/// TOML file of `[[metric]]` tables.
#[derive(Debug, Clone)]
pub struct MetricRegistry {
    metrics: BTreeMap<String, MetricDef>,
}

#[derive(Deserialize)]
struct RegistryFile {
    #[serde(default)]
    metric: Vec<MetricDef>,
}

impl Default for MetricRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl MetricRegistry {
    pub fn builtin() -> Self {
        let mut metrics = BTreeMap::new();
        for m in [MetricDef::length(), MetricDef::readability(), MetricDef::completion()] {
            metrics.insert(m.name.clone(), m);
        }
        MetricRegistry { metrics }
    }

    pub fn get(&self, name: &str) -> Result<&MetricDef, MetricError> {
        self.metrics
            .get(name)
            .ok_or_else(|| MetricError::UnknownMetric(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.metrics.keys().map(String::as_str)
    }

    /// Adds or replaces a definition.
    pub fn insert(&mut self, metric: MetricDef) -> Result<(), MetricError> {
        metric.validate()?;
        self.metrics.insert(metric.name.clone(), metric);
        Ok(())
    }

    /// Merges definitions from TOML text. Names must be unique within the text.
    pub fn extend_from_toml(&mut self, text: &str) -> Result<(), MetricError> {
        let file: RegistryFile = toml::from_str(text)?;
        let mut seen = std::collections::HashSet::new();
        for m in &file.metric {
            if !seen.insert(m.name.clone()) {
                return Err(MetricError::Invalid(format!("metric `{}` defined twice", m.name)));
            }
        }
        for m in file.metric {
            self.insert(m)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MetricError> {
        let text = std::fs::read_to_string(path).map_err(|source| MetricError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut reg = Self::builtin();
        reg.extend_from_toml(&text)?;
        Ok(reg)
    }
}

const LENGTH_SYSTEM: &str = "You are an AI assistant who shortens Lean 4 proofs while ensuring their correctness. You will aim to reduce the number of lines of the tactic proof while ensuring that it properly compiles in Lean 4.";
const LENGTH_USER: &str = "Shorten the current theorem (wrapped in <CURRENT>...</CURRENT>) to be as short in length—measured in the number of lines of the proof—as possible, while also ensuring that the output is still syntactically correct.";
const READABILITY_SYSTEM: &str = "You are an AI assistant who rewrites Lean 4 proofs to be more readable while ensuring their correctness. We measure readability by considering the ratio of the number of explicitly typed have tactics against the total number of tactics in the proof, as this is proportional to whether a proof is declarative in style, and thus, readable.";
const READABILITY_USER: &str = "Rewrite the current theorem (wrapped in <CURRENT>...</CURRENT>) so it is more readable and declarative and modular.";
const COMPLETION_SYSTEM: &str = "You are an AI assistant who automatically solves Lean 4 proofs (as in, generates the tactic proof) and ensures its correctness. You will receive a Lean 4 proof you must modify to eliminate any errors so that it compiles correctly and eliminate any \"sorry\"s with full proofs.";
const COMPLETION_USER: &str = "Rewrite the current theorem (wrapped in <CURRENT>...</CURRENT>) so it is a formal, complete, and correct Lean 4 proof by filling in its tactic proof.";
