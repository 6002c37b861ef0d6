use serde::{Deserialize, Serialize};

use crate::cos::annotate_at;
use crate::metrics::MetricDef;
use crate::proof_model::{render_at, TacticProof, TheoremEntry, DEFAULT_INDENT};
use crate::retrieval::Retrieved;
use crate::sampling::IterationRecord;
use crate::verifier::ProofState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    /// Free text; the proof is taken from a code block.
    Str,
    /// A JSON list of tactic strings.
    #[default]
    Flat,
    /// A JSON tree of tactic strings.
    Structured,
}

impl OutputFormat {
    pub fn name(self) -> &'static str {
        match self {
            OutputFormat::Str => "str",
            OutputFormat::Flat => "flat",
            OutputFormat::Structured => "structured",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "str" | "string" => Ok(OutputFormat::Str),
            "flat" => Ok(OutputFormat::Flat),
            "structured" => Ok(OutputFormat::Structured),
            other => Err(format!("unknown output format `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
}

/// Everything the generator sees for one call.
#[derive(Debug, Clone)]
pub struct PromptRequest {
    pub metric: MetricDef,
    pub entry: TheoremEntry,
    pub current_proof: TacticProof,
    /// States of `current_proof`, shown as comments when `cos_enabled`.
    pub current_states: Vec<ProofState>,
    pub cos_enabled: bool,
    pub output_format: OutputFormat,
    pub retrieved: Retrieved,
    /// Oldest first.
    pub previous: Vec<IterationRecord>,
}

impl PromptRequest {
    pub fn new(metric: MetricDef, entry: TheoremEntry) -> Self {
        let current_proof = entry.initial_proof.clone();
        PromptRequest {
            metric,
            entry,
            current_proof,
            current_states: Vec::new(),
            cos_enabled: false,
            output_format: OutputFormat::default(),
            retrieved: Retrieved::default(),
            previous: Vec::new(),
        }
    }
}

pub fn fixed_system_prompt(
    metric: &str,
    num_prev: usize,
    num_syntax_docs: usize,
    num_mathlib_docs: usize,
    num_examples: usize,
) -> String {
    let last = num_prev.saturating_sub(1);
    format!(
        "You will be given the proof context (i.e. the lean file contents/imports leading up to the theorem declaration) wrapped by <CONTEXT>...</CONTEXT>.\n\
\n\
You will be given the previous {num_prev} input/output pairs as well as their metric ({metric}) score and correctness score, as well as any error messages, for your reference to improve upon. Each of these previous results will be wrapped with <PREV I=0></PREV I=0>,...,<PREV I={last}></PREV I={last}>, with I={last} being the most recent result.\n\
\n\
Remember to use lean 4 syntax, which has significant changes from the lean 3 syntax. To assist with the syntax relating to the current theorem and current error messages, you will be given {num_syntax_docs} documents to refer to for fixing these syntax issues. Each of these documents will be wrapped with <SYNTAX_DOC>...</SYNTAX_DOC>.\n\
\n\
You will also receive {num_mathlib_docs} documents relevant to the current theorem to help with formulating your modified proof. Each of these will be wrapped with <CONTENT_DOC>...</CONTENT_DOC>\n\
\n\
You will also receive {num_examples} examples of input-output pairs of proofs that were optimized for the {metric} metric. Each of these will be wrapped with <EXAMPLE>...</EXAMPLE>\n\
\n\
You will be given the tactic states as comments for reference.\n\
The current theorem will be wrapped in <CURRENT>...</CURRENT>"
    )
}

pub fn format_instructions(format: OutputFormat) -> &'static str {
    match format {
        OutputFormat::Str => {
            "Output the complete rewritten theorem, including its statement, in a single ```lean code block. \
Do not include any other code blocks."
        }
        OutputFormat::Flat => {
            "Output only a JSON array of strings: the tactics of the rewritten proof (everything after `:= by`), \
one tactic per element, in order. Do not include the theorem statement, comments, or focusing bullets; \
a tactic that spans several lines may be one element containing newlines."
        }
        OutputFormat::Structured => {
            "Output only a JSON array describing the rewritten proof (everything after `:= by`) as a tree. \
Each element is either a tactic string, or an object with a single key, the tactic, whose value is a list of branches. \
Each branch is itself such an array and becomes a focused `·` block under the tactic, \
except when the tactic ends in `by`, where its single branch is the nested proof."
        }
    }
}

/// `{statement} := by` followed by the proof, optionally annotated.
fn render_current(request: &PromptRequest) -> String {
    let body = if request.cos_enabled && !request.current_states.is_empty() {
        let states = &request.current_states[..request.current_states.len().min(request.current_proof.count())];
        annotate_at(&request.current_proof, states, DEFAULT_INDENT).expect("states were clamped to the tactic count")
    } else {
        render_at(&request.current_proof, DEFAULT_INDENT, DEFAULT_INDENT)
    };
    format!("{} := by\n{}", request.entry.statement.trim_end(), body)
}

fn render_previous(i: usize, record: &IterationRecord, metric: &str) -> String {
    let output = match &record.output.proof {
        Some(p) => render_at(p, DEFAULT_INDENT, 0),
        None => record.output.raw_output.clone(),
    };
    let score = record
        .metric_score
        .map_or_else(|| "N/A".to_string(), |s| format!("{s}"));
    let errors = if record.error_messages.is_empty() {
        "none".to_string()
    } else {
        record
            .error_messages
            .iter()
            .map(|e| format!("- {e}"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    format!(
        "<PREV I={i}>\nInput:\n{}\n\nOutput:\n{output}\n\nMetric ({metric}) score: {score}\nCorrect: {}\nError messages:\n{errors}\n</PREV I={i}>",
        record.input_proof.trim_end(),
        record.correct,
    )
}

/// Builds the chat message sequence for one generation call.
///
/// Order: metric system prompt, fixed system instructions, output format
/// instructions, syntax docs, library docs, examples, context, previous
/// iterations, metric user prompt, current theorem.
pub fn assemble_prompt(request: &PromptRequest) -> Vec<ChatMessage> {
    let metric = &request.metric;
    let r = &request.retrieved;
    let mut out = vec![
        ChatMessage::system(metric.system_prompt.clone()),
        ChatMessage::system(fixed_system_prompt(
            &metric.name,
            request.previous.len(),
            r.syntax_docs.len(),
            r.library_docs.len(),
            r.examples.len(),
        )),
        ChatMessage::system(format_instructions(request.output_format)),
    ];
    out.extend(
        r.syntax_docs
            .iter()
            .map(|c| ChatMessage::system(format!("<SYNTAX_DOC>\n{}\n</SYNTAX_DOC>", c.text))),
    );
    out.extend(
        r.library_docs
            .iter()
            .map(|c| ChatMessage::system(format!("<CONTENT_DOC>\n{}\n</CONTENT_DOC>", c.text))),
    );
    out.extend(
        r.examples
            .iter()
            .map(|c| ChatMessage::system(format!("<EXAMPLE>\n{}\n</EXAMPLE>", c.text))),
    );
    out.push(ChatMessage::user(format!("<CONTEXT>\n{}\n</CONTEXT>", request.entry.context.trim_end())));
    out.extend(
        request
            .previous
            .iter()
            .enumerate()
            .map(|(i, rec)| ChatMessage::user(render_previous(i, rec, &metric.name))),
    );
    out.push(ChatMessage::user(metric.user_prompt.clone()));
    out.push(ChatMessage::user(format!("<CURRENT>\n{}\n</CURRENT>", render_current(request))));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proof_model::parse_tactic_proof;

    fn entry() -> TheoremEntry {
        TheoremEntry {
            name: "t".into(),
            statement: "theorem t : 1 = 1".into(),
            context: "import Mathlib".into(),
            initial_proof: parse_tactic_proof("skip\nrfl").unwrap(),
            source_path: "t.lean".into(),
        }
    }

    #[test]
    fn minimal_order() {
        let req = PromptRequest::new(MetricDef::length(), entry());
        let msgs = assemble_prompt(&req);
        assert_eq!(msgs.len(), 6);
        assert_eq!(msgs[0].content, MetricDef::length().system_prompt);
        assert!(msgs[1].content.starts_with("You will be given the proof context"));
        assert!(msgs[1].content.contains("previous 0 input/output pairs"));
        assert_eq!(msgs[2].content, format_instructions(OutputFormat::Flat));
        assert_eq!(msgs[3].content, "<CONTEXT>\nimport Mathlib\n</CONTEXT>");
        assert_eq!(msgs[4].content, MetricDef::length().user_prompt);
        assert_eq!(msgs[5].content, "<CURRENT>\ntheorem t : 1 = 1 := by\n  skip\n  rfl\n</CURRENT>");
        assert_eq!(
            msgs.iter().map(|m| m.role).collect::<Vec<_>>(),
            [Role::System, Role::System, Role::System, Role::User, Role::User, Role::User]
        );
    }

    #[test]
    fn cos_annotates_current() {
        let mut req = PromptRequest::new(MetricDef::length(), entry());
        req.cos_enabled = true;
        req.current_states = vec![ProofState::open(vec!["⊢ 1 = 1".into()]), ProofState::solved()];
        let current = assemble_prompt(&req).pop().unwrap().content;
        assert!(current.contains("  skip\n  /-\n  ⊢ 1 = 1\n  -/"));
        assert!(current.contains("Goals Solved!"));
    }

    #[test]
    fn deterministic() {
        let req = PromptRequest::new(MetricDef::readability(), entry());
        assert_eq!(assemble_prompt(&req), assemble_prompt(&req));
    }
}
