//! Extraction of a tactic block from raw model output.

use serde_json::Value;

use super::prompt::OutputFormat;
use crate::error::GenerationError;
use crate::proof_model::{parse_tactic_proof, split_tactic_block};

/// Removes the common leading indentation and surrounding blank lines.
pub fn dedent(text: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    let start = lines.iter().position(|l| !l.trim().is_empty()).unwrap_or(lines.len());
    let end = lines.iter().rposition(|l| !l.trim().is_empty()).map_or(start, |i| i + 1);
    let body = &lines[start..end];
    let indent = body
        .iter()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.len() - l.trim_start().len())
        .min()
        .unwrap_or(0);
    body.iter()
        .map(|l| if l.len() >= indent { l[indent..].trim_end() } else { l.trim() })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Contents of the first fenced code block, if any.
fn first_fence(raw: &str) -> Option<&str> {
    let open = raw.find("```")?;
    let after = &raw[open + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    let close = body.find("```").unwrap_or(body.len());
    Some(&body[..close])
}

/// Tactic body of a code block: the part after `:= by` when the block holds
/// a whole declaration.
fn tactic_body(code: &str) -> String {
    match split_tactic_block(code) {
        Some((_, body)) => dedent(body),
        None => dedent(code),
    }
}

const TACTIC_HEADS: &[&str] = &[
    "abel", "absurd", "aesop", "all_goals", "any_goals", "apply", "apply_fun", "assumption", "bound", "by_cases",
    "by_contra", "calc", "case", "cases", "change", "choose", "clear", "congr", "constructor", "contradiction",
    "conv", "convert", "decide", "dsimp", "exact", "exact_mod_cast", "exacts", "exfalso", "exists", "ext",
    "field_simp", "filter_upwards", "fin_cases", "first", "focus", "funext", "gcongr", "generalize", "have",
    "induction", "infer_instance", "injection", "interval_cases", "intro", "intros", "iterate", "left", "let",
    "lift", "linarith", "nlinarith", "native_decide", "next", "nth_rewrite", "nth_rw", "norm_cast", "norm_num",
    "obtain", "omega", "on_goal", "polyrith", "positivity", "push_cast", "push_neg", "qify", "rcases", "refine",
    "refine'", "rename_i", "repeat", "revert", "rfl", "right", "rintro", "ring", "ring_nf", "rw", "rwa",
    "rw_mod_cast", "set", "show", "simp", "simp_all", "simp_rw", "simpa", "skip", "sorry", "specialize",
    "split", "split_ifs", "subst", "suffices", "symm", "tauto", "trans", "trivial", "try", "unfold", "use",
    "wlog", "zify",
];

fn is_tactic_line(line: &str) -> bool {
    let t = line.trim_start();
    let t = t
        .strip_prefix('·')
        .or_else(|| t.strip_prefix(". "))
        .map_or(t, str::trim_start);
    if t.starts_with("--") || t.starts_with("/-") || t.starts_with('|') || t.starts_with("<;>") {
        return true;
    }
    let head: String = t
        .chars()
        .take_while(|c| c.is_alphanumeric() || matches!(c, '_' | '\'' | '?' | '!'))
        .collect();
    let head = head.trim_end_matches(['?', '!']);
    TACTIC_HEADS.contains(&head)
}

/// Longest run of lines that looks like and parses as a tactic block.
/// Lines indented deeper than the run's first line count as continuations.
fn longest_tactic_run(text: &str) -> Option<String> {
    let lines: Vec<&str> = text.lines().collect();
    let mut best: Option<(usize, String)> = None;
    let mut i = 0;
    while i < lines.len() {
        if !is_tactic_line(lines[i]) {
            i += 1;
            continue;
        }
        let base = lines[i].len() - lines[i].trim_start().len();
        let mut j = i + 1;
        while j < lines.len() {
            let l = lines[j];
            let indent = l.len() - l.trim_start().len();
            if l.trim().is_empty() || is_tactic_line(l) || indent > base {
                j += 1;
            } else {
                break;
            }
        }
        let block = dedent(&lines[i..j].join("\n"));
        let size = block.lines().filter(|l| !l.trim().is_empty()).count();
        if parse_tactic_proof(&block).is_ok() && best.as_ref().is_none_or(|(n, _)| size > *n) {
            best = Some((size, block));
        }
        i = j;
    }
    best.map(|(_, b)| b)
}

/// Slice holding the JSON payload: a fenced block if present, else the span
/// from the first `[` or `{` to the last matching closer.
fn json_payload(raw: &str) -> &str {
    if let Some(f) = first_fence(raw) {
        return f.trim();
    }
    let open = raw.find(['[', '{']);
    let close = raw.rfind([']', '}']);
    match (open, close) {
        (Some(a), Some(b)) if b > a => &raw[a..=b],
        _ => raw.trim(),
    }
}

fn decode(raw: &str) -> Result<Value, GenerationError> {
    serde_json::from_str(json_payload(raw)).map_err(|e| GenerationError::DecodeError(e.to_string()))
}

/// Accepts a bare array or an object with exactly one array-valued field.
fn top_list(value: Value) -> Result<Vec<Value>, GenerationError> {
    match value {
        Value::Array(a) => Ok(a),
        Value::Object(map) => {
            let mut lists = map.into_iter().filter(|(_, v)| v.is_array());
            match (lists.next(), lists.next()) {
                (Some((_, Value::Array(a))), None) => Ok(a),
                _ => Err(GenerationError::DecodeError("expected a JSON array of tactics".into())),
            }
        }
        _ => Err(GenerationError::DecodeError("expected a JSON array of tactics".into())),
    }
}

fn push_text(out: &mut Vec<String>, text: &str, first_prefix: &str, rest_indent: usize) {
    let pad = " ".repeat(rest_indent);
    for (k, line) in dedent(text).lines().enumerate() {
        if k == 0 {
            out.push(format!("{first_prefix}{line}"));
        } else {
            out.push(format!("{pad}{line}"));
        }
    }
}

fn flat_lines(items: Vec<Value>) -> Result<Vec<String>, GenerationError> {
    // One line per item: relative indentation carries the structure.
    let single: Option<Vec<&str>> = items.iter().map(|v| v.as_str().filter(|s| !s.contains('\n'))).collect();
    if let Some(lines) = single {
        let kept: Vec<&str> = lines.into_iter().filter(|l| !l.trim().is_empty()).collect();
        return Ok(dedent(&kept.join("\n")).lines().map(str::to_string).collect());
    }
    let mut out = Vec::new();
    for item in items {
        match item {
            Value::String(s) if !s.trim().is_empty() => push_text(&mut out, &s, "", 2),
            Value::String(_) => {}
            other => return Err(GenerationError::DecodeError(format!("expected a tactic string, found {other}"))),
        }
    }
    Ok(out)
}

fn branches_of(value: Value) -> Result<Vec<Vec<Value>>, GenerationError> {
    let Value::Array(items) = value else {
        return Err(GenerationError::DecodeError("tree node children must be a list".into()));
    };
    if items.iter().all(Value::is_array) {
        items
            .into_iter()
            .map(|b| match b {
                Value::Array(a) => Ok(a),
                _ => unreachable!(),
            })
            .collect()
    } else {
        Ok(vec![items])
    }
}

/// Renders tree nodes at column `col`; the first line of the block gets
/// `first_prefix` in place of its indentation.
fn tree_lines(nodes: Vec<Value>, col: usize, first_prefix: Option<String>, out: &mut Vec<String>) -> Result<(), GenerationError> {
    let mut first_prefix = first_prefix;
    let pad = " ".repeat(col);
    for node in nodes {
        let prefix = first_prefix.take().unwrap_or_else(|| pad.clone());
        match node {
            Value::String(s) if s.trim().is_empty() => {}
            Value::String(s) => push_text(out, &s, &prefix, col + 2),
            Value::Object(map) => {
                if map.len() != 1 {
                    return Err(GenerationError::DecodeError("tree node must have exactly one key".into()));
                }
                let (tactic, children) = map.into_iter().next().expect("one key");
                push_text(out, &tactic, &prefix, col + 2);
                let branches = branches_of(children)?;
                let opens_block = tactic.trim_end().ends_with("by") || tactic.trim_end().ends_with("=>");
                if opens_block {
                    if branches.len() > 1 {
                        return Err(GenerationError::DecodeError(format!(
                            "`{tactic}` opens one nested block, found {} branches",
                            branches.len()
                        )));
                    }
                    for b in branches {
                        tree_lines(b, col + 2, None, out)?;
                    }
                } else {
                    for b in branches {
                        if b.is_empty() {
                            continue;
                        }
                        tree_lines(b, col + 2, Some(format!("{pad}· ")), out)?;
                    }
                }
            }
            other => return Err(GenerationError::DecodeError(format!("unexpected tree node {other}"))),
        }
    }
    Ok(())
}

/// Extracts proof source (a tactic block) from raw model output.
pub fn parse_model_output(raw: &str, format: OutputFormat) -> Result<String, GenerationError> {
    let text = match format {
        OutputFormat::Str => match first_fence(raw) {
            Some(code) => tactic_body(code),
            None => match split_tactic_block(raw) {
                Some((_, body)) => longest_tactic_run(body).unwrap_or_default(),
                None => longest_tactic_run(raw).unwrap_or_default(),
            },
        },
        OutputFormat::Flat => flat_lines(top_list(decode(raw)?)?)?.join("\n"),
        OutputFormat::Structured => {
            let value = decode(raw)?;
            let nodes = match value {
                // A lone object whose value is a list of branches is a single
                // node; any other object is a wrapper around the node list.
                Value::Object(ref m) if m.len() == 1 && m.values().all(|v| v.as_array().is_some_and(|a| !a.is_empty() && a.iter().all(Value::is_array))) => {
                    vec![value]
                }
                other => top_list(other)?,
            };
            let mut lines = Vec::new();
            tree_lines(nodes, 0, None, &mut lines)?;
            lines.join("\n")
        }
    };
    if text.trim().is_empty() {
        return Err(GenerationError::NoProofFound);
    }
    Ok(text)
}
