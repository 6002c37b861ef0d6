//! Lexical model of Lean tactic scripts.
//!
//! A tactic block is parsed into a tree of [`TacticStep`]s. The parser is
//! delimiter- and indentation-aware but treats everything inside a tactic as
//! opaque text; it only needs to find step boundaries.
//!
//! Counting rule, used by every metric:
//!
//! * each `;`-separated item on a line is one step (`<;>` does not split);
//! * each tactic inside a focus bullet (`·` or `.`) is one step, the bullet
//!   itself is not;
//! * each tactic inside a nested block opened by a trailing `by` (or a
//!   trailing `=>` after `case`/`next`/`conv`/`|`) is one step, on top of the
//!   step that opened it;
//! * comments are never steps.

use serde::{Deserialize, Serialize};

use crate::error::ParseError;

/// Byte range into the source a step was parsed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

/// How a step is placed relative to its previous sibling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Layout {
    /// Starts its own line.
    #[default]
    Line,
    /// Continues the previous sibling's line after `; `.
    Chained,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TacticStep {
    /// Verbatim tactic text. Continuation lines are stored left-trimmed.
    pub text: String,
    /// Nested-block tactics first (`nested_len` of them), then for a bullet
    /// head the remaining tactics of the focused block.
    pub children: Vec<TacticStep>,
    pub span: Span,
    /// Standalone comments preceding this step, verbatim.
    pub comments: Vec<String>,
    pub layout: Layout,
    /// Focus bullet that opens this step's line, if any.
    pub bullet: Option<char>,
    /// Further bullets on the same line (`· · t`), outermost first, each with
    /// the number of leading focused children that sit at its depth or deeper.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inner_bullets: Vec<(char, usize)>,
    pub nested_len: usize,
}

impl TacticStep {
    pub fn new(text: impl Into<String>) -> Self {
        TacticStep {
            text: text.into(),
            children: Vec::new(),
            span: Span::default(),
            comments: Vec::new(),
            layout: Layout::Line,
            bullet: None,
            inner_bullets: Vec::new(),
            nested_len: 0,
        }
    }

    /// Number of steps in this subtree, the node included.
    pub fn count(&self) -> usize {
        1 + self.children.iter().map(TacticStep::count).sum::<usize>()
    }

    pub fn nested(&self) -> &[TacticStep] {
        &self.children[..self.nested_len]
    }

    pub fn focused(&self) -> &[TacticStep] {
        &self.children[self.nested_len..]
    }

    /// First word of the tactic text.
    pub fn head(&self) -> &str {
        self.text
            .split(|c: char| c.is_whitespace())
            .next()
            .unwrap_or("")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TacticProof {
    pub steps: Vec<TacticStep>,
    /// Comments after the last step.
    pub trailing_comments: Vec<String>,
    pub raw: String,
}

impl TacticProof {
    pub fn count(&self) -> usize {
        count_tactics(self)
    }

    /// Pre-order iterator over every step in the tree.
    pub fn iter(&self) -> StepIter<'_> {
        StepIter {
            stack: self.steps.iter().rev().collect(),
        }
    }

    pub fn render(&self) -> String {
        render_proof(self, DEFAULT_INDENT)
    }
}

pub struct StepIter<'a> {
    stack: Vec<&'a TacticStep>,
}

impl<'a> Iterator for StepIter<'a> {
    type Item = &'a TacticStep;

    fn next(&mut self) -> Option<Self::Item> {
        let step = self.stack.pop()?;
        self.stack.extend(step.children.iter().rev());
        Some(step)
    }
}

/// A declaration whose proof is a tactic block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremEntry {
    pub name: String,
    /// Declaration header, up to but excluding `:= by`.
    pub statement: String,
    /// File content preceding the declaration.
    pub context: String,
    pub initial_proof: TacticProof,
    pub source_path: String,
}

impl TheoremEntry {
    /// The declaration with `proof` as its tactic block.
    pub fn render_with(&self, proof: &TacticProof) -> String {
        format!(
            "{} := by\n{}",
            self.statement.trim_end(),
            render_at(proof, DEFAULT_INDENT, DEFAULT_INDENT)
        )
    }
}

pub const DEFAULT_INDENT: usize = 2;

// ---------------------------------------------------------------------------
// Lexing

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Code,
    Comment,
    Str,
}

struct Lexed {
    class: Vec<Class>,
    /// Bracket depth in effect at each byte.
    depth: Vec<u32>,
    /// Byte ranges of all top-level comments, in order.
    comments: Vec<(usize, usize)>,
}

fn closer_for(c: char) -> Option<char> {
    match c {
        '(' => Some(')'),
        '[' => Some(']'),
        '{' => Some('}'),
        '⟨' => Some('⟩'),
        '⦃' => Some('⦄'),
        '«' => Some('»'),
        _ => None,
    }
}

fn is_closer(c: char) -> bool {
    matches!(c, ')' | ']' | '}' | '⟩' | '⦄' | '»')
}

fn lex(src: &str) -> Result<Lexed, ParseError> {
    let n = src.len();
    let mut class = vec![Class::Code; n];
    let mut depth = vec![0u32; n];
    let mut comments = Vec::new();
    let mut stack: Vec<(char, usize)> = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut i = 0;

    let fill = |class: &mut Vec<Class>, depth: &mut Vec<u32>, from: usize, to: usize, c: Class, d: u32| {
        for b in from..to {
            class[b] = c;
            depth[b] = d;
        }
    };

    while i < chars.len() {
        let (pos, c) = chars[i];
        let next = chars.get(i + 1).map(|&(_, c)| c);
        let d = stack.len() as u32;
        if c == '-' && next == Some('-') {
            let end = src[pos..].find('\n').map_or(n, |e| pos + e);
            fill(&mut class, &mut depth, pos, end, Class::Comment, d);
            comments.push((pos, end));
            while i < chars.len() && chars[i].0 < end {
                i += 1;
            }
            continue;
        }
        if c == '/' && next == Some('-') {
            let mut nest = 1usize;
            let mut j = i + 2;
            while j < chars.len() && nest > 0 {
                let cj = chars[j].1;
                let nj = chars.get(j + 1).map(|&(_, c)| c);
                if cj == '/' && nj == Some('-') {
                    nest += 1;
                    j += 2;
                } else if cj == '-' && nj == Some('/') {
                    nest -= 1;
                    j += 2;
                } else {
                    j += 1;
                }
            }
            if nest > 0 {
                return Err(ParseError::UnbalancedDelimiters(format!(
                    "unterminated block comment at byte {pos}"
                )));
            }
            let end = chars.get(j).map_or(n, |&(p, _)| p);
            fill(&mut class, &mut depth, pos, end, Class::Comment, d);
            comments.push((pos, end));
            i = j;
            continue;
        }
        if c == '"' {
            let mut j = i + 1;
            let mut closed = false;
            while j < chars.len() {
                match chars[j].1 {
                    '\\' => j += 2,
                    '"' => {
                        closed = true;
                        j += 1;
                        break;
                    }
                    _ => j += 1,
                }
            }
            if !closed {
                return Err(ParseError::UnbalancedDelimiters(format!(
                    "unterminated string literal at byte {pos}"
                )));
            }
            let end = chars.get(j).map_or(n, |&(p, _)| p);
            fill(&mut class, &mut depth, pos, end, Class::Str, d);
            i = j;
            continue;
        }
        let width = c.len_utf8();
        if let Some(close) = closer_for(c) {
            fill(&mut class, &mut depth, pos, pos + width, Class::Code, d);
            stack.push((close, pos));
        } else if is_closer(c) {
            match stack.pop() {
                Some((expected, _)) if expected == c => {
                    fill(&mut class, &mut depth, pos, pos + width, Class::Code, d - 1);
                }
                Some((expected, open)) => {
                    return Err(ParseError::UnbalancedDelimiters(format!(
                        "expected `{expected}` to close byte {open}, found `{c}` at byte {pos}"
                    )));
                }
                None => {
                    return Err(ParseError::UnbalancedDelimiters(format!(
                        "unmatched `{c}` at byte {pos}"
                    )));
                }
            }
        } else {
            fill(&mut class, &mut depth, pos, pos + width, Class::Code, d);
        }
        i += 1;
    }
    if let Some((expected, open)) = stack.pop() {
        return Err(ParseError::UnbalancedDelimiters(format!(
            "bracket opened at byte {open} is never closed with `{expected}`"
        )));
    }
    Ok(Lexed {
        class,
        depth,
        comments,
    })
}

// ---------------------------------------------------------------------------
// Line records

#[derive(Debug, Clone, Copy)]
enum Rec {
    /// Standalone comment(s); `start..end` covers them.
    Comment { col: usize, start: usize, end: usize },
    /// One logical source line, possibly spanning several physical lines
    /// while a bracket, string or comment is open.
    Code { col: usize, start: usize, end: usize },
}

impl Rec {
    fn col(&self) -> usize {
        match *self {
            Rec::Comment { col, .. } | Rec::Code { col, .. } => col,
        }
    }
}

fn line_ranges(src: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, b) in src.bytes().enumerate() {
        if b == b'\n' {
            out.push((start, i));
            start = i + 1;
        }
    }
    out.push((start, src.len()));
    out
}

fn column(src: &str, line_start: usize, pos: usize) -> usize {
    src[line_start..pos].chars().count()
}

fn records(src: &str, lx: &Lexed) -> Vec<Rec> {
    let lines = line_ranges(src);
    let open_at = |pos: usize| -> bool {
        // a construct is open across `pos` (a newline byte)
        pos < src.len() && (lx.class[pos] != Class::Code || lx.depth[pos] > 0)
    };
    let mut recs = Vec::new();
    let mut li = 0;
    while li < lines.len() {
        let (ls, le) = lines[li];
        let line = &src[ls..le];
        let trimmed_start = line.len() - line.trim_start().len();
        if line.trim().is_empty() && !open_at(le) {
            li += 1;
            continue;
        }
        let first = ls + trimmed_start;
        let col = column(src, ls, first);
        if first < le && lx.class[first] == Class::Comment {
            // extend over consecutive comments separated only by blanks
            let mut pos = first;
            let mut end = first;
            loop {
                while pos < src.len() && lx.class[pos] == Class::Comment {
                    pos += 1;
                }
                end = end.max(pos);
                let rest = &src[pos..];
                let ws = rest.len() - rest.trim_start_matches([' ', '\t']).len();
                let after = pos + ws;
                if after < src.len() && lx.class[after] == Class::Comment && !src[pos..after].contains('\n') {
                    pos = after;
                    continue;
                }
                break;
            }
            let rest_of_line_end = src[end..].find('\n').map_or(src.len(), |e| end + e);
            if src[end..rest_of_line_end].trim().is_empty() {
                recs.push(Rec::Comment { col, start: first, end });
                while li < lines.len() && lines[li].1 < end {
                    li += 1;
                }
                li += 1;
                continue;
            }
        }
        // code line, joined while something stays open at the newline
        let mut lj = li;
        while lj + 1 < lines.len() && open_at(lines[lj].1) {
            lj += 1;
        }
        let end_line = &src[lines[lj].0..lines[lj].1];
        let end = lines[lj].0 + end_line.trim_end().len();
        recs.push(Rec::Code {
            col,
            start: first,
            end,
        });
        li = lj + 1;
    }
    recs
}

// ---------------------------------------------------------------------------
// Parsing

struct Parser<'a> {
    src: &'a str,
    lx: &'a Lexed,
}

fn next_code(recs: &[Rec], from: usize) -> Option<usize> {
    (from..recs.len()).find(|&k| matches!(recs[k], Rec::Code { .. }))
}

/// Re-indents a verbatim multi-line comment so its lines are relative to its
/// first line's column.
fn dedent_comment(src: &str, start: usize, end: usize, col: usize) -> String {
    let text = &src[start..end];
    let mut out = String::new();
    for (i, line) in text.split('\n').enumerate() {
        if i > 0 {
            out.push('\n');
            let lead = line.len() - line.trim_start_matches(' ').len();
            let strip = lead.min(col);
            out.push_str(line[strip..].trim_end());
        } else {
            out.push_str(line.trim_end());
        }
    }
    out
}

impl<'a> Parser<'a> {
    fn comment_texts(&self, recs: &[Rec]) -> Vec<String> {
        recs.iter()
            .filter_map(|r| match *r {
                Rec::Comment { col, start, end } => Some(dedent_comment(self.src, start, end, col)),
                Rec::Code { .. } => None,
            })
            .collect()
    }

    /// End of the code part of `start..end`, ignoring trailing comments and
    /// whitespace.
    fn code_end(&self, start: usize, end: usize) -> usize {
        let mut e = end;
        loop {
            while e > start && self.src.as_bytes()[e - 1].is_ascii_whitespace() {
                e -= 1;
            }
            if e > start && self.lx.class[e - 1] == Class::Comment {
                while e > start && self.lx.class[e - 1] == Class::Comment {
                    e -= 1;
                }
                continue;
            }
            return e;
        }
    }

    fn opens_block(&self, start: usize, end: usize) -> bool {
        let e = self.code_end(start, end);
        let code = &self.src[start..e];
        let ident_char = |c: char| c.is_alphanumeric() || c == '_' || c == '\'' || c == '.';
        if let Some(before) = code.strip_suffix("by") {
            return before.chars().last().is_none_or(|c| !ident_char(c))
                && self.lx.class[e - 1] == Class::Code;
        }
        if code.ends_with("=>") && self.lx.class[e - 1] == Class::Code {
            let head = code.split_whitespace().next().unwrap_or("");
            return matches!(head, "case" | "case'" | "next" | "conv" | "|")
                || head.starts_with("conv_");
        }
        false
    }

    /// `;` split points in `start..end` at bracket depth zero.
    fn split_points(&self, start: usize, end: usize) -> Vec<usize> {
        let bytes = self.src.as_bytes();
        (start..end)
            .filter(|&b| {
                bytes[b] == b';'
                    && self.lx.class[b] == Class::Code
                    && self.lx.depth[b] == 0
                    && !(b > 0 && bytes[b - 1] == b'<' && b + 1 < bytes.len() && bytes[b + 1] == b'>')
            })
            .collect()
    }

    fn make_step(&self, start: usize, end: usize, layout: Layout) -> Option<TacticStep> {
        let seg = &self.src[start..end];
        let lead = seg.len() - seg.trim_start().len();
        let s = start + lead;
        let e = start + seg.trim_end().len();
        if s >= e {
            return None;
        }
        let text = self.src[s..e]
            .split('\n')
            .enumerate()
            .map(|(i, l)| if i == 0 { l.trim_end() } else { l.trim() })
            .collect::<Vec<_>>()
            .join("\n");
        Some(TacticStep {
            text,
            children: Vec::new(),
            span: Span { start: s, end: e },
            comments: Vec::new(),
            layout,
            bullet: None,
            inner_bullets: Vec::new(),
            nested_len: 0,
        })
    }

    fn detect_bullet(&self, start: usize, end: usize) -> Option<(char, usize)> {
        let text = &self.src[start..end];
        let c = text.chars().next()?;
        if c != '·' && c != '.' {
            return None;
        }
        let after = start + c.len_utf8();
        let next = self.src[after..end].chars().next();
        if c == '.' && !next.is_none_or(char::is_whitespace) {
            return None;
        }
        let rest = &self.src[after..end];
        let ws = rest.len() - rest.trim_start().len();
        Some((c, after + ws))
    }

    fn parse_block(&self, recs: &[Rec], pos: &mut usize, min_col: usize) -> Result<Vec<TacticStep>, ParseError> {
        let mut steps = Vec::new();
        let mut block_col: Option<usize> = None;
        while let Some(k) = next_code(recs, *pos) {
            let col = recs[k].col();
            if col < min_col {
                break;
            }
            let bc = *block_col.get_or_insert(col);
            if col < bc {
                break;
            }
            let comments = self.comment_texts(&recs[*pos..k]);
            *pos = k;
            self.parse_line(recs, pos, col, comments, &mut steps)?;
        }
        Ok(steps)
    }

    fn parse_line(
        &self,
        recs: &[Rec],
        pos: &mut usize,
        col: usize,
        comments: Vec<String>,
        steps: &mut Vec<TacticStep>,
    ) -> Result<(), ParseError> {
        let Rec::Code { start, end, .. } = recs[*pos] else {
            unreachable!("parse_line called on a comment record")
        };
        if let Some((bullet, content)) = self.detect_bullet(start, end) {
            *pos += 1;
            let mut body = Vec::new();
            if content < end {
                let line_start = self.src[..start].rfind('\n').map_or(0, |p| p + 1);
                body.push(Rec::Code {
                    col: column(self.src, line_start, content),
                    start: content,
                    end,
                });
            }
            while let Some(k) = next_code(recs, *pos) {
                if recs[k].col() <= col {
                    break;
                }
                body.extend_from_slice(&recs[*pos..=k]);
                *pos = k + 1;
            }
            let mut bpos = 0;
            let mut inner = Vec::new();
            while next_code(&body, bpos).is_some() {
                inner.extend(self.parse_block(&body, &mut bpos, 0)?);
            }
            if inner.is_empty() {
                return Err(ParseError::EmptyProof);
            }
            let mut head = inner.remove(0);
            if let Some(b) = head.bullet {
                let focused = head.children.len() - head.nested_len;
                head.inner_bullets.insert(0, (b, focused));
            } else {
                head.nested_len = head.children.len();
            }
            head.bullet = Some(bullet);
            head.layout = Layout::Line;
            let mut all_comments = comments;
            all_comments.append(&mut head.comments);
            head.comments = all_comments;
            head.children.extend(inner);
            steps.push(head);
            return Ok(());
        }

        // plain line plus continuation lines
        let mut line_end = end;
        *pos += 1;
        while !self.opens_block(start, line_end) {
            match recs.get(*pos) {
                Some(&Rec::Code { col: c, end: e, .. }) if c > col => {
                    line_end = e;
                    *pos += 1;
                }
                _ => break,
            }
        }
        let mut cuts = vec![start];
        for p in self.split_points(start, line_end) {
            cuts.push(p);
        }
        cuts.push(line_end);
        let mut line_steps = Vec::new();
        for (i, w) in cuts.windows(2).enumerate() {
            let s = if i == 0 { w[0] } else { w[0] + 1 };
            let layout = if line_steps.is_empty() { Layout::Line } else { Layout::Chained };
            if let Some(step) = self.make_step(s, w[1], layout) {
                line_steps.push(step);
            }
        }
        if line_steps.is_empty() {
            return Ok(());
        }
        line_steps[0].comments = comments;
        if self.opens_block(start, line_end) {
            let nested = self.parse_block(recs, pos, col + 1)?;
            let last = line_steps.last_mut().expect("non-empty");
            last.nested_len = nested.len();
            last.children = nested;
        }
        steps.extend(line_steps);
        Ok(())
    }
}

/// Parses a tactic block (the text after `by`).
pub fn parse_tactic_proof(source: &str) -> Result<TacticProof, ParseError> {
    let lx = lex(source)?;
    let recs = records(source, &lx);
    let parser = Parser { src: source, lx: &lx };
    let mut pos = 0;
    let mut steps = Vec::new();
    while next_code(&recs, pos).is_some() {
        steps.extend(parser.parse_block(&recs, &mut pos, 0)?);
    }
    if steps.is_empty() {
        return Err(ParseError::EmptyProof);
    }
    let trailing_comments = parser.comment_texts(&recs[pos..]);
    Ok(TacticProof {
        steps,
        trailing_comments,
        raw: source.to_string(),
    })
}

/// Number of tactic invocations in the proof.
pub fn count_tactics(proof: &TacticProof) -> usize {
    proof.steps.iter().map(TacticStep::count).sum()
}

// ---------------------------------------------------------------------------
// State comments

/// Whether a block comment body looks like a rendered proof state.
pub fn is_state_comment(comment: &str) -> bool {
    let Some(inner) = comment.strip_prefix("/-") else {
        return false;
    };
    if inner.starts_with('-') || inner.starts_with('!') {
        return false;
    }
    let body = inner.strip_suffix("-/").unwrap_or(inner).trim();
    body == SOLVED_MARKER
        || body == "no goals"
        || body
            .lines()
            .any(|l| l.trim_start().starts_with('⊢'))
}

pub const SOLVED_MARKER: &str = "Goals Solved!";

/// Removes every proof-state block comment from `source`. Lines that held
/// nothing but a state comment are dropped entirely.
pub fn strip_state_comments(source: &str) -> Result<String, ParseError> {
    let lx = lex(source)?;
    let mut out = String::with_capacity(source.len());
    let mut cursor = 0;
    for &(s, e) in &lx.comments {
        if !is_state_comment(&source[s..e]) {
            continue;
        }
        let line_start = source[..s].rfind('\n').map_or(0, |p| p + 1);
        let line_end = source[e..].find('\n').map_or(source.len(), |p| e + p);
        let whole_lines = source[line_start..s].trim().is_empty() && source[e..line_end].trim().is_empty();
        let (cut_s, cut_e) = if whole_lines {
            // drop the lines and one newline
            if line_end < source.len() {
                (line_start, line_end + 1)
            } else if line_start > 0 {
                (line_start - 1, line_end)
            } else {
                (line_start, line_end)
            }
        } else {
            (s, e)
        };
        if cut_s < cursor {
            continue;
        }
        out.push_str(&source[cursor..cut_s]);
        cursor = cut_e;
    }
    out.push_str(&source[cursor..]);
    Ok(out)
}

// ---------------------------------------------------------------------------
// Rendering

/// Renders the proof with top-level steps at column zero.
pub fn render_proof(proof: &TacticProof, indent_unit: usize) -> String {
    render_at(proof, indent_unit, 0)
}

/// Renders the proof with top-level steps at column `base`.
pub fn render_at(proof: &TacticProof, indent_unit: usize, base: usize) -> String {
    let mut r = Renderer::new(indent_unit, |_, _| None);
    r.block(&proof.steps, base);
    r.trailing(&proof.trailing_comments, base);
    r.finish()
}

/// Line-oriented renderer shared by plain rendering and state annotation.
///
/// `after_line` receives the pre-order index of the last step on each line
/// and the line's column; it may return text to insert after the line.
pub(crate) struct Renderer<F> {
    unit: usize,
    lines: Vec<String>,
    index: usize,
    after_line: F,
}

impl<F> Renderer<F>
where
    F: FnMut(usize, usize) -> Option<String>,
{
    pub(crate) fn new(unit: usize, after_line: F) -> Self {
        Renderer {
            unit,
            lines: Vec::new(),
            index: 0,
            after_line,
        }
    }

    fn push_multiline(&mut self, text: &str, col: usize, cont_col: usize) {
        for (i, l) in text.split('\n').enumerate() {
            let c = if i == 0 { col } else { cont_col };
            if l.is_empty() {
                self.lines.push(String::new());
            } else {
                self.lines.push(format!("{}{}", " ".repeat(c), l));
            }
        }
    }

    fn append_to_last(&mut self, text: &str, cont_col: usize) {
        let mut parts = text.split('\n');
        if let Some(first) = parts.next() {
            let last = self.lines.last_mut().expect("line exists");
            last.push_str("; ");
            last.push_str(first);
        }
        for l in parts {
            self.lines.push(format!("{}{}", " ".repeat(cont_col), l));
        }
    }

    fn comments(&mut self, comments: &[String], col: usize) {
        for c in comments {
            self.push_multiline(c, col, col);
        }
    }

    pub(crate) fn trailing(&mut self, comments: &[String], col: usize) {
        self.comments(comments, col);
    }

    pub(crate) fn block(&mut self, steps: &[TacticStep], col: usize) {
        let mut i = 0;
        while i < steps.len() {
            let head = &steps[i];
            let depth = if head.bullet.is_some() { 1 + head.inner_bullets.len() } else { 0 };
            let content_col = col + 2 * depth;
            self.comments(&head.comments, col);
            let mut first: String = head.bullet.iter().chain(head.inner_bullets.iter().map(|(b, _)| b)).map(|b| format!("{b} ")).collect();
            first.push_str(&head.text);
            // bullet prefix shifts the first line only
            self.push_multiline(&first, col, content_col + self.unit);
            self.index += 1;
            let mut last: &TacticStep = head;
            let mut focus_from = head.nested_len;
            if head.bullet.is_some() {
                while focus_from < head.children.len() && head.children[focus_from].layout == Layout::Chained {
                    let c = &head.children[focus_from];
                    self.append_to_last(&c.text, content_col + self.unit);
                    self.index += 1;
                    last = c;
                    focus_from += 1;
                }
            }
            let mut j = i + 1;
            while j < steps.len() && steps[j].layout == Layout::Chained {
                self.append_to_last(&steps[j].text, content_col + self.unit);
                self.index += 1;
                last = &steps[j];
                j += 1;
            }
            if let Some(extra) = (self.after_line)(self.index - 1, col) {
                self.lines.extend(extra.split('\n').map(str::to_string));
            }
            if !last.nested().is_empty() {
                self.block(last.nested(), content_col + self.unit);
            }
            // focused children, innermost bullet depth first
            let mut f = focus_from;
            while head.bullet.is_some() && f < head.children.len() {
                let k = f - head.nested_len;
                let level = head.inner_bullets.iter().take_while(|(_, n)| k < *n).count();
                let upto = match level {
                    0 => head.children.len(),
                    l => head.nested_len + head.inner_bullets[l - 1].1,
                };
                self.block(&head.children[f..upto], col + 2 * (level + 1));
                f = upto;
            }
            i = j;
        }
    }

    pub(crate) fn finish(self) -> String {
        self.lines.join("\n")
    }
}

/// Splits a declaration at its first `:= by` into `(header, tactic block)`.
/// Occurrences inside comments and strings are ignored.
pub fn split_tactic_block(text: &str) -> Option<(&str, &str)> {
    let lx = lex(text).ok()?;
    let mut from = 0;
    while let Some(rel) = text[from..].find(":=") {
        let at = from + rel;
        from = at + 2;
        if lx.class[at] != Class::Code {
            continue;
        }
        let rest = &text[at + 2..];
        let ws = rest.len() - rest.trim_start().len();
        let after_ws = &rest[ws..];
        if let Some(tail) = after_ws.strip_prefix("by") {
            if tail.chars().next().is_none_or(char::is_whitespace) {
                let body_start = at + 2 + ws + 2;
                return Some((&text[..at], &text[body_start..]));
            }
        }
    }
    None
}

/// Collapses whitespace runs and drops whitespace around `;` so texts that
/// differ only in layout compare equal.
pub fn normalize_whitespace(text: &str) -> String {
    let collapsed = text.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed.replace(" ;", ";").replace("; ", ";")
}

#[cfg(test)]
mod tests {
    use super::*;

    const INTER_UNION_LEFT: &str = "rintro x (⟨xs, xt⟩ | ⟨xs, xu⟩)\n· use xs; left; exact xt\n. use xs; right; exact xu";

    #[test]
    fn sorry_is_one_step() {
        let p = parse_tactic_proof("sorry").unwrap();
        assert_eq!(count_tactics(&p), 1);
        assert_eq!(render_proof(&p, 2), "sorry");
    }

    #[test]
    fn bullets_and_chains() {
        let p = parse_tactic_proof(INTER_UNION_LEFT).unwrap();
        assert_eq!(count_tactics(&p), 7);
        assert_eq!(p.steps.len(), 3);
        assert_eq!(p.steps[1].bullet, Some('·'));
        assert_eq!(p.steps[1].text, "use xs");
        assert_eq!(p.steps[1].children.len(), 2);
        assert_eq!(p.steps[2].bullet, Some('.'));
        assert_eq!(render_proof(&p, 2), INTER_UNION_LEFT);
    }

    #[test]
    fn three_flat_siblings() {
        let p = parse_tactic_proof("intro x\nsimp\nring").unwrap();
        assert_eq!(p.steps.len(), 3);
        assert!(p.steps.iter().all(|s| s.children.is_empty()));
        assert_eq!(count_tactics(&p), 3);
        assert_eq!(render_proof(&p, 2), "intro x\nsimp\nring");
    }

    #[test]
    fn combinator_counts_once() {
        let p = parse_tactic_proof("constructor <;> simp [h]; exact h").unwrap();
        assert_eq!(count_tactics(&p), 2);
        assert_eq!(p.steps[0].text, "constructor <;> simp [h]");
    }

    #[test]
    fn semicolon_inside_brackets_is_opaque() {
        let p = parse_tactic_proof("simp [foo; bar]\nexact ⟨a; b⟩").unwrap();
        assert_eq!(count_tactics(&p), 2);
    }

    #[test]
    fn nested_by_block_children() {
        let src = "have h : a = b := by\n  apply foo\n  simp\nexact h";
        let p = parse_tactic_proof(src).unwrap();
        assert_eq!(p.steps.len(), 2);
        assert_eq!(p.steps[0].nested_len, 2);
        assert_eq!(count_tactics(&p), 4);
        assert_eq!(render_proof(&p, 2), src);
    }

    #[test]
    fn continuation_lines_join_the_step() {
        let src = "have h : x = y :=\n  foo _ (bar x)\nrw [h]";
        let p = parse_tactic_proof(src).unwrap();
        assert_eq!(count_tactics(&p), 2);
        assert_eq!(p.steps[0].text, "have h : x = y :=\nfoo _ (bar x)");
        assert_eq!(render_proof(&p, 2), src);
    }

    #[test]
    fn multiline_brackets_join() {
        let p = parse_tactic_proof("simp only [a,\nb,\n  c]\nring").unwrap();
        assert_eq!(count_tactics(&p), 2);
    }

    #[test]
    fn comments_are_metadata() {
        let src = "-- PROOF START\nintro x\n/- a note\n   spanning lines -/\nexact x\n-- done";
        let p = parse_tactic_proof(src).unwrap();
        assert_eq!(count_tactics(&p), 2);
        assert_eq!(p.steps[0].comments, vec!["-- PROOF START".to_string()]);
        assert_eq!(p.steps[1].comments.len(), 1);
        assert_eq!(p.trailing_comments, vec!["-- done".to_string()]);
        assert_eq!(render_proof(&p, 2), src);
    }

    #[test]
    fn bullet_block_with_following_lines() {
        let src = "constructor\n· rw [a]\n  simp [h]\n· symm\n  exact foo";
        let p = parse_tactic_proof(src).unwrap();
        assert_eq!(count_tactics(&p), 5);
        assert_eq!(render_proof(&p, 2), src);
    }

    #[test]
    fn nested_bullets_on_one_line() {
        let src = "· · simp; rfl\n    omega\n  exact h\n· trivial";
        let p = parse_tactic_proof(src).unwrap();
        assert_eq!(count_tactics(&p), 5);
        assert_eq!(p.steps[0].inner_bullets, [('·', 2)]);
        assert_eq!(render_proof(&p, 2), src);
    }

    #[test]
    fn bullet_head_with_nested_by() {
        let src = "· have h : P := by\n    simp\n  exact h";
        let p = parse_tactic_proof(src).unwrap();
        assert_eq!(count_tactics(&p), 3);
        assert_eq!(p.steps[0].nested_len, 1);
        assert_eq!(render_proof(&p, 2), src);
    }

    #[test]
    fn case_arrow_opens_block() {
        let src = "cases h\ncase inl h =>\n  exact h\ncase inr h =>\n  simp";
        let p = parse_tactic_proof(src).unwrap();
        assert_eq!(count_tactics(&p), 5);
    }

    #[test]
    fn fun_arrow_does_not_open_block() {
        let p = parse_tactic_proof("exact fun x =>\n  foo x").unwrap();
        assert_eq!(count_tactics(&p), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_tactic_proof("simp [foo"), Err(ParseError::UnbalancedDelimiters(_))));
        assert!(matches!(parse_tactic_proof("exact (a]"), Err(ParseError::UnbalancedDelimiters(_))));
        assert!(matches!(parse_tactic_proof("/- open"), Err(ParseError::UnbalancedDelimiters(_))));
        assert!(matches!(parse_tactic_proof("  \n -- just a comment\n"), Err(ParseError::EmptyProof)));
        assert!(matches!(parse_tactic_proof(""), Err(ParseError::EmptyProof)));
    }

    #[test]
    fn spans_are_ordered_and_disjoint() {
        let p = parse_tactic_proof(INTER_UNION_LEFT).unwrap();
        let spans: Vec<Span> = p.iter().map(|s| s.span).collect();
        for w in spans.windows(2) {
            assert!(w[0].end <= w[1].start, "{spans:?}");
        }
        for s in p.iter() {
            assert_eq!(&INTER_UNION_LEFT[s.span.start..s.span.end], s.text);
        }
    }

    #[test]
    fn strip_keeps_user_comments() {
        let src = "intro x\n/-\n⊢ x = x\n-/\n-- keep me\nrfl\n/-\nGoals Solved!\n-/";
        let stripped = strip_state_comments(src).unwrap();
        assert_eq!(stripped, "intro x\n-- keep me\nrfl");
        assert_eq!(strip_state_comments(&stripped).unwrap(), stripped);
    }

    #[test]
    fn doc_comments_are_not_state() {
        assert!(!is_state_comment("/-- ⊢ doc -/"));
        assert!(!is_state_comment("/-! Goals Solved! -/"));
        assert!(is_state_comment("/-\n  Goals Solved!\n  -/"));
    }

    #[test]
    fn split_declaration() {
        let (h, b) = split_tactic_block("theorem t : a := by\n  simp").unwrap();
        assert_eq!(h, "theorem t : a ");
        assert_eq!(b, "\n  simp");
        let (h, _) = split_tactic_block("-- x := by y\ntheorem t : a := by simp").unwrap();
        assert_eq!(h, "-- x := by y\ntheorem t : a ");
        assert!(split_tactic_block("theorem t : a := foo").is_none());
        assert!(split_tactic_block("theorem t : a := byFoo").is_none());
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_whitespace("a ;b\n  c"), "a;b c");
        assert_eq!(normalize_whitespace("use xs; left"), normalize_whitespace("use xs ;left"));
    }
}
