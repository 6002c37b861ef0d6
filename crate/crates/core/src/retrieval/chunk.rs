//! Recursive character splitting.
//!
//! Documents are cut at structural boundaries first (markdown headers, or
//! declaration keywords for Lean sources), then at paragraph breaks, and only
//! then into fixed character windows that overlap by a configured amount.
//! Pieces tile the document: boundary cuts never overlap, window cuts overlap
//! by exactly `overlap` characters.

use serde::{Deserialize, Serialize};

use crate::error::RetrievalError;

pub const DEFAULT_MAX_CHUNK: usize = 1000;
pub const DEFAULT_OVERLAP: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChunkKind {
    SyntaxDoc,
    LibraryDoc,
    ExamplePair,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSource {
    pub path: String,
    /// Character (not byte) offset into the source document.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub text: String,
    pub source: ChunkSource,
    pub kind: ChunkKind,
}

impl Chunk {
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }
}

fn is_markdown_header(line: &str) -> bool {
    let indent = line.len() - line.trim_start_matches(' ').len();
    if indent > 3 {
        return false;
    }
    let rest = &line[indent..];
    let hashes = rest.len() - rest.trim_start_matches('#').len();
    (1..=6).contains(&hashes) && rest[hashes..].chars().next().is_none_or(char::is_whitespace)
}

fn is_declaration_start(line: &str) -> bool {
    for kw in ["theorem", "lemma", "example", "def"] {
        if let Some(rest) = line.strip_prefix(kw) {
            match rest.chars().next() {
                None => return true,
                Some(c) if c.is_whitespace() => return true,
                Some(':' | '(' | '{' | '[') if kw == "example" => return true,
                _ => {}
            }
        }
    }
    false
}

/// Char offsets of the starts of lines for which `boundary` holds.
fn boundary_offsets(doc: &str, mut boundary: impl FnMut(&str) -> bool) -> Vec<usize> {
    let mut out = Vec::new();
    let mut char_pos = 0;
    for line in doc.split_inclusive('\n') {
        if boundary(line.trim_end_matches(['\n', '\r'])) {
            out.push(char_pos);
        }
        char_pos += line.chars().count();
    }
    out
}

fn markdown_boundaries(doc: &str) -> Vec<usize> {
    let mut in_fence = false;
    boundary_offsets(doc, |line| {
        if line.trim_start().starts_with("```") {
            in_fence = !in_fence;
            return false;
        }
        !in_fence && is_markdown_header(line)
    })
}

/// Char offsets where a paragraph starts after one or more blank lines.
fn paragraph_boundaries(doc: &str) -> Vec<usize> {
    let mut out = Vec::new();
    let mut char_pos = 0;
    let mut prev_blank = false;
    for line in doc.split_inclusive('\n') {
        let blank = line.trim().is_empty();
        if prev_blank && !blank {
            out.push(char_pos);
        }
        prev_blank = blank;
        char_pos += line.chars().count();
    }
    out
}

/// Cuts `[0, len)` at the given sorted offsets into non-empty intervals.
fn cut(len: usize, offsets: &[usize]) -> Vec<(usize, usize)> {
    let mut points = vec![0];
    points.extend(offsets.iter().copied().filter(|&o| o > 0 && o < len));
    points.push(len);
    points.dedup();
    points.windows(2).map(|w| (w[0], w[1])).filter(|(a, b)| b > a).collect()
}

fn windows(start: usize, end: usize, max: usize, overlap: usize) -> Vec<(usize, usize)> {
    let step = max - overlap;
    let mut out = Vec::new();
    let mut s = start;
    loop {
        let e = (s + max).min(end);
        out.push((s, e));
        if e >= end {
            return out;
        }
        s += step;
    }
}

/// Intervals (in chars) of the recursive split.
fn split_intervals(
    doc: &str,
    primary: &[usize],
    max: usize,
    overlap: usize,
) -> Vec<(usize, usize)> {
    let len = doc.chars().count();
    let paragraphs = paragraph_boundaries(doc);
    let mut out = Vec::new();
    for (s, e) in cut(len, primary) {
        if e - s <= max {
            out.push((s, e));
            continue;
        }
        let mut points = vec![s];
        points.extend(paragraphs.iter().copied().filter(|&p| p > s && p < e));
        points.push(e);
        let mut piece: Option<(usize, usize)> = None;
        for (ps, pe) in points.windows(2).map(|w| (w[0], w[1])) {
            match piece {
                Some((a, _)) if pe - a <= max => piece = Some((a, pe)),
                _ => {
                    if let Some(p) = piece.take() {
                        out.push(p);
                    }
                    if pe - ps <= max {
                        piece = Some((ps, pe));
                    } else {
                        out.extend(windows(ps, pe, max, overlap));
                    }
                }
            }
        }
        out.extend(piece);
    }
    out
}

fn materialize(
    doc: &str,
    intervals: Vec<(usize, usize)>,
    path: &str,
    kind: ChunkKind,
) -> Vec<Chunk> {
    let byte_at: Vec<usize> = doc
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(doc.len()))
        .collect();
    intervals
        .into_iter()
        .filter_map(|(s, e)| {
            let text = &doc[byte_at[s]..byte_at[e]];
            (!text.trim().is_empty()).then(|| Chunk {
                text: text.to_string(),
                source: ChunkSource {
                    path: path.to_string(),
                    offset: s,
                },
                kind,
            })
        })
        .collect()
}

fn check(max_chunk: usize, overlap: usize) -> Result<(), RetrievalError> {
    if overlap >= max_chunk {
        return Err(RetrievalError::BadConfig { max_chunk, overlap });
    }
    Ok(())
}

/// Splits markdown documentation at headers, then paragraphs, then windows.
pub fn chunk_markdown(doc: &str, max_chunk: usize, overlap: usize) -> Result<Vec<Chunk>, RetrievalError> {
    chunk_markdown_from(doc, "", max_chunk, overlap)
}

pub fn chunk_markdown_from(doc: &str, path: &str, max_chunk: usize, overlap: usize) -> Result<Vec<Chunk>, RetrievalError> {
    check(max_chunk, overlap)?;
    let intervals = split_intervals(doc, &markdown_boundaries(doc), max_chunk, overlap);
    Ok(materialize(doc, intervals, path, ChunkKind::SyntaxDoc))
}

/// Splits Lean sources at `theorem`/`lemma`/`example`/`def` line starts, then
/// paragraphs, then windows.
pub fn chunk_theorem_corpus(doc: &str, max_chunk: usize, overlap: usize) -> Result<Vec<Chunk>, RetrievalError> {
    chunk_theorem_corpus_from(doc, "", max_chunk, overlap)
}

pub fn chunk_theorem_corpus_from(
    doc: &str,
    path: &str,
    max_chunk: usize,
    overlap: usize,
) -> Result<Vec<Chunk>, RetrievalError> {
    check(max_chunk, overlap)?;
    let intervals = split_intervals(doc, &boundary_offsets(doc, is_declaration_start), max_chunk, overlap);
    Ok(materialize(doc, intervals, path, ChunkKind::LibraryDoc))
}

/// Structural boundaries used by the markdown splitter, exposed for tests.
pub fn markdown_header_offsets(doc: &str) -> Vec<usize> {
    markdown_boundaries(doc)
}

/// Paragraph boundaries used by both splitters, exposed for tests.
pub fn paragraph_offsets(doc: &str) -> Vec<usize> {
    paragraph_boundaries(doc)
}
