//! Chunking, embedding and MMR retrieval of syntax docs, library docs and
//! metric-specific optimization examples.

mod chunk;
mod embed;
mod mmr;
mod store;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

pub use chunk::{
    chunk_markdown, chunk_markdown_from, chunk_theorem_corpus, chunk_theorem_corpus_from, markdown_header_offsets,
    paragraph_offsets, Chunk, ChunkKind, ChunkSource, DEFAULT_MAX_CHUNK, DEFAULT_OVERLAP,
};
pub use embed::{Embedder, HashingEmbedder, RemoteEmbedder, RemoteEmbedderConfig, HASHING_DIM};
pub use mmr::{cosine, mmr_indices};
pub use store::{examples_dir, library_dir, mmr_select, syntax_dir, StoreEntry, StoreManifest, VectorStore};

use crate::error::RetrievalError;
use crate::metrics::MetricDef;
use crate::proof_model::{parse_tactic_proof, TacticProof, TheoremEntry};

pub const DEFAULT_LAMBDA: f64 = 0.5;

/// A proof before and after optimization for some metric.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub metric: String,
    pub before: String,
    pub after: String,
}

impl ExamplePair {
    /// Text shown to the generator inside an example block.
    pub fn render(&self) -> String {
        format!("Input:\n{}\n\nOutput:\n{}", self.before.trim_end(), self.after.trim_end())
    }

    /// Checks that both sides contain a parseable tactic block, either bare or
    /// after a declaration's `:= by`.
    pub fn validate(&self) -> Result<(), RetrievalError> {
        for text in [&self.before, &self.after] {
            let body = crate::proof_model::split_tactic_block(text).map_or(text.as_str(), |(_, b)| b);
            parse_tactic_proof(body)?;
        }
        Ok(())
    }

    /// Loads `<name>.before.lean` / `<name>.after.lean` pairs from `dir`,
    /// sorted by name.
    pub fn load_dir(dir: &Path, metric: &str) -> Result<Vec<ExamplePair>, RetrievalError> {
        let mut befores = BTreeMap::new();
        let entries = fs::read_dir(dir).map_err(|source| RetrievalError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        for entry in entries {
            let path = entry
                .map_err(|source| RetrievalError::Io {
                    path: dir.to_path_buf(),
                    source,
                })?
                .path();
            let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            if let Some(stem) = name.strip_suffix(".before.lean") {
                befores.insert(stem.to_string(), path.clone());
            }
        }
        let mut out = Vec::new();
        for (stem, before_path) in befores {
            let after_path = dir.join(format!("{stem}.after.lean"));
            let read = |p: &Path| {
                fs::read_to_string(p).map_err(|source| RetrievalError::Io {
                    path: p.to_path_buf(),
                    source,
                })
            };
            let pair = ExamplePair {
                metric: metric.to_string(),
                before: read(&before_path)?,
                after: read(&after_path)?,
            };
            pair.validate()?;
            out.push(pair);
        }
        Ok(out)
    }

    pub fn to_chunk(&self, path: &str) -> Chunk {
        Chunk {
            text: self.render(),
            source: ChunkSource {
                path: path.to_string(),
                offset: 0,
            },
            kind: ChunkKind::ExamplePair,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalCounts {
    pub examples: usize,
    pub syntax_docs: usize,
    pub library_docs: usize,
}

impl Default for RetrievalCounts {
    fn default() -> Self {
        RetrievalCounts {
            examples: 10,
            syntax_docs: 5,
            library_docs: 5,
        }
    }
}

impl RetrievalCounts {
    pub fn zero() -> Self {
        RetrievalCounts {
            examples: 0,
            syntax_docs: 0,
            library_docs: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Retrieved {
    pub examples: Vec<Chunk>,
    pub syntax_docs: Vec<Chunk>,
    pub library_docs: Vec<Chunk>,
}

impl Retrieved {
    pub fn is_empty(&self) -> bool {
        self.examples.is_empty() && self.syntax_docs.is_empty() && self.library_docs.is_empty()
    }
}

/// Query side of the three stores under one root directory.
pub struct Retriever {
    embedder: Arc<dyn Embedder>,
    syntax: Option<VectorStore>,
    library: Option<VectorStore>,
    examples: BTreeMap<String, VectorStore>,
    lambda: f64,
}

fn load_optional(dir: &Path) -> Result<Option<VectorStore>, RetrievalError> {
    match VectorStore::load(dir) {
        Ok(s) => Ok(Some(s)),
        Err(RetrievalError::StoreMissing(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

impl Retriever {
    pub fn new(embedder: Arc<dyn Embedder>, lambda: f64) -> Self {
        Retriever {
            embedder,
            syntax: None,
            library: None,
            examples: BTreeMap::new(),
            lambda,
        }
    }

    /// Opens whatever stores exist under `root`. Stores built with another
    /// embedder are rejected.
    pub fn open(root: &Path, embedder: Arc<dyn Embedder>, lambda: f64) -> Result<Self, RetrievalError> {
        if !root.is_dir() {
            return Err(RetrievalError::StoreMissing(root.display().to_string()));
        }
        let mut r = Retriever::new(embedder, lambda);
        if let Some(s) = load_optional(&syntax_dir(root))? {
            r = r.with_syntax(s)?;
        }
        if let Some(s) = load_optional(&library_dir(root))? {
            r = r.with_library(s)?;
        }
        let ex_root = root.join("examples");
        if ex_root.is_dir() {
            let mut ids: Vec<String> = fs::read_dir(&ex_root)
                .map_err(|source| RetrievalError::Io {
                    path: ex_root.clone(),
                    source,
                })?
                .filter_map(Result::ok)
                .filter(|e| e.path().is_dir())
                .filter_map(|e| e.file_name().to_str().map(str::to_string))
                .collect();
            ids.sort();
            for id in ids {
                if let Some(s) = load_optional(&examples_dir(root, &id))? {
                    r = r.with_examples(&id, s)?;
                }
            }
        }
        Ok(r)
    }

    fn check(&self, store: &VectorStore) -> Result<(), RetrievalError> {
        if store.dim() != self.embedder.dim() {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.embedder.dim(),
                actual: store.dim(),
            });
        }
        if store.embedder_id() != self.embedder.id() {
            return Err(RetrievalError::Corrupt(format!(
                "store built with `{}`, querying with `{}`",
                store.embedder_id(),
                self.embedder.id()
            )));
        }
        Ok(())
    }

    pub fn with_syntax(mut self, store: VectorStore) -> Result<Self, RetrievalError> {
        self.check(&store)?;
        self.syntax = Some(store);
        Ok(self)
    }

    pub fn with_library(mut self, store: VectorStore) -> Result<Self, RetrievalError> {
        self.check(&store)?;
        self.library = Some(store);
        Ok(self)
    }

    pub fn with_examples(mut self, store_id: &str, store: VectorStore) -> Result<Self, RetrievalError> {
        self.check(&store)?;
        self.examples.insert(store_id.to_string(), store);
        Ok(self)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn select(
        &self,
        store: Option<&VectorStore>,
        name: &str,
        query: &str,
        k: usize,
    ) -> Result<Vec<Chunk>, RetrievalError> {
        if k == 0 {
            return Ok(Vec::new());
        }
        let store = store.ok_or_else(|| RetrievalError::StoreMissing(name.to_string()))?;
        let q = self.embedder.embed_one(query)?;
        Ok(mmr_select(&q, store, k, self.lambda)?.into_iter().cloned().collect())
    }

    /// Selects context for one generation request.
    ///
    /// Library docs are queried with the statement and current proof, syntax
    /// docs with the statement, context and error messages, and examples with
    /// the statement alone against the metric's example store.
    pub fn retrieve_for_request(
        &self,
        theorem: &TheoremEntry,
        current_proof: &TacticProof,
        errors: &[String],
        metric: &MetricDef,
        counts: RetrievalCounts,
    ) -> Result<Retrieved, RetrievalError> {
        let library_query = format!("{}\n{}", theorem.statement, current_proof.render());
        let syntax_query = format!("{}\n{}\n{}", theorem.statement, theorem.context, errors.join("\n"));
        let store_id = metric.example_store_id();
        Ok(Retrieved {
            examples: self.select(
                self.examples.get(store_id),
                &format!("examples/{store_id}"),
                &theorem.statement,
                counts.examples,
            )?,
            syntax_docs: self.select(self.syntax.as_ref(), "syntax", &syntax_query, counts.syntax_docs)?,
            library_docs: self.select(self.library.as_ref(), "library", &library_query, counts.library_docs)?,
        })
    }
}

/// Inputs for building all stores under one root.
#[derive(Debug, Clone, Default)]
pub struct IndexSources {
    /// Markdown syntax documentation.
    pub docs: Option<PathBuf>,
    /// Lean library sources.
    pub library: Option<PathBuf>,
    /// One subdirectory of example pairs per metric store id.
    pub examples: Option<PathBuf>,
    pub max_chunk: usize,
    pub overlap: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexSummary {
    pub syntax_chunks: usize,
    pub library_chunks: usize,
    pub examples: BTreeMap<String, usize>,
}

fn files_with_ext(root: &Path, ext: &str) -> Result<Vec<PathBuf>, RetrievalError> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| RetrievalError::Io {
            path: root.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|x| x == ext) {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

fn chunk_files(
    root: &Path,
    ext: &str,
    max_chunk: usize,
    overlap: usize,
    split: fn(&str, &str, usize, usize) -> Result<Vec<Chunk>, RetrievalError>,
) -> Result<Vec<Chunk>, RetrievalError> {
    let mut chunks = Vec::new();
    for path in files_with_ext(root, ext)? {
        let text = fs::read_to_string(&path).map_err(|source| RetrievalError::Io {
            path: path.clone(),
            source,
        })?;
        let rel = path.strip_prefix(root).unwrap_or(&path).to_string_lossy().into_owned();
        chunks.extend(split(&text, &rel, max_chunk, overlap)?);
    }
    Ok(chunks)
}

/// Builds and saves the syntax, library and example stores under `out`.
pub fn build_index(sources: &IndexSources, embedder: &dyn Embedder, out: &Path) -> Result<IndexSummary, RetrievalError> {
    let (max_chunk, overlap) = (sources.max_chunk, sources.overlap);
    if overlap >= max_chunk {
        return Err(RetrievalError::BadConfig { max_chunk, overlap });
    }
    let mut summary = IndexSummary::default();
    if let Some(docs) = &sources.docs {
        let chunks = chunk_files(docs, "md", max_chunk, overlap, chunk_markdown_from)?;
        summary.syntax_chunks = chunks.len();
        VectorStore::build(chunks, embedder, max_chunk, overlap)?.save(&syntax_dir(out))?;
    }
    if let Some(lib) = &sources.library {
        let chunks = chunk_files(lib, "lean", max_chunk, overlap, chunk_theorem_corpus_from)?;
        summary.library_chunks = chunks.len();
        VectorStore::build(chunks, embedder, max_chunk, overlap)?.save(&library_dir(out))?;
    }
    if let Some(ex) = &sources.examples {
        let mut dirs: Vec<PathBuf> = fs::read_dir(ex)
            .map_err(|source| RetrievalError::Io {
                path: ex.clone(),
                source,
            })?
            .filter_map(Result::ok)
            .map(|e| e.path())
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let id = dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let pairs = ExamplePair::load_dir(&dir, &id)?;
            let keys: Vec<String> = pairs.iter().map(|p| p.before.clone()).collect();
            let chunks: Vec<Chunk> = pairs.iter().map(|p| p.to_chunk(&id)).collect();
            summary.examples.insert(id.clone(), chunks.len());
            VectorStore::build_keyed(chunks, &keys, embedder, max_chunk, overlap)?.save(&examples_dir(out, &id))?;
        }
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry() -> TheoremEntry {
        TheoremEntry {
            name: "t".into(),
            statement: "theorem t (a b : Nat) : a + b = b + a".into(),
            context: "import Mathlib".into(),
            initial_proof: parse_tactic_proof("omega").unwrap(),
            source_path: "t.lean".into(),
        }
    }

    fn write_corpus(root: &Path) {
        let docs = root.join("docs");
        fs::create_dir_all(&docs).unwrap();
        fs::write(docs.join("a.md"), "# Tactics\nUse simp.\n\n# Calc\nUse calc.\n").unwrap();
        let lib = root.join("lib");
        fs::create_dir_all(&lib).unwrap();
        fs::write(lib.join("n.lean"), "theorem add_comm' : 1 = 1 := rfl\n\nlemma two : 2 = 2 := rfl\n").unwrap();
        let ex = root.join("examples").join("length");
        fs::create_dir_all(&ex).unwrap();
        fs::write(ex.join("p1.before.lean"), "theorem p : 1 = 1 := by\n  skip\n  rfl").unwrap();
        fs::write(ex.join("p1.after.lean"), "theorem p : 1 = 1 := by\n  rfl").unwrap();
    }

    #[test]
    fn build_open_and_retrieve() {
        let tmp = tempfile::tempdir().unwrap();
        write_corpus(tmp.path());
        let sources = IndexSources {
            docs: Some(tmp.path().join("docs")),
            library: Some(tmp.path().join("lib")),
            examples: Some(tmp.path().join("examples")),
            max_chunk: 1000,
            overlap: 200,
        };
        let out = tmp.path().join("store");
        let summary = build_index(&sources, &HashingEmbedder::default(), &out).unwrap();
        assert_eq!(summary.syntax_chunks, 2);
        assert_eq!(summary.library_chunks, 2);
        assert_eq!(summary.examples["length"], 1);

        let r = Retriever::open(&out, Arc::new(HashingEmbedder::default()), DEFAULT_LAMBDA).unwrap();
        let e = entry();
        let got = r
            .retrieve_for_request(&e, &e.initial_proof, &[], &MetricDef::length(), RetrievalCounts::default())
            .unwrap();
        assert_eq!(got.examples.len(), 1);
        assert!(got.examples[0].text.starts_with("Input:"));
        assert_eq!(got.syntax_docs.len(), 2);
        assert_eq!(got.library_docs.len(), 2);

        let none = r
            .retrieve_for_request(&e, &e.initial_proof, &[], &MetricDef::length(), RetrievalCounts::zero())
            .unwrap();
        assert!(none.is_empty());

        let missing = r.retrieve_for_request(&e, &e.initial_proof, &[], &MetricDef::readability(), RetrievalCounts::default());
        assert!(matches!(missing, Err(RetrievalError::StoreMissing(_))));
    }

    #[test]
    fn rejects_foreign_embedder() {
        let tmp = tempfile::tempdir().unwrap();
        write_corpus(tmp.path());
        let sources = IndexSources {
            docs: Some(tmp.path().join("docs")),
            max_chunk: 1000,
            overlap: 200,
            ..Default::default()
        };
        let out = tmp.path().join("store");
        build_index(&sources, &HashingEmbedder::default(), &out).unwrap();
        assert!(Retriever::open(&out, Arc::new(HashingEmbedder::new(64)), 0.5).is_err());
    }
}
