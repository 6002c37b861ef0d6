use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::chunk::Chunk;
use super::embed::Embedder;
use super::mmr::mmr_indices;
use crate::error::RetrievalError;

const MANIFEST: &str = "manifest.json";
const CHUNKS: &str = "chunks.jsonl";
const VECTORS: &str = "vectors.bin";
const EMBED_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub embedder_id: String,
    pub dim: usize,
    pub max_chunk: usize,
    pub overlap: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub chunk: Chunk,
    pub vector: Vec<f32>,
}

/// Embedded chunks with a fixed dimension. Read-only once built.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorStore {
    manifest: StoreManifest,
    entries: Vec<StoreEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RetrievalError + '_ {
    move |source| RetrievalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl VectorStore {
    /// Embeds `chunks` with `embedder`, using each chunk's text.
    pub fn build(
        chunks: Vec<Chunk>,
        embedder: &dyn Embedder,
        max_chunk: usize,
        overlap: usize,
    ) -> Result<Self, RetrievalError> {
        let keys: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        Self::build_keyed(chunks, &keys, embedder, max_chunk, overlap)
    }

    /// Like [`VectorStore::build`], embedding `keys[i]` in place of chunk `i`'s text.
    pub fn build_keyed(
        chunks: Vec<Chunk>,
        keys: &[String],
        embedder: &dyn Embedder,
        max_chunk: usize,
        overlap: usize,
    ) -> Result<Self, RetrievalError> {
        assert_eq!(chunks.len(), keys.len(), "one embedding key per chunk");
        let mut vectors = Vec::with_capacity(chunks.len());
        for batch in keys.chunks(EMBED_BATCH) {
            let texts: Vec<&str> = batch.iter().map(String::as_str).collect();
            vectors.extend(embedder.embed(&texts)?);
        }
        let dim = embedder.dim();
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(RetrievalError::DimensionMismatch {
                expected: dim,
                actual: v.len(),
            });
        }
        let entries: Vec<StoreEntry> = chunks
            .into_iter()
            .zip(vectors)
            .map(|(chunk, vector)| StoreEntry { chunk, vector })
            .collect();
        Ok(VectorStore {
            manifest: StoreManifest {
                embedder_id: embedder.id(),
                dim,
                max_chunk,
                overlap,
                count: entries.len(),
            },
            entries,
        })
    }

    pub fn manifest(&self) -> &StoreManifest {
        &self.manifest
    }

    pub fn embedder_id(&self) -> &str {
        &self.manifest.embedder_id
    }

    pub fn dim(&self) -> usize {
        self.manifest.dim
    }

    pub fn entries(&self) -> &[StoreEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Writes `manifest.json`, `chunks.jsonl` and `vectors.bin`
    /// (little-endian `f32`, row-major) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), RetrievalError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let manifest_path = dir.join(MANIFEST);
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        fs::write(&manifest_path, json).map_err(io_err(&manifest_path))?;

        let chunks_path = dir.join(CHUNKS);
        let mut w = BufWriter::new(fs::File::create(&chunks_path).map_err(io_err(&chunks_path))?);
        for e in &self.entries {
            let line = serde_json::to_string(&e.chunk).expect("chunk serializes");
            writeln!(w, "{line}").map_err(io_err(&chunks_path))?;
        }
        w.flush().map_err(io_err(&chunks_path))?;

        let vectors_path = dir.join(VECTORS);
        let mut bytes = Vec::with_capacity(self.entries.len() * self.dim() * 4);
        for e in &self.entries {
            for x in &e.vector {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        fs::write(&vectors_path, bytes).map_err(io_err(&vectors_path))
    }

    pub fn load(dir: &Path) -> Result<Self, RetrievalError> {
        let manifest_path = dir.join(MANIFEST);
        if !manifest_path.is_file() {
            return Err(RetrievalError::StoreMissing(dir.display().to_string()));
        }
        let text = fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        let manifest: StoreManifest =
            serde_json::from_str(&text).map_err(|e| RetrievalError::Corrupt(format!("{}: {e}", manifest_path.display())))?;

        let chunks_path = dir.join(CHUNKS);
        let reader = BufReader::new(fs::File::open(&chunks_path).map_err(io_err(&chunks_path))?);
        let mut chunks = Vec::with_capacity(manifest.count);
        for line in reader.lines() {
            let line = line.map_err(io_err(&chunks_path))?;
            if line.trim().is_empty() {
                continue;
            }
            let chunk: Chunk =
                serde_json::from_str(&line).map_err(|e| RetrievalError::Corrupt(format!("{}: {e}", chunks_path.display())))?;
            chunks.push(chunk);
        }

        let vectors_path = dir.join(VECTORS);
        let bytes = fs::read(&vectors_path).map_err(io_err(&vectors_path))?;
        if chunks.len() != manifest.count || bytes.len() != manifest.count * manifest.dim * 4 {
            return Err(RetrievalError::Corrupt(format!(
                "{}: manifest lists {} entries of dimension {}, found {} chunks and {} vector bytes",
                dir.display(),
                manifest.count,
                manifest.dim,
                chunks.len(),
                bytes.len()
            )));
        }
        let floats: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let entries = chunks
            .into_iter()
            .enumerate()
            .map(|(i, chunk)| StoreEntry {
                chunk,
                vector: floats[i * manifest.dim..(i + 1) * manifest.dim].to_vec(),
            })
            .collect();
        Ok(VectorStore { manifest, entries })
    }

    /// MMR selection of up to `k` chunks for `query`.
    pub fn mmr_select(&self, query: &[f32], k: usize, lambda: f64) -> Result<Vec<&Chunk>, RetrievalError> {
        mmr_select(query, self, k, lambda)
    }
}

/// MMR selection of up to `k` chunks from `store`, in selection order.
pub fn mmr_select<'a>(
    query: &[f32],
    store: &'a VectorStore,
    k: usize,
    lambda: f64,
) -> Result<Vec<&'a Chunk>, RetrievalError> {
    if query.len() != store.dim() {
        return Err(RetrievalError::DimensionMismatch {
            expected: store.dim(),
            actual: query.len(),
        });
    }
    let vectors: Vec<&[f32]> = store.entries.iter().map(|e| e.vector.as_slice()).collect();
    Ok(mmr_indices(query, &vectors, k, lambda)?
        .into_iter()
        .map(|i| &store.entries[i].chunk)
        .collect())
}

/// Sub-store locations under a store root.
pub fn syntax_dir(root: &Path) -> PathBuf {
    root.join("syntax")
}

pub fn library_dir(root: &Path) -> PathBuf {
    root.join("library")
}

pub fn examples_dir(root: &Path, store_id: &str) -> PathBuf {
    root.join("examples").join(store_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::chunk::{ChunkKind, ChunkSource};
    use crate::retrieval::embed::HashingEmbedder;

    fn chunk(text: &str) -> Chunk {
        Chunk {
            text: text.into(),
            source: ChunkSource {
                path: "doc.md".into(),
                offset: 0,
            },
            kind: ChunkKind::SyntaxDoc,
        }
    }

    #[test]
    fn save_load_round_trip() {
        let e = HashingEmbedder::default();
        let store = VectorStore::build(vec![chunk("simp only [foo]"), chunk("## calc ⊢ a = b")], &e, 1000, 200).unwrap();
        let dir = tempfile::tempdir().unwrap();
        store.save(dir.path()).unwrap();
        let back = VectorStore::load(dir.path()).unwrap();
        assert_eq!(back, store);
        assert_eq!(back.embedder_id(), "hashing-trigram-256");
    }

    #[test]
    fn missing_and_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(VectorStore::load(dir.path()), Err(RetrievalError::StoreMissing(_))));
        let e = HashingEmbedder::default();
        let store = VectorStore::build(vec![chunk("x y z")], &e, 1000, 200).unwrap();
        store.save(dir.path()).unwrap();
        fs::write(dir.path().join(VECTORS), [0u8; 12]).unwrap();
        assert!(matches!(VectorStore::load(dir.path()), Err(RetrievalError::Corrupt(_))));
    }

    #[test]
    fn select_clamps_to_store_size() {
        let e = HashingEmbedder::default();
        let store = VectorStore::build(vec![chunk("intro x"), chunk("exact h")], &e, 1000, 200).unwrap();
        let q = e.embed_text("intro y");
        let got = store.mmr_select(&q, 5, 0.5).unwrap();
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].text, "intro x");
        assert!(matches!(
            store.mmr_select(&[1.0], 1, 0.5),
            Err(RetrievalError::DimensionMismatch { .. })
        ));
    }
}
