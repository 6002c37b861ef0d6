//! Theorem ingestion from Lean source trees.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walkdir::WalkDir;

use crate::error::{BenchError, ParseError};
use crate::proof_model::{parse_tactic_proof, render_at, split_tactic_block, TacticProof, TheoremEntry, DEFAULT_INDENT};
use crate::verifier::{is_correct, Verifier};

pub const PROOF_START_MARKER: &str = "-- PROOF START";
pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub entry: TheoremEntry,
    pub dataset_id: String,
    /// Byte offset in the source file where the proof begins, when the
    /// proof was located by a `-- PROOF START` marker.
    pub proof_start: Option<usize>,
}

/// Optional `manifest.toml` at a dataset root selecting declarations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub id: Option<String>,
    #[serde(default, rename = "file")]
    pub files: Vec<ManifestFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: PathBuf,
    /// Declarations to take from the file; all of them when absent.
    pub declarations: Option<Vec<String>>,
}

const MODIFIERS: &[&str] = &["private", "protected", "nonrec", "noncomputable"];

/// Name of the theorem or lemma declared on `line`, if it starts one.
fn declared_name(line: &str) -> Option<&str> {
    let mut rest = line;
    loop {
        rest = rest.trim_start();
        if rest.starts_with("@[") {
            rest = &rest[rest.find(']')? + 1..];
            continue;
        }
        match MODIFIERS.iter().find(|m| rest.strip_prefix(**m).is_some_and(|r| r.starts_with(' '))) {
            Some(m) => rest = &rest[m.len()..],
            None => break,
        }
    }
    let rest = rest
        .strip_prefix("theorem ")
        .or_else(|| rest.strip_prefix("lemma "))?
        .trim_start();
    let end = rest
        .find(|c: char| c.is_whitespace() || matches!(c, ':' | '(' | '{' | '['))
        .unwrap_or(rest.len());
    (end > 0).then(|| &rest[..end])
}

/// Splits one source file into its tactic-proved theorems and lemmas, in
/// declaration order. Term-mode declarations are skipped.
pub fn extract_theorems(source: &str, path: &str) -> Result<Vec<(TheoremEntry, Option<usize>)>, ParseError> {
    Ok(scan(source, path)?.into_iter().map(|d| (d.entry, d.marker)).collect())
}

struct Scanned {
    entry: TheoremEntry,
    marker: Option<usize>,
    /// Byte range of the proof text, trailing whitespace excluded.
    proof: std::ops::Range<usize>,
}

fn scan(source: &str, path: &str) -> Result<Vec<Scanned>, ParseError> {
    let mut line_starts = Vec::new();
    let mut pos = 0;
    for line in source.split_inclusive('\n') {
        line_starts.push(pos);
        pos += line.len();
    }
    let lines: Vec<&str> = source.lines().collect();
    let at_col0 = |l: &str| !l.trim().is_empty() && !l.starts_with(char::is_whitespace);

    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.starts_with(char::is_whitespace) {
            continue;
        }
        let Some(name) = declared_name(line) else {
            continue;
        };
        let start = line_starts[i];
        // The declaration runs until the next line that starts at column 0.
        let end_line = (i + 1..lines.len()).find(|&j| at_col0(lines[j])).unwrap_or(lines.len());
        let end = line_starts.get(end_line).copied().unwrap_or(source.len());
        let decl = &source[start..end];
        let Some((header, body)) = split_tactic_block(decl) else {
            continue;
        };
        let body_offset = start + (decl.len() - body.len());
        let (proof_text, proof_start) = match body.find(PROOF_START_MARKER) {
            Some(m) => {
                let after = &body[m..];
                let skip = after.find('\n').map_or(after.len(), |n| n + 1);
                (&after[skip..], Some(body_offset + m + skip))
            }
            None => (body, None),
        };
        let proof = parse_tactic_proof(proof_text)?;
        let proof_from = proof_start.unwrap_or(body_offset);
        let proof_range = proof_from..proof_from + proof_text.trim_end().len();
        out.push(Scanned {
            entry: TheoremEntry {
                name: name.to_string(),
                statement: header.trim_end().to_string(),
                context: source[..start].to_string(),
                initial_proof: proof,
                source_path: path.to_string(),
            },
            marker: proof_start,
            proof: proof_range,
        });
    }
    Ok(out)
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn lean_files(root: &Path) -> Result<Vec<PathBuf>, BenchError> {
    let mut out = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| BenchError::Io {
            path: root.to_path_buf(),
            source: e.into(),
        })?;
        if entry.file_type().is_file() && entry.path().extension().is_some_and(|x| x == "lean") {
            out.push(entry.into_path());
        }
    }
    Ok(out)
}

/// Loads every tactic-proved theorem under `root` (or the declarations the
/// root's `manifest.toml` selects). With a verifier, each initial proof is
/// checked and any failure rejects the dataset.
pub fn load_dataset(root: &Path, verifier: Option<&Verifier>) -> Result<Vec<DatasetEntry>, BenchError> {
    if !root.exists() {
        return Err(BenchError::Io {
            path: root.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "dataset path does not exist"),
        });
    }
    let manifest_path = root.join(MANIFEST_FILE);
    let manifest = if root.is_dir() && manifest_path.is_file() {
        let text = fs::read_to_string(&manifest_path).map_err(io(&manifest_path))?;
        Some(toml::from_str::<Manifest>(&text).map_err(|e| BenchError::Manifest(e.to_string()))?)
    } else {
        None
    };
    let default_id = root
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("dataset")
        .to_string();
    let dataset_id = manifest.as_ref().and_then(|m| m.id.clone()).unwrap_or(default_id);

    let selections: Vec<(PathBuf, Option<Vec<String>>)> = match &manifest {
        Some(m) => m
            .files
            .iter()
            .map(|f| (root.join(&f.path), f.declarations.clone()))
            .collect(),
        None if root.is_file() => vec![(root.to_path_buf(), None)],
        None => lean_files(root)?.into_iter().map(|p| (p, None)).collect(),
    };

    let mut entries = Vec::new();
    for (path, wanted) in selections {
        let source = fs::read_to_string(&path).map_err(io(&path))?;
        let rel = if root.is_dir() {
            path.strip_prefix(root).unwrap_or(&path)
        } else {
            path.file_name().map_or(path.as_path(), Path::new)
        };
        let found = extract_theorems(&source, &rel.to_string_lossy())?;
        match wanted {
            None => entries.extend(found),
            Some(names) => {
                let mut by_name: BTreeMap<String, (TheoremEntry, Option<usize>)> =
                    found.into_iter().map(|(e, s)| (e.name.clone(), (e, s))).collect();
                for n in names {
                    let hit = by_name.remove(&n).ok_or_else(|| BenchError::UnknownDeclaration(n.clone()))?;
                    entries.push(hit);
                }
            }
        }
    }
    if entries.is_empty() {
        return Err(BenchError::NoTheoremsFound(root.to_path_buf()));
    }
    if let Some(v) = verifier {
        let mut failed = Vec::new();
        for (e, _) in &entries {
            match v.verify(e, &e.initial_proof) {
                Ok(r) if is_correct(&r) => {}
                Ok(r) => failed.push(format!("{} ({})", e.name, r.error_messages().join("; "))),
                Err(err) => failed.push(format!("{} ({err})", e.name)),
            }
        }
        if !failed.is_empty() {
            return Err(BenchError::IngestVerificationFailed(failed));
        }
    }
    Ok(entries
        .into_iter()
        .map(|(entry, proof_start)| DatasetEntry {
            entry,
            dataset_id: dataset_id.clone(),
            proof_start,
        })
        .collect())
}

/// Finds declaration `name` in a single source file.
pub fn find_declaration(source: &str, path: &str, name: &str) -> Result<TheoremEntry, BenchError> {
    extract_theorems(source, path)?
        .into_iter()
        .map(|(e, _)| e)
        .find(|e| e.name == name)
        .ok_or_else(|| BenchError::UnknownDeclaration(name.to_string()))
}

/// `source` with the proof of declaration `name` replaced by `proof`.
/// Everything outside the proof text, including a `-- PROOF START` marker,
/// is kept.
pub fn replace_proof(source: &str, path: &str, name: &str, proof: &TacticProof) -> Result<String, BenchError> {
    let d = scan(source, path)?
        .into_iter()
        .find(|d| d.entry.name == name)
        .ok_or_else(|| BenchError::UnknownDeclaration(name.to_string()))?;
    let text = &source[d.proof.clone()];
    let first = d.proof.start + (text.len() - text.trim_start().len());
    let line_start = source[..first].rfind('\n').map_or(0, |n| n + 1);
    let (from, rendered) = if source[line_start..first].trim().is_empty() {
        (line_start, render_at(proof, DEFAULT_INDENT, first - line_start))
    } else {
        // Proof on the declaration line, or empty.
        (d.proof.start, format!("\n{}", render_at(proof, DEFAULT_INDENT, DEFAULT_INDENT)))
    };
    Ok(format!("{}{}{}", &source[..from], rendered, &source[d.proof.end..]))
}

#[cfg(test)]
mod tests {
    use super::*;

    const THREE: &str = "import Mathlib\n\ntheorem a : 1 = 1 := by\n  rfl\n\n@[simp] lemma b (n : Nat) : n = n := by\n  rfl\n\ntheorem term : 2 = 2 := rfl\n\nprivate theorem c : 3 = 3 := by\n  skip\n  rfl\n";

    #[test]
    fn three_declarations_in_order() {
        let got = extract_theorems(THREE, "x.lean").unwrap();
        let names: Vec<_> = got.iter().map(|(e, _)| e.name.as_str()).collect();
        assert_eq!(names, ["a", "b", "c"]);
        assert_eq!(got[1].0.statement, "@[simp] lemma b (n : Nat) : n = n");
        assert_eq!(got[2].0.initial_proof.count(), 2);
        assert!(got[1].0.context.ends_with("rfl\n\n"));
        assert!(got[0].0.context.starts_with("import Mathlib"));
    }

    #[test]
    fn manifest_selects_and_reports_unknown() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.lean"), THREE).unwrap();
        fs::write(dir.path().join(MANIFEST_FILE), "id = \"demo\"\n[[file]]\npath = \"x.lean\"\ndeclarations = [\"c\", \"a\"]\n").unwrap();
        let ds = load_dataset(dir.path(), None).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds[0].entry.name, "c");
        assert_eq!(ds[0].dataset_id, "demo");
        fs::write(dir.path().join(MANIFEST_FILE), "[[file]]\npath = \"x.lean\"\ndeclarations = [\"zzz\"]\n").unwrap();
        assert!(matches!(load_dataset(dir.path(), None), Err(BenchError::UnknownDeclaration(_))));
    }

    #[test]
    fn proof_replacement_keeps_surroundings() {
        let new = parse_tactic_proof("simp").unwrap();
        let out = replace_proof(THREE, "x.lean", "c", &new).unwrap();
        assert!(out.ends_with("private theorem c : 3 = 3 := by\n  simp\n"));
        let out = replace_proof(THREE, "x.lean", "a", &new).unwrap();
        assert!(out.contains("theorem a : 1 = 1 := by\n  simp\n\n@[simp]"));
        let inline = "theorem s : 1 = 1 := by sorry\n";
        let out = replace_proof(inline, "x.lean", "s", &parse_tactic_proof("rfl").unwrap()).unwrap();
        assert_eq!(out, "theorem s : 1 = 1 := by\n  rfl\n");
    }

    #[test]
    fn empty_directory() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset(dir.path(), None), Err(BenchError::NoTheoremsFound(_))));
    }

    #[test]
    fn ingestion_rejects_failing_proofs() {
        use crate::verifier::{MockBackend, MockFixture};
        use std::sync::Arc;
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("x.lean"), THREE).unwrap();
        let mock = MockBackend::from_fixtures(vec![
            MockFixture::correct("theorem a : 1 = 1", "rfl", vec![]),
            MockFixture::correct("@[simp] lemma b (n : Nat) : n = n", "rfl", vec![]),
        ]);
        let v = Verifier::new(Arc::new(mock));
        match load_dataset(dir.path(), Some(&v)) {
            Err(BenchError::IngestVerificationFailed(names)) => {
                assert_eq!(names.len(), 1);
                assert!(names[0].starts_with("c "));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
