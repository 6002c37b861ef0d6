use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::RwLock;

use super::VerificationResult;
use crate::error::VerifierError;

/// Content-addressed store of verification results.
///
/// Always keeps an in-memory layer; with a directory it also persists one
/// JSON file per key. Entries are never evicted automatically.
pub struct ResultCache {
    memory: RwLock<HashMap<String, VerificationResult>>,
    dir: Option<PathBuf>,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl ResultCache {
    pub fn in_memory() -> Self {
        ResultCache {
            memory: RwLock::new(HashMap::new()),
            dir: None,
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self, VerifierError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ResultCache {
            memory: RwLock::new(HashMap::new()),
            dir: Some(dir),
        })
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Result<Option<VerificationResult>, VerifierError> {
        if let Some(hit) = self.memory.read().expect("cache lock").get(key) {
            return Ok(Some(hit.clone()));
        }
        let Some(path) = self.path(key) else {
            return Ok(None);
        };
        match fs::read(&path) {
            Ok(bytes) => match serde_json::from_slice::<VerificationResult>(&bytes) {
                Ok(result) => {
                    self.memory
                        .write()
                        .expect("cache lock")
                        .insert(key.to_string(), result.clone());
                    Ok(Some(result))
                }
                Err(e) => {
                    log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                    Ok(None)
                }
            },
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    pub fn put(&self, key: &str, result: &VerificationResult) -> Result<(), VerifierError> {
        self.memory
            .write()
            .expect("cache lock")
            .insert(key.to_string(), result.clone());
        let (Some(dir), Some(path)) = (self.dir.as_ref(), self.path(key)) else {
            return Ok(());
        };
        // write-then-rename so concurrent readers never see a partial file
        let tmp = dir.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let bytes = serde_json::to_vec_pretty(result).map_err(std::io::Error::other)?;
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, &path)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.memory.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verifier::ProofState;

    #[test]
    fn disk_round_trip_across_instances() {
        let dir = tempfile::tempdir().unwrap();
        let result = VerificationResult::solved(vec![ProofState::solved()]);
        {
            let cache = ResultCache::on_disk(dir.path()).unwrap();
            cache.put("abc", &result).unwrap();
        }
        let cache = ResultCache::on_disk(dir.path()).unwrap();
        assert_eq!(cache.get("abc").unwrap(), Some(result));
        assert_eq!(cache.get("missing").unwrap(), None);
        assert!(dir.path().join("abc.json").exists());
    }

    #[test]
    fn concurrent_writers() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResultCache::on_disk(dir.path()).unwrap();
        std::thread::scope(|s| {
            for i in 0..8 {
                let cache = &cache;
                s.spawn(move || {
                    let r = VerificationResult::failed(format!("e{}", i % 2));
                    cache.put(&format!("k{}", i % 2), &r).unwrap();
                    assert!(cache.get(&format!("k{}", i % 2)).unwrap().is_some());
                });
            }
        });
        assert_eq!(cache.len(), 2);
    }
}
