use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompletionRequest, GatewayError};

/// SHA-256 over the length-prefixed key tuple (prompt, temperature, max_tokens, model_id).
pub fn cache_key(request: &CompletionRequest) -> String {
    let mut h = Sha256::new();
    h.update((request.prompt.len() as u64).to_le_bytes());
    h.update(request.prompt.as_bytes());
    h.update(request.temperature.to_bits().to_le_bytes());
    h.update(request.max_tokens.to_le_bytes());
    h.update((request.model_id.len() as u64).to_le_bytes());
    h.update(request.model_id.as_bytes());
    hex::encode(h.finalize())
}

fn checksum(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    checksum: String,
    text: String,
}

/// Directory of `<key>.json` entries, written atomically.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    dir: PathBuf,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| GatewayError::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Result<Option<String>, GatewayError> {
        let path = self.entry_path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(GatewayError::Io(e.to_string())),
        };
        let corrupt = |reason: String| GatewayError::CacheCorrupt {
            path: path.clone(),
            reason,
        };
        let entry: CacheEntry = serde_json::from_slice(&bytes).map_err(|e| corrupt(e.to_string()))?;
        if entry.key != key {
            return Err(corrupt(format!("entry is keyed {}", entry.key)));
        }
        if checksum(&entry.text) != entry.checksum {
            return Err(corrupt("checksum mismatch".into()));
        }
        Ok(Some(entry.text))
    }

    pub fn put(&self, key: &str, text: &str) -> Result<(), GatewayError> {
        let entry = CacheEntry {
            key: key.to_string(),
            checksum: checksum(text),
            text: text.to_string(),
        };
        let io = |e: std::io::Error| GatewayError::Io(e.to_string());
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        serde_json::to_writer(&mut tmp, &entry).map_err(|e| GatewayError::Io(e.to_string()))?;
        tmp.flush().map_err(io)?;
        tmp.persist(self.entry_path(key))
            .map_err(|e| GatewayError::Io(e.error.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Gateway, ModelParams};
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn req(prompt: &str, temperature: f64) -> CompletionRequest {
        let params = ModelParams {
            temperature,
            ..Default::default()
        };
        CompletionRequest::new(prompt, &params).unwrap()
    }

    #[test]
    fn same_request_twice_hits_the_cache() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let gw = Gateway::scripted(["answer"]);
        let a = gw.cached_complete(&req("p", 0.0), &cache).unwrap();
        let b = gw.cached_complete(&req("p", 0.0), &cache).unwrap();
        assert!(!a.from_cache && b.from_cache);
        assert_eq!(a.text, b.text);
    }

    #[test]
    fn temperature_changes_the_key() {
        assert_ne!(cache_key(&req("p", 0.0)), cache_key(&req("p", 0.7)));
    }

    #[test]
    fn corrupted_entry_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ResponseCache::open(dir.path()).unwrap();
        let key = cache_key(&req("p", 0.0));
        cache.put(&key, "stored completion").unwrap();
        let path = cache.entry_path(&key);
        let mut bytes = fs::read(&path).unwrap();
        let at = bytes.windows(6).position(|w| w == b"stored").unwrap();
        bytes[at] = b'X';
        fs::write(&path, bytes).unwrap();
        assert!(matches!(cache.get(&key), Err(GatewayError::CacheCorrupt { .. })));

        let gw = Gateway::scripted(["fresh"]);
        assert!(matches!(
            gw.cached_complete(&req("p", 0.0), &cache),
            Err(GatewayError::CacheCorrupt { .. })
        ));
    }

    #[test]
    fn no_collisions_over_many_distinct_requests() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut tuples = HashSet::new();
        let mut keys = HashSet::new();
        while tuples.len() < 100_000 {
            let prompt: String = (0..rng.random_range(1..12))
                .map(|_| rng.random_range(b'a'..=b'e') as char)
                .collect();
            let temperature = rng.random_range(0..4) as f64 * 0.25;
            let max_tokens = rng.random_range(1..4u32);
            let model = ["m1", "m2"][rng.random_range(0..2)];
            if tuples.insert((prompt.clone(), temperature.to_bits(), max_tokens, model)) {
                let r = CompletionRequest {
                    prompt,
                    temperature,
                    max_tokens,
                    model_id: model.into(),
                };
                assert!(keys.insert(cache_key(&r)), "collision");
            }
        }
    }

    proptest! {
        #[test]
        fn key_is_a_function_of_the_tuple(prompt in ".{1,40}", t in 0.0f64..2.0, n in 1u32..5000) {
            let params = ModelParams { temperature: t, max_tokens: n, model_id: "m".into() };
            let a = CompletionRequest::new(prompt.clone(), &params);
            prop_assume!(a.is_ok());
            let b = CompletionRequest::new(prompt, &params).unwrap();
            prop_assert_eq!(cache_key(&a.unwrap()), cache_key(&b));
        }
    }
}
