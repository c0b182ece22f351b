use std::collections::{HashMap, HashSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use clozebias_core::lm::{sentence_id, LogprobProvider, SentenceScore};
use clozebias_core::ProviderError;

/// Memoizes another provider by sentence id. Reads share the lock; only a
/// miss takes it exclusively.
pub struct CachedProvider<P> {
    inner: P,
    cache: RwLock<HashMap<String, SentenceScore>>,
    inner_calls: AtomicUsize,
}

impl<P: LogprobProvider> CachedProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            cache: RwLock::new(HashMap::new()),
            inner_calls: AtomicUsize::new(0),
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    /// Sentences the wrapped provider has been asked for.
    pub fn inner_calls(&self) -> usize {
        self.inner_calls.load(Ordering::Relaxed)
    }

    fn lookup(&self, key: &str) -> Option<SentenceScore> {
        self.cache.read().unwrap_or_else(|e| e.into_inner()).get(key).cloned()
    }

    fn store(&self, key: String, score: SentenceScore) {
        self.cache
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .entry(key)
            .or_insert(score);
    }

    /// Scores every distinct uncached sentence through the inner
    /// provider's batch path; stops at the first failure.
    pub fn prefetch(&self, texts: &[&str]) -> Result<(), ProviderError> {
        let mut seen = HashSet::new();
        let missing: Vec<&str> = texts
            .iter()
            .copied()
            .filter(|t| seen.insert(*t) && self.lookup(&sentence_id(self.inner.model_id(), t)).is_none())
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        self.inner_calls.fetch_add(missing.len(), Ordering::Relaxed);
        for (text, result) in missing.iter().zip(self.inner.score_many(&missing)) {
            self.store(sentence_id(self.inner.model_id(), text), result?);
        }
        Ok(())
    }
}

impl<P: LogprobProvider> LogprobProvider for CachedProvider<P> {
    fn model_id(&self) -> &str {
        self.inner.model_id()
    }

    fn score(&self, text: &str) -> Result<SentenceScore, ProviderError> {
        let key = sentence_id(self.inner.model_id(), text);
        if let Some(hit) = self.lookup(&key) {
            return Ok(hit);
        }
        self.inner_calls.fetch_add(1, Ordering::Relaxed);
        let score = self.inner.score(text)?;
        self.store(key, score.clone());
        Ok(score)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::FileStore;
    use clozebias_core::mock::MockLm;
    use std::path::Path;

    #[test]
    fn second_call_hits_cache() {
        let store = FileStore::from_scores(Path::new("x"), vec![MockLm::default().score_text("a b")]).unwrap();
        let cached = CachedProvider::new(store);
        let first = cached.score("a b").unwrap();
        let second = cached.score("a b").unwrap();
        assert_eq!(first, second);
        assert_eq!(cached.inner_calls(), 1);
        assert!(cached.score("zz").is_err());
    }

    #[test]
    fn cache_is_transparent() {
        let lm = MockLm::new(3);
        let cached = CachedProvider::new(lm.clone());
        cached.prefetch(&["x y", "y z"]).unwrap();
        for t in ["x y", "y z", "q"] {
            assert_eq!(cached.score(t).unwrap(), lm.score(t).unwrap());
        }
        assert_eq!(cached.inner_calls(), 3);
    }
}
