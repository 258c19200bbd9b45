//! Memoized covariance bundles, keyed by the exact bits of `(t0, t)`.
//!
//! Keys are never quantized: difference quotients evaluate at times a few ulps
//! apart and must not be handed each other's bundle.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use kfp_core::covariance::{self, CovarianceBundle};
use kfp_core::operator::OperatorSpec;
use kfp_core::Result;

/// Cache bound to one operator. Concurrent lookups share a read lock;
/// insertion takes the write lock only to publish a finished bundle.
pub struct CovarianceCache<'a> {
    spec: &'a OperatorSpec,
    entries: RwLock<HashMap<(u64, u64), Arc<CovarianceBundle>>>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<'a> CovarianceCache<'a> {
    pub fn new(spec: &'a OperatorSpec) -> Self {
        Self {
            spec,
            entries: RwLock::new(HashMap::new()),
            hits: AtomicU64::new(0),
            misses: AtomicU64::new(0),
        }
    }

    pub fn spec(&self) -> &OperatorSpec {
        self.spec
    }

    /// `C(t, t0)` and its derived matrices.
    pub fn get(&self, t0: f64, t: f64) -> Result<Arc<CovarianceBundle>> {
        let key = (t0.to_bits(), t.to_bits());
        if let Some(b) = self.entries.read().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(Arc::clone(b));
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        // Built outside the lock; a racing builder produces the identical
        // bundle, and the first one published wins.
        let built = Arc::new(covariance::covariance(self.spec, t0, t)?);
        let mut entries = self.entries.write().expect("cache lock");
        Ok(Arc::clone(entries.entry(key).or_insert(built)))
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(hits, misses)` so far.
    pub fn stats(&self) -> (u64, u64) {
        (self.hits.load(Ordering::Relaxed), self.misses.load(Ordering::Relaxed))
    }
}
