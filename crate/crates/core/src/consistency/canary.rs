use std::sync::atomic::{AtomicU64, Ordering};

/// Write-interleaving detector for a single datum.
///
/// [`Canary::bump`] performs a deliberately non-atomic increment: read,
/// yield, write, yield, read back. If another writer touches the datum inside
/// that window the read-back differs (or an increment is lost), which exposes
/// missing mutual exclusion.
#[derive(Debug, Default)]
pub struct Canary {
    value: AtomicU64,
}

impl Canary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false when an interleaving write was observed.
    pub fn bump(&self) -> bool {
        let seen = self.value.load(Ordering::Relaxed);
        std::thread::yield_now();
        self.value.store(seen + 1, Ordering::Relaxed);
        std::thread::yield_now();
        self.value.load(Ordering::Relaxed) == seen + 1
    }

    pub fn get(&self) -> u64 {
        self.value.load(Ordering::Relaxed)
    }
}

impl Clone for Canary {
    fn clone(&self) -> Self {
        Canary { value: AtomicU64::new(self.get()) }
    }
}
