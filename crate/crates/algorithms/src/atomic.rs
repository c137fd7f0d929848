use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

/// An `f64` cell with atomic load, store and add.
///
/// Payloads written under vertex consistency are shared between
/// overlapping updates, so they need interior mutability. `Clone` copies
/// the current value, which lets these cells live inside graph payloads.
#[derive(Default)]
pub struct AtomicF64(AtomicU64);

impl AtomicF64 {
    pub fn new(x: f64) -> Self {
        AtomicF64(AtomicU64::new(x.to_bits()))
    }

    pub fn load(&self) -> f64 {
        f64::from_bits(self.0.load(Ordering::Acquire))
    }

    pub fn store(&self, x: f64) {
        self.0.store(x.to_bits(), Ordering::Release)
    }

    /// Adds `dx` and returns the previous value.
    pub fn fetch_add(&self, dx: f64) -> f64 {
        let mut cur = self.0.load(Ordering::Relaxed);
        loop {
            let next = (f64::from_bits(cur) + dx).to_bits();
            match self.0.compare_exchange_weak(cur, next, Ordering::AcqRel, Ordering::Relaxed) {
                Ok(prev) => return f64::from_bits(prev),
                Err(actual) => cur = actual,
            }
        }
    }
}

impl Clone for AtomicF64 {
    fn clone(&self) -> Self {
        AtomicF64::new(self.load())
    }
}

impl fmt::Debug for AtomicF64 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&self.load(), f)
    }
}

impl From<f64> for AtomicF64 {
    fn from(x: f64) -> Self {
        AtomicF64::new(x)
    }
}
