//! Shared data table: string-keyed global state.
//!
//! Values are immutable snapshots behind an `Arc`; a write swaps the whole
//! entry, so a reader always sees some complete value.

use std::any::Any;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::RwLock;
use thiserror::Error;

pub type Value = Arc<dyn Any + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SdtError {
    #[error("missing key {0:?}")]
    MissingKey(String),
    #[error("value at {0:?} has a different type")]
    TypeMismatch(String),
}

#[derive(Default)]
pub struct SharedDataTable {
    entries: RwLock<HashMap<String, Value>>,
    version: AtomicU64,
}

impl SharedDataTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set<T: Any + Send + Sync>(&self, key: impl Into<String>, value: T) {
        self.set_value(key, Arc::new(value));
    }

    pub fn set_value(&self, key: impl Into<String>, value: Value) {
        let mut map = self.entries.write();
        map.insert(key.into(), value);
        self.version.fetch_add(1, Ordering::AcqRel);
    }

    pub fn get<T: Any + Send + Sync>(&self, key: &str) -> Result<Arc<T>, SdtError> {
        let value = self.get_value(key)?;
        value.downcast::<T>().map_err(|_| SdtError::TypeMismatch(key.to_string()))
    }

    /// Copy of the stored value.
    pub fn get_cloned<T: Any + Send + Sync + Clone>(&self, key: &str) -> Result<T, SdtError> {
        self.get::<T>(key).map(|v| (*v).clone())
    }

    pub fn get_value(&self, key: &str) -> Result<Value, SdtError> {
        self.entries.read().get(key).cloned().ok_or_else(|| SdtError::MissingKey(key.to_string()))
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.read().contains_key(key)
    }

    /// Number of writes so far.
    pub fn version(&self) -> u64 {
        self.version.load(Ordering::Acquire)
    }

    pub fn view(&self) -> SdtView<'_> {
        SdtView { table: self }
    }
}

impl std::fmt::Debug for SharedDataTable {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut keys: Vec<String> = self.entries.read().keys().cloned().collect();
        keys.sort();
        f.debug_struct("SharedDataTable").field("keys", &keys).field("version", &self.version()).finish()
    }
}

/// Read-only handle given to update functions and termination functions.
#[derive(Clone, Copy)]
pub struct SdtView<'a> {
    table: &'a SharedDataTable,
}

impl<'a> SdtView<'a> {
    pub fn get<T: Any + Send + Sync>(&self, key: &str) -> Result<Arc<T>, SdtError> {
        self.table.get(key)
    }

    pub fn get_cloned<T: Any + Send + Sync + Clone>(&self, key: &str) -> Result<T, SdtError> {
        self.table.get_cloned(key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.table.contains(key)
    }

    pub fn version(&self) -> u64 {
        self.table.version()
    }
}
