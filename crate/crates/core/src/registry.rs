//! Name-keyed registries of interchangeable strategies.
//!
//! Each strategy family defines a trait; implementations register a builder
//! under a stable name and are picked at runtime from configuration.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::Value;

use crate::error::{Error, Result};

pub type Builder<T> = fn(&Value) -> Result<Box<T>>;

struct Entry<T: ?Sized> {
    description: &'static str,
    build: Builder<T>,
}

pub struct Registry<T: ?Sized> {
    family: &'static str,
    entries: BTreeMap<&'static str, Entry<T>>,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(family: &'static str) -> Self {
        Self {
            family,
            entries: BTreeMap::new(),
        }
    }

    /// Registers a builder; a later registration under the same name replaces the earlier one.
    pub fn register(
        &mut self,
        name: &'static str,
        description: &'static str,
        build: Builder<T>,
    ) -> &mut Self {
        self.entries.insert(name, Entry { description, build });
        self
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn describe(&self, name: &str) -> Option<&'static str> {
        self.entries.get(name).map(|e| e.description)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn build(&self, name: &str, params: &Value) -> Result<Box<T>> {
        let entry = self.entries.get(name).ok_or_else(|| {
            Error::Config(format!(
                "unknown {} {name:?} (known: {})",
                self.family,
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        (entry.build)(params)
    }
}

impl<T: ?Sized> fmt::Debug for Registry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry")
            .field("family", &self.family)
            .field("names", &self.names().collect::<Vec<_>>())
            .finish()
    }
}

/// Reads an optional unsigned integer parameter.
pub(crate) fn param_usize(params: &Value, key: &str) -> Result<Option<usize>> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v.as_u64().map(|n| Some(n as usize)).ok_or_else(|| {
            Error::Config(format!("parameter {key:?} must be a non-negative integer"))
        }),
    }
}

/// Reads an optional float parameter.
pub(crate) fn param_f64(params: &Value, key: &str) -> Result<Option<f64>> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_f64()
            .map(Some)
            .ok_or_else(|| Error::Config(format!("parameter {key:?} must be a number"))),
    }
}
