//! Registry of stored initial designs keyed by space fingerprint.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::space::{ConfigSpace, Configuration, SpaceError, SpaceFingerprint};

/// Stored configurations used per matched space.
pub const STORED_CONFIGS: usize = 22;
/// Random configurations appended after the stored ones.
pub const RANDOM_CONFIGS: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("cannot read registry {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed registry: {0}")]
    Malformed(String),
    #[error("registry entry {entry}: {source}")]
    Entry { entry: usize, source: SpaceError },
    #[error("registry entry {entry}, config {config}: {source}")]
    Config {
        entry: usize,
        config: usize,
        source: SpaceError,
    },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryFile {
    entries: Vec<EntryFile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryFile {
    space: serde_json::Value,
    configs: Vec<Configuration>,
}

#[derive(Debug, Clone)]
struct Entry {
    space: ConfigSpace,
    configs: Vec<Configuration>,
}

#[derive(Debug, Clone, Default)]
pub struct Registry {
    entries: BTreeMap<SpaceFingerprint, Entry>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RegistryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(document: &str) -> Result<Self, RegistryError> {
        let file: RegistryFile =
            serde_json::from_str(document).map_err(|e| RegistryError::Malformed(e.to_string()))?;
        let mut registry = Registry::new();
        for (entry, raw) in file.entries.into_iter().enumerate() {
            let space = ConfigSpace::from_json(raw.space)
                .map_err(|source| RegistryError::Entry { entry, source })?;
            let configs = raw
                .configs
                .into_iter()
                .enumerate()
                .map(|(config, c)| {
                    space.normalize(&c).map_err(|source| RegistryError::Config {
                            entry,
                            config,
                            source,
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            registry.insert(space, configs);
        }
        Ok(registry)
    }

    /// Adds or replaces the design for `space`. Configurations must be valid.
    pub fn insert(&mut self, space: ConfigSpace, configs: Vec<Configuration>) {
        self.entries
            .insert(space.fingerprint(), Entry { space, configs });
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_json(&self) -> String {
        let file = RegistryFile {
            entries: self
                .entries
                .values()
                .map(|e| EntryFile {
                    space: e.space.to_json(),
                    configs: e.configs.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("registry serializes")
    }

    /// Stored configurations for an exactly matching space.
    pub fn match_space(&self, space: &ConfigSpace) -> Option<&[Configuration]> {
        self.entries
            .get(&space.fingerprint())
            .map(|e| e.configs.as_slice())
    }

    /// The 24-configuration initial design for a matched space: the stored
    /// list truncated or padded with random draws to 22, followed by 2 fresh
    /// random configurations.
    pub fn initial_design<R: Rng + ?Sized>(
        &self,
        space: &ConfigSpace,
        rng: &mut R,
    ) -> Option<Vec<Configuration>> {
        let stored = self.match_space(space)?;
        let mut design: Vec<Configuration> = stored.iter().take(STORED_CONFIGS).cloned().collect();
        while design.len() < STORED_CONFIGS + RANDOM_CONFIGS {
            design.push(space.sample_random(rng));
        }
        Some(design)
    }
}
