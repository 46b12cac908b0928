//! JSON snapshot persistence for the whole engine. Sessions and pending
//! sign-in challenges are not persisted.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chain::{Account, Chain, ChainSnapshot};
use crate::clock::Clock;
use crate::engine::{Directory, Engine, EngineConfig, StudentProfile, UniversityProfile, UniversityRecord};
use crate::error::EngineError;
use crate::registry::{Registry, RegistrySnapshot, TokenListSuccessEvent};
use crate::store::{write_atomic, ContentStore, StoredObject};
use crate::types::Address;

pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UniversityEntry {
    pub profile: UniversityProfile,
    pub secret_key: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EngineSnapshot {
    pub version: u32,
    pub universities: Vec<UniversityEntry>,
    pub students: Vec<StudentProfile>,
    pub registry: RegistrySnapshot,
    pub events: Vec<TokenListSuccessEvent>,
    pub chain: ChainSnapshot,
    pub store: Vec<StoredObject>,
}

fn corrupt(msg: impl std::fmt::Display) -> EngineError {
    EngineError::CorruptState(msg.to_string())
}

impl Engine {
    pub fn snapshot(&self) -> EngineSnapshot {
        let _w = self.writer.lock().unwrap();
        self.snapshot_locked()
    }

    /// Caller must hold the writer lock.
    pub(crate) fn snapshot_locked(&self) -> EngineSnapshot {
        let dir = self.directory.read().unwrap();
        EngineSnapshot {
            version: SNAPSHOT_VERSION,
            universities: dir
                .universities
                .values()
                .map(|u| UniversityEntry {
                    profile: u.profile.clone(),
                    secret_key: u.account.secret_hex(),
                })
                .collect(),
            students: dir.students.values().cloned().collect(),
            registry: self.registry.snapshot(),
            events: self.registry.events(),
            chain: self.chain.snapshot(),
            store: self.store.objects(),
        }
    }

    pub fn snapshot_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(&self.snapshot()).expect("snapshot serializes")
    }

    /// Atomically writes the snapshot to `path` (temp file then rename).
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), EngineError> {
        let _w = self.writer.lock().unwrap();
        self.save_locked(path.as_ref())
    }

    pub(crate) fn save_locked(&self, path: &Path) -> Result<(), EngineError> {
        let bytes = serde_json::to_vec_pretty(&self.snapshot_locked()).expect("snapshot serializes");
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        write_atomic(path, &bytes)?;
        Ok(())
    }

    /// Rebuilds an engine from a snapshot, validating chain linkage, content
    /// addresses, registry invariants and the profile directory.
    pub fn from_snapshot(
        clock: Arc<dyn Clock>,
        config: EngineConfig,
        snap: EngineSnapshot,
        store: Option<ContentStore>,
    ) -> Result<Engine, EngineError> {
        if snap.version != SNAPSHOT_VERSION {
            return Err(corrupt(format!("unsupported snapshot version {}", snap.version)));
        }
        let chain = Arc::new(Chain::restore(clock.clone(), snap.chain).map_err(corrupt)?);
        let store = store.unwrap_or_else(|| ContentStore::in_memory(clock.clone()));
        store.restore(snap.store).map_err(corrupt)?;
        let store = Arc::new(store);
        let registry = Registry::restore(chain.clone(), store.clone(), snap.registry, snap.events)
            .map_err(corrupt)?;

        let mut directory = Directory::default();
        let mut addresses: BTreeMap<Address, String> = BTreeMap::new();
        for entry in snap.universities {
            let account = Account::from_secret_hex(&entry.secret_key)
                .ok_or_else(|| corrupt("bad university key"))?;
            let p = &entry.profile;
            if account.address() != p.address || account.public_key_hex() != p.public_key {
                return Err(corrupt(format!("university {} key does not match profile", p.university_id)));
            }
            if !chain.is_known(&p.address) {
                return Err(corrupt(format!("university {} missing from chain", p.university_id)));
            }
            if addresses.insert(p.address, p.university_id.clone()).is_some()
                || directory.universities.contains_key(&p.university_id)
            {
                return Err(corrupt(format!("duplicate university {}", p.university_id)));
            }
            directory.universities.insert(
                p.university_id.clone(),
                UniversityRecord {
                    profile: entry.profile,
                    account,
                },
            );
        }
        for s in snap.students {
            if !directory.universities.contains_key(&s.university_id) {
                return Err(corrupt(format!("student {} references unknown university", s.student_id)));
            }
            if s.issued_credentials.iter().any(|c| !store.contains(c)) {
                return Err(corrupt(format!("student {} credential missing from store", s.student_id)));
            }
            let key = (s.university_id.clone(), s.student_id.clone());
            if directory.students.insert(key, s).is_some() {
                return Err(corrupt("duplicate student"));
            }
        }
        Ok(Engine::assemble(clock, config, chain, store, Some(registry), directory))
    }

    pub fn from_snapshot_bytes(
        clock: Arc<dyn Clock>,
        config: EngineConfig,
        bytes: &[u8],
    ) -> Result<Engine, EngineError> {
        let snap: EngineSnapshot = serde_json::from_slice(bytes).map_err(corrupt)?;
        Self::from_snapshot(clock, config, snap, None)
    }

    pub fn load(clock: Arc<dyn Clock>, config: EngineConfig, path: impl AsRef<Path>) -> Result<Engine, EngineError> {
        let bytes = fs::read(path)?;
        Self::from_snapshot_bytes(clock, config, &bytes)
    }

    /// Loads `config.state_path` if it exists, otherwise starts fresh.
    pub fn open(clock: Arc<dyn Clock>, config: EngineConfig) -> Result<Engine, EngineError> {
        match &config.state_path {
            Some(path) if path.exists() => {
                let path = path.clone();
                Self::load(clock, config, path)
            }
            _ => Ok(Engine::new(clock, config)),
        }
    }
}
