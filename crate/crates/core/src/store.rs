//! Content-addressed blob store. Objects are keyed by `cid:` + hex SHA-256 of their bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::types::{hex_bytes, serde_via_str, sha256, Digest, Millis, ParseError};

const INDEX_FILE: &str = "index.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("refusing to store empty content")]
    EmptyContent,
    #[error("no object for {0}")]
    NotFound(Cid),
    #[error("digest collision on {0}")]
    Collision(Cid),
    #[error("corrupt object {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cid(Digest);

impl Cid {
    pub const PREFIX: &'static str = "cid:";

    pub fn of(bytes: &[u8]) -> Cid {
        Cid(sha256(bytes))
    }

    pub fn digest(&self) -> &Digest {
        &self.0
    }

    pub fn matches(&self, bytes: &[u8]) -> bool {
        sha256(bytes) == self.0
    }
}

impl fmt::Display for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", Self::PREFIX, self.0)
    }
}

impl fmt::Debug for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cid({})", self)
    }
}

impl FromStr for Cid {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let body = s.strip_prefix(Self::PREFIX).ok_or_else(|| ParseError::Prefix {
            prefix: Self::PREFIX,
            value: s.to_string(),
        })?;
        Ok(Cid(body.parse()?))
    }
}

serde_via_str!(Cid);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct StoredObject {
    pub cid: Cid,
    #[serde(with = "hex_bytes")]
    pub bytes: Vec<u8>,
    pub stored_at: Millis,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct IndexEntry {
    size: usize,
    stored_at: Millis,
}

/// In-memory store, optionally mirrored to a directory (one file per object
/// named by hex digest, plus `index.json`).
pub struct ContentStore {
    clock: Arc<dyn Clock>,
    dir: Option<PathBuf>,
    objects: RwLock<BTreeMap<Cid, StoredObject>>,
}

impl ContentStore {
    pub fn in_memory(clock: Arc<dyn Clock>) -> ContentStore {
        ContentStore {
            clock,
            dir: None,
            objects: RwLock::new(BTreeMap::new()),
        }
    }

    /// Opens (or creates) a directory-backed store, verifying every object on load.
    pub fn open(clock: Arc<dyn Clock>, dir: impl AsRef<Path>) -> Result<ContentStore, StoreError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut objects = BTreeMap::new();
        let index_path = dir.join(INDEX_FILE);
        if index_path.exists() {
            let index: BTreeMap<Cid, IndexEntry> = serde_json::from_slice(&fs::read(&index_path)?)
                .map_err(|e| StoreError::Corrupt(format!("index: {e}")))?;
            for (cid, entry) in index {
                let bytes = fs::read(dir.join(cid.digest().to_hex()))?;
                if !cid.matches(&bytes) || bytes.len() != entry.size {
                    return Err(StoreError::Corrupt(cid.to_string()));
                }
                objects.insert(
                    cid.clone(),
                    StoredObject {
                        cid,
                        bytes,
                        stored_at: entry.stored_at,
                    },
                );
            }
        }
        Ok(ContentStore {
            clock,
            dir: Some(dir),
            objects: RwLock::new(objects),
        })
    }

    pub fn put(&self, bytes: &[u8]) -> Result<Cid, StoreError> {
        if bytes.is_empty() {
            return Err(StoreError::EmptyContent);
        }
        let cid = Cid::of(bytes);
        let mut objects = self.objects.write().unwrap();
        if let Some(existing) = objects.get(&cid) {
            if existing.bytes != bytes {
                return Err(StoreError::Collision(cid));
            }
            return Ok(cid);
        }
        let obj = StoredObject {
            cid: cid.clone(),
            bytes: bytes.to_vec(),
            stored_at: self.clock.now(),
        };
        if let Some(dir) = &self.dir {
            write_atomic(&dir.join(cid.digest().to_hex()), bytes)?;
        }
        objects.insert(cid.clone(), obj);
        if let Some(dir) = &self.dir {
            write_index(dir, &objects)?;
        }
        Ok(cid)
    }

    pub fn get(&self, cid: &Cid) -> Result<Vec<u8>, StoreError> {
        self.objects
            .read()
            .unwrap()
            .get(cid)
            .map(|o| o.bytes.clone())
            .ok_or_else(|| StoreError::NotFound(cid.clone()))
    }

    pub fn contains(&self, cid: &Cid) -> bool {
        self.objects.read().unwrap().contains_key(cid)
    }

    pub fn len(&self) -> usize {
        self.objects.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn objects(&self) -> Vec<StoredObject> {
        self.objects.read().unwrap().values().cloned().collect()
    }

    /// Replaces the contents with `objects`, checking each address.
    pub fn restore(&self, objects: Vec<StoredObject>) -> Result<(), StoreError> {
        let mut map = BTreeMap::new();
        for obj in objects {
            if obj.bytes.is_empty() || !obj.cid.matches(&obj.bytes) {
                return Err(StoreError::Corrupt(obj.cid.to_string()));
            }
            map.insert(obj.cid.clone(), obj);
        }
        if let Some(dir) = &self.dir {
            for obj in map.values() {
                write_atomic(&dir.join(obj.cid.digest().to_hex()), &obj.bytes)?;
            }
            write_index(dir, &map)?;
        }
        *self.objects.write().unwrap() = map;
        Ok(())
    }
}

fn write_index(dir: &Path, objects: &BTreeMap<Cid, StoredObject>) -> Result<(), StoreError> {
    let index: BTreeMap<&Cid, IndexEntry> = objects
        .iter()
        .map(|(cid, o)| {
            (
                cid,
                IndexEntry {
                    size: o.bytes.len(),
                    stored_at: o.stored_at,
                },
            )
        })
        .collect();
    let bytes = serde_json::to_vec_pretty(&index).map_err(|e| StoreError::Corrupt(e.to_string()))?;
    write_atomic(&dir.join(INDEX_FILE), &bytes)?;
    Ok(())
}

/// Write-to-temp then rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}
