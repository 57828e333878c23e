//! Flat content-addressed artifact directory.
//!
//! Payloads live under `<root>/<kind>s/<id>.json`; `index.json` maps ids to
//! kind, creation time and relative path. Files are written to a temporary
//! sibling and renamed into place, so readers never see partial payloads.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArtifactKind {
    Instance,
    Solution,
    Scenario,
}

impl ArtifactKind {
    fn dir(self) -> &'static str {
        match self {
            ArtifactKind::Instance => "instances",
            ArtifactKind::Solution => "solutions",
            ArtifactKind::Scenario => "scenarios",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredArtifact {
    pub id: String,
    pub kind: ArtifactKind,
    pub created_at: String,
    /// Relative to the store root.
    pub path: String,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt index: {0}")]
    Index(#[from] serde_json::Error),
}

pub struct Store {
    root: PathBuf,
    index: Mutex<BTreeMap<String, StoredArtifact>>,
}

impl Store {
    /// Opens or creates a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        let index_path = root.join("index.json");
        let index = match fs::read(&index_path) {
            Ok(bytes) => serde_json::from_slice(&bytes)?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => BTreeMap::new(),
            Err(e) => return Err(e.into()),
        };
        Ok(Store { root, index: Mutex::new(index) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Stores `bytes` under their content hash. Storing the same bytes again
    /// returns the existing record without touching the disk.
    pub fn put(&self, kind: ArtifactKind, bytes: &[u8]) -> Result<StoredArtifact, StoreError> {
        let id = osdnp_core::content_hash(bytes);
        let mut index = self.index.lock().expect("store lock");
        if let Some(existing) = index.get(&id) {
            return Ok(existing.clone());
        }
        let rel = format!("{}/{id}.json", kind.dir());
        write_atomic(&self.root.join(&rel), bytes)?;
        let record = StoredArtifact {
            id: id.clone(),
            kind,
            created_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
            path: rel,
        };
        index.insert(id, record.clone());
        let snapshot = serde_json::to_vec_pretty(&*index)?;
        write_atomic(&self.root.join("index.json"), &snapshot)?;
        Ok(record)
    }

    pub fn record(&self, id: &str) -> Option<StoredArtifact> {
        self.index.lock().expect("store lock").get(id).cloned()
    }

    /// Payload bytes of an artifact of the given kind, `None` for unknown ids
    /// and ids of another kind.
    pub fn get(&self, kind: ArtifactKind, id: &str) -> Result<Option<Vec<u8>>, StoreError> {
        let Some(record) = self.record(id).filter(|r| r.kind == kind) else {
            return Ok(None);
        };
        Ok(Some(fs::read(self.root.join(record.path))?))
    }

    pub fn list(&self, kind: ArtifactKind) -> Vec<StoredArtifact> {
        let index = self.index.lock().expect("store lock");
        let mut out: Vec<StoredArtifact> = index.values().filter(|r| r.kind == kind).cloned().collect();
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        out
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let dir = path.parent().expect("artifact paths have a parent");
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}
