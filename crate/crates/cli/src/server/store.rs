use std::collections::HashMap;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use stimkit_core::study::SessionRecord;
use tokio::sync::Mutex;

/// Sessions in memory, one JSON file per session on disk.
///
/// Every session sits behind its own async mutex, so actions on one
/// session are serialized while different sessions proceed in parallel.
pub struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionRecord>>>>,
}

pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

impl SessionStore {
    /// Opens (creating if needed) `dir`, checks it is writable and loads
    /// every `<id>.json` in it.
    pub async fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        tokio::fs::create_dir_all(&dir).await?;
        let probe = dir.join(".write-probe");
        tokio::fs::write(&probe, b"").await?;
        tokio::fs::remove_file(&probe).await?;

        let mut sessions = HashMap::new();
        let mut entries = tokio::fs::read_dir(&dir).await?;
        while let Some(entry) = entries.next_entry().await? {
            let path = entry.path();
            let Some(id) = session_id(&path) else { continue };
            let text = tokio::fs::read_to_string(&path).await?;
            match SessionRecord::from_json(&text) {
                Ok(record) => {
                    sessions.insert(id, Arc::new(Mutex::new(record)));
                }
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping unreadable session"),
            }
        }
        tracing::info!(count = sessions.len(), dir = %dir.display(), "sessions loaded");
        Ok(Self { dir, sessions: RwLock::new(sessions) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn get(&self, id: &str) -> Option<Arc<Mutex<SessionRecord>>> {
        self.sessions.read().expect("store lock").get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().expect("store lock").keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Persists and registers a new session.
    pub async fn insert(&self, id: &str, record: SessionRecord) -> io::Result<()> {
        self.persist(id, &record).await?;
        self.sessions
            .write()
            .expect("store lock")
            .insert(id.to_string(), Arc::new(Mutex::new(record)));
        Ok(())
    }

    /// Writes the record atomically (temporary file, then rename).
    pub async fn persist(&self, id: &str, record: &SessionRecord) -> io::Result<()> {
        let path = self.path_for(id);
        let tmp = self.dir.join(format!(".{id}.json.tmp"));
        tokio::fs::write(&tmp, record.to_json()).await?;
        tokio::fs::rename(&tmp, &path).await
    }
}

fn session_id(path: &Path) -> Option<String> {
    if path.extension()? != "json" {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    valid_id(stem).then(|| stem.to_string())
}
