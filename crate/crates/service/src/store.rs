use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use crate::error::{Result, ServiceError};
use crate::session::{Session, SCHEMA_VERSION};

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io { path: path.to_path_buf(), source }
}

/// Writes `session` canonically via a temporary file and rename, so a crash
/// leaves either the old or the new file.
pub fn save_session(session: &Session, path: &Path) -> Result<()> {
    let bytes = session.to_canonical()?;
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("session");
    let tmp = dir.join(format!(".{name}.{}.tmp", uuid::Uuid::new_v4().simple()));
    let mut f = fs::File::create(&tmp).map_err(io(&tmp))?;
    f.write_all(&bytes).map_err(io(&tmp))?;
    f.sync_all().map_err(io(&tmp))?;
    drop(f);
    if let Err(e) = fs::rename(&tmp, path) {
        let _ = fs::remove_file(&tmp);
        return Err(io(path)(e));
    }
    // persist the rename itself; not every platform can open a directory
    if let Ok(d) = fs::File::open(dir) {
        let _ = d.sync_all();
    }
    Ok(())
}

pub fn load_session(path: &Path) -> Result<Session> {
    let bytes = fs::read(path).map_err(io(path))?;
    parse_session(&bytes, path)
}

pub fn parse_session(bytes: &[u8], path: &Path) -> Result<Session> {
    let corrupt = |reason: String| ServiceError::Corrupt { path: path.to_path_buf(), reason };
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| corrupt(e.to_string()))?;
    let found =
        value.get("schema_version").and_then(|v| v.as_u64()).ok_or_else(|| corrupt("missing schema_version".into()))?;
    if found != SCHEMA_VERSION as u64 {
        return Err(ServiceError::VersionMismatch { path: path.to_path_buf(), found, expected: SCHEMA_VERSION });
    }
    serde_json::from_value(value).map_err(|e| corrupt(e.to_string()))
}

/// One JSON file per session under a directory, plus in-process writer
/// locks keyed by session id.
#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<tokio::sync::Mutex<()>>>>,
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        Ok(Self { dir, locks: Mutex::new(HashMap::new()) })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, id: &str) -> Result<PathBuf> {
        let ok = !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-');
        if !ok {
            return Err(ServiceError::NotFound(id.to_string()));
        }
        Ok(self.dir.join(format!("{id}.json")))
    }

    pub fn save(&self, session: &Session) -> Result<()> {
        save_session(session, &self.path_for(&session.id)?)
    }

    pub fn load(&self, id: &str) -> Result<Session> {
        parse_session(&self.read_raw(id)?, &self.path_for(id)?)
    }

    /// The stored bytes, exactly as persisted.
    pub fn read_raw(&self, id: &str) -> Result<Vec<u8>> {
        let path = self.path_for(id)?;
        fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => ServiceError::NotFound(id.to_string()),
            _ => io(&path)(e),
        })
    }

    /// Serializes writers of one session; readers never take it.
    pub fn writer_lock(&self, id: &str) -> Arc<tokio::sync::Mutex<()>> {
        let mut map = self.locks.lock().expect("lock map poisoned");
        map.entry(id.to_string()).or_default().clone()
    }
}
