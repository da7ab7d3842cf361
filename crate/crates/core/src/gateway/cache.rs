use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{request_hash, ChatBackend, ChatMessage, GatewayError};

/// One line of a session file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub hash: String,
    pub response: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

enum Mode {
    Record {
        inner: Box<dyn ChatBackend>,
        path: PathBuf,
        file: Mutex<std::fs::File>,
    },
    Replay {
        path: PathBuf,
        entries: HashMap<String, Vec<String>>,
        cursors: Mutex<HashMap<String, usize>>,
    },
}

/// Wraps a backend to persist responses keyed by [`request_hash`], or
/// serves a previously recorded session without touching the network.
///
/// In replay, identical requests recorded several times are served in
/// recording order; once exhausted, the last response repeats.
pub struct RecordReplay {
    mode: Mode,
}

impl RecordReplay {
    /// Appends to `path`, creating it if needed.
    pub fn record(inner: Box<dyn ChatBackend>, path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| GatewayError::Io(format!("{}: {e}", dir.display())))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
        Ok(RecordReplay {
            mode: Mode::Record {
                inner,
                path,
                file: Mutex::new(file),
            },
        })
    }

    pub fn replay(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        let mut entries: HashMap<String, Vec<String>> = HashMap::new();
        for e in read_session(&path)? {
            entries.entry(e.hash).or_default().push(e.response);
        }
        Ok(RecordReplay {
            mode: Mode::Replay {
                path,
                entries,
                cursors: Mutex::new(HashMap::new()),
            },
        })
    }

    pub fn is_replay(&self) -> bool {
        matches!(self.mode, Mode::Replay { .. })
    }
}

pub fn read_session(path: &Path) -> Result<Vec<CacheEntry>, GatewayError> {
    let text = std::fs::read_to_string(path).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| GatewayError::Io(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

impl ChatBackend for RecordReplay {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String, GatewayError> {
        let hash = request_hash(messages);
        match &self.mode {
            Mode::Record { inner, path, file } => {
                let response = inner.complete(messages)?;
                let entry = CacheEntry {
                    hash,
                    response: response.clone(),
                    timestamp: SystemTime::now()
                        .duration_since(UNIX_EPOCH)
                        .map(|d| d.as_secs())
                        .unwrap_or(0),
                };
                let line = serde_json::to_string(&entry).expect("cache entry serializes");
                let mut f = file.lock().expect("session file");
                f.write_all(format!("{line}\n").as_bytes()).map_err(|e| GatewayError::Io(format!("{}: {e}", path.display())))?;
                Ok(response)
            }
            Mode::Replay {
                entries, cursors, ..
            } => {
                let list = entries
                    .get(&hash)
                    .ok_or_else(|| GatewayError::CacheMiss { hash: hash.clone() })?;
                let mut cur = cursors.lock().expect("replay cursors");
                let c = cur.entry(hash).or_insert(0);
                let response = list[(*c).min(list.len() - 1)].clone();
                *c += 1;
                Ok(response)
            }
        }
    }

    fn describe(&self) -> String {
        match &self.mode {
            Mode::Record { inner, path, .. } => format!("record({})->{}", path.display(), inner.describe()),
            Mode::Replay { path, .. } => format!("replay({})", path.display()),
        }
    }
}
