use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::SystemTime;

use serde::{Deserialize, Serialize};

use super::store::unix_ms;
use super::SessionError;
use crate::gallery::GalleryStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallSource {
    TeacherClick,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallEvent {
    /// Unix time, milliseconds.
    pub timestamp_ms: u64,
    pub student_id: String,
    pub source: CallSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CallEvent {
    pub fn teacher_click(student_id: impl Into<String>, note: Option<String>) -> Self {
        Self {
            timestamp_ms: unix_ms(SystemTime::now()),
            student_id: student_id.into(),
            source: CallSource::TeacherClick,
            note,
        }
    }
}

/// Append-only call log, mirrored to an NDJSON file when a path is given.
#[derive(Debug)]
pub struct CallLog {
    events: Mutex<Vec<CallEvent>>,
    path: Option<PathBuf>,
}

impl CallLog {
    pub fn in_memory() -> Self {
        Self { events: Mutex::new(Vec::new()), path: None }
    }

    /// Opens (or creates) `path`, replaying any events already in it.
    pub fn open(path: &Path) -> Result<Self, SessionError> {
        let io = |e: std::io::Error| SessionError::Io(format!("{}: {e}", path.display()));
        let mut events = Vec::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path).map_err(io)?).lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let ev = serde_json::from_str(&line)
                    .map_err(|e| SessionError::Io(format!("{} line {}: {e}", path.display(), i + 1)))?;
                events.push(ev);
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(io)?;
        }
        Ok(Self { events: Mutex::new(events), path: Some(path.to_path_buf()) })
    }

    /// Appends `event` if its student is enrolled and not opted out.
    /// Returns the event's zero-based log position.
    pub fn record_call(&self, event: CallEvent, gallery: &GalleryStore) -> Result<usize, SessionError> {
        if gallery.matchable(&event.student_id).is_none() {
            return Err(SessionError::UnknownId(event.student_id));
        }
        let mut events = self.events.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(path) = &self.path {
            let io = |e: std::io::Error| SessionError::Io(format!("{}: {e}", path.display()));
            let mut line = serde_json::to_vec(&event).expect("event serializes");
            line.push(b'\n');
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
            f.write_all(&line).map_err(io)?;
            f.sync_data().map_err(io)?;
        }
        events.push(event);
        Ok(events.len() - 1)
    }

    pub fn events(&self) -> Vec<CallEvent> {
        self.events.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn len(&self) -> usize {
        self.events.lock().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn tail(&self, n: usize) -> Vec<CallEvent> {
        let events = self.events.lock().unwrap_or_else(|e| e.into_inner());
        events[events.len().saturating_sub(n)..].to_vec()
    }
}
