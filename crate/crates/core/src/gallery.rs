//! Enrolled students: profiles, consent state and gallery embeddings.
//!
//! File format (UTF-8, newline-delimited JSON):
//!
//! ```text
//! {"format_version":1,"checksum":<crc32 of every byte after this line>,"version":<n>}
//! {"student_id":...,"display_name":...,"profile":{...},"gallery_embedding":[...],"consent":"enrolled"}
//! ...
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{Embedding, UNIT_NORM_TOLERANCE};
use crate::matcher::GalleryEntry;

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GalleryError {
    #[error("student {0:?} is already enrolled")]
    DuplicateId(String),
    #[error("invalid embedding: {0}")]
    InvalidEmbedding(String),
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("unknown student {0:?}")]
    UnknownId(String),
    #[error("corrupt gallery file: {0}")]
    CorruptFile(String),
    #[error("unsupported gallery format_version {0}")]
    VersionUnsupported(u64),
    #[error("gallery i/o: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consent {
    Enrolled,
    OptedOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudentRecord {
    pub student_id: String,
    pub display_name: String,
    #[serde(default)]
    pub profile: BTreeMap<String, String>,
    pub gallery_embedding: Embedding,
    pub consent: Consent,
}

impl StudentRecord {
    pub fn new(student_id: impl Into<String>, display_name: impl Into<String>, embedding: Embedding) -> Self {
        Self {
            student_id: student_id.into(),
            display_name: display_name.into(),
            profile: BTreeMap::new(),
            gallery_embedding: embedding,
            consent: Consent::Enrolled,
        }
    }

    pub fn with_profile(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.profile.insert(key.into(), value.into());
        self
    }

    pub fn is_matchable(&self) -> bool {
        self.consent == Consent::Enrolled
    }

    fn validate(&self) -> Result<(), GalleryError> {
        if self.student_id.trim().is_empty() {
            return Err(GalleryError::InvalidRecord("student_id is empty".into()));
        }
        if self.display_name.trim().is_empty() {
            return Err(GalleryError::InvalidRecord(format!(
                "display_name of {:?} is empty",
                self.student_id
            )));
        }
        let norm = self.gallery_embedding.norm();
        if (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(GalleryError::InvalidEmbedding(format!("norm {norm}")));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u64,
    checksum: u32,
    #[serde(default)]
    version: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gallery {
    records: BTreeMap<String, StudentRecord>,
    version: u64,
}

impl Gallery {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, student_id: &str) -> Option<&StudentRecord> {
        self.records.get(student_id)
    }

    /// Enrolled and not opted out.
    pub fn get_matchable(&self, student_id: &str) -> Option<&StudentRecord> {
        self.get(student_id).filter(|r| r.is_matchable())
    }

    /// Records in id order.
    pub fn records(&self) -> impl Iterator<Item = &StudentRecord> {
        self.records.values()
    }

    pub fn enroll(&mut self, record: StudentRecord) -> Result<u64, GalleryError> {
        record.validate()?;
        if record.consent != Consent::Enrolled {
            return Err(GalleryError::InvalidRecord(format!(
                "{:?} cannot be enrolled in the opted-out state",
                record.student_id
            )));
        }
        if self.records.contains_key(&record.student_id) {
            return Err(GalleryError::DuplicateId(record.student_id));
        }
        self.records.insert(record.student_id.clone(), record);
        self.version += 1;
        Ok(self.version)
    }

    pub fn set_consent(&mut self, student_id: &str, consent: Consent) -> Result<u64, GalleryError> {
        let record = self
            .records
            .get_mut(student_id)
            .ok_or_else(|| GalleryError::UnknownId(student_id.to_string()))?;
        record.consent = consent;
        self.version += 1;
        Ok(self.version)
    }

    /// Identities the matcher may see. Opted-out records are excluded.
    pub fn matchable_entries(&self) -> Vec<GalleryEntry> {
        self.records
            .values()
            .filter(|r| r.is_matchable())
            .map(|r| GalleryEntry {
                student_id: r.student_id.clone(),
                embedding: r.gallery_embedding.clone(),
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut body = Vec::new();
        for r in self.records.values() {
            serde_json::to_writer(&mut body, r).expect("records serialize");
            body.push(b'\n');
        }
        let header = Header {
            format_version: FORMAT_VERSION,
            checksum: crc32fast::hash(&body),
            version: self.version,
        };
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, GalleryError> {
        let corrupt = |m: String| GalleryError::CorruptFile(m);
        let split = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| corrupt("missing header line".into()))?;
        let (head, body) = (&bytes[..split], &bytes[split + 1..]);
        let raw: serde_json::Value =
            serde_json::from_slice(head).map_err(|e| corrupt(format!("header: {e}")))?;
        match raw.get("format_version").and_then(serde_json::Value::as_u64) {
            Some(FORMAT_VERSION) => {}
            Some(v) => return Err(GalleryError::VersionUnsupported(v)),
            None => return Err(corrupt("header lacks format_version".into())),
        }
        let header: Header = serde_json::from_value(raw).map_err(|e| corrupt(format!("header: {e}")))?;
        let actual = crc32fast::hash(body);
        if actual != header.checksum {
            return Err(corrupt(format!(
                "checksum mismatch: header {:08x}, content {actual:08x}",
                header.checksum
            )));
        }
        let text = std::str::from_utf8(body).map_err(|e| corrupt(e.to_string()))?;
        let mut records = BTreeMap::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let record: StudentRecord =
                serde_json::from_str(line).map_err(|e| corrupt(format!("record {}: {e}", i + 1)))?;
            record.validate().map_err(|e| corrupt(format!("record {}: {e}", i + 1)))?;
            if records.contains_key(&record.student_id) {
                return Err(corrupt(format!("duplicate id {:?}", record.student_id)));
            }
            records.insert(record.student_id.clone(), record);
        }
        Ok(Self { records, version: header.version })
    }

    /// Writes through a sibling temporary file and renames over `path`.
    pub fn save(&self, path: &Path) -> Result<(), GalleryError> {
        let io = |e: std::io::Error| GalleryError::Io(format!("{}: {e}", path.display()));
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = PathBuf::from(tmp);
        let mut f = fs::File::create(&tmp).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)?;
        f.sync_all().map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, GalleryError> {
        let bytes = fs::read(path).map_err(|e| GalleryError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

/// Immutable view of the matchable part of a gallery.
#[derive(Debug, Clone, PartialEq)]
pub struct GallerySnapshot {
    pub version: u64,
    pub entries: Vec<GalleryEntry>,
}

/// Serialized access to a gallery, optionally persisted after each mutation.
#[derive(Debug)]
pub struct GalleryStore {
    gallery: Mutex<Gallery>,
    path: Option<PathBuf>,
}

impl GalleryStore {
    pub fn new(gallery: Gallery, path: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self { gallery: Mutex::new(gallery), path })
    }

    /// Loads `path` if it exists, otherwise starts empty; mutations are saved back.
    pub fn open(path: &Path) -> Result<Arc<Self>, GalleryError> {
        let gallery = if path.exists() { Gallery::load(path)? } else { Gallery::new() };
        Ok(Self::new(gallery, Some(path.to_path_buf())))
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Gallery> {
        self.gallery.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn mutate(&self, f: impl FnOnce(&mut Gallery) -> Result<u64, GalleryError>) -> Result<u64, GalleryError> {
        let mut g = self.lock();
        let mut next = g.clone();
        let version = f(&mut next)?;
        if let Some(path) = &self.path {
            next.save(path)?;
        }
        *g = next;
        Ok(version)
    }

    pub fn enroll(&self, record: StudentRecord) -> Result<u64, GalleryError> {
        self.mutate(|g| g.enroll(record))
    }

    pub fn set_consent(&self, student_id: &str, consent: Consent) -> Result<u64, GalleryError> {
        self.mutate(|g| g.set_consent(student_id, consent))
    }

    pub fn snapshot(&self) -> Arc<GallerySnapshot> {
        let g = self.lock();
        Arc::new(GallerySnapshot { version: g.version(), entries: g.matchable_entries() })
    }

    /// Matchable record by id; opted-out and unknown ids both yield `None`.
    pub fn matchable(&self, student_id: &str) -> Option<StudentRecord> {
        self.lock().get_matchable(student_id).cloned()
    }

    pub fn with<R>(&self, f: impl FnOnce(&Gallery) -> R) -> R {
        f(&self.lock())
    }

    pub fn version(&self) -> u64 {
        self.lock().version()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record(id: &str, seed: u64) -> StudentRecord {
        StudentRecord::new(id, format!("Student {id}"), Embedding::random(&mut ChaCha8Rng::seed_from_u64(seed)))
            .with_profile("program", "Physics")
    }

    #[test]
    fn enroll_bumps_version_and_reads_back() {
        let mut g = Gallery::new();
        let r = record("S001", 1);
        assert_eq!(g.enroll(r.clone()).unwrap(), 1);
        assert_eq!(g.get("S001"), Some(&r));
        assert_eq!(g.enroll(record("S002", 2)).unwrap(), 2);
    }

    #[test]
    fn duplicate_leaves_gallery_unchanged() {
        let mut g = Gallery::new();
        g.enroll(record("S001", 1)).unwrap();
        let before = g.clone();
        assert_eq!(g.enroll(record("S001", 9)), Err(GalleryError::DuplicateId("S001".into())));
        assert_eq!(g, before);
    }

    #[test]
    fn rejects_empty_name_and_opted_out_enrollment() {
        let mut g = Gallery::new();
        let mut r = record("S001", 1);
        r.display_name = " ".into();
        assert!(matches!(g.enroll(r), Err(GalleryError::InvalidRecord(_))));
        let mut r = record("S001", 1);
        r.consent = Consent::OptedOut;
        assert!(matches!(g.enroll(r), Err(GalleryError::InvalidRecord(_))));
        assert_eq!(g.version(), 0);
    }

    #[test]
    fn opt_out_hides_from_matching_and_back() {
        let mut g = Gallery::new();
        g.enroll(record("S001", 1)).unwrap();
        g.enroll(record("S002", 2)).unwrap();
        assert_eq!(g.set_consent("S001", Consent::OptedOut).unwrap(), 3);
        let ids: Vec<_> = g.matchable_entries().into_iter().map(|e| e.student_id).collect();
        assert_eq!(ids, ["S002"]);
        assert!(g.get_matchable("S001").is_none());
        g.set_consent("S001", Consent::Enrolled).unwrap();
        assert_eq!(g.matchable_entries().len(), 2);
        assert_eq!(
            g.set_consent("S404", Consent::OptedOut),
            Err(GalleryError::UnknownId("S404".into()))
        );
    }

    #[test]
    fn bytes_round_trip_and_header_shape() {
        let mut g = Gallery::new();
        for i in 0..5 {
            g.enroll(record(&format!("S{i:03}"), i)).unwrap();
        }
        g.set_consent("S003", Consent::OptedOut).unwrap();
        let bytes = g.to_bytes();
        let first = std::str::from_utf8(&bytes).unwrap().lines().next().unwrap().to_string();
        assert!(first.starts_with("{\"format_version\":1,\"checksum\":"), "{first}");
        assert_eq!(Gallery::from_bytes(&bytes).unwrap(), g);
    }

    #[test]
    fn damage_is_detected() {
        let mut g = Gallery::new();
        g.enroll(record("S001", 1)).unwrap();
        let bytes = g.to_bytes();
        let truncated = &bytes[..bytes.len() - 10];
        assert!(matches!(Gallery::from_bytes(truncated), Err(GalleryError::CorruptFile(_))));
        let mut flipped = bytes.clone();
        let n = flipped.len();
        flipped[n - 5] ^= 0x01;
        assert!(matches!(Gallery::from_bytes(&flipped), Err(GalleryError::CorruptFile(_))));
        assert!(matches!(Gallery::from_bytes(b"garbage"), Err(GalleryError::CorruptFile(_))));
        let future = String::from_utf8(bytes).unwrap().replacen("\"format_version\":1", "\"format_version\":7", 1);
        assert_eq!(Gallery::from_bytes(future.as_bytes()), Err(GalleryError::VersionUnsupported(7)));
    }

    #[test]
    fn store_persists_each_mutation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gallery.ndjson");
        let store = GalleryStore::open(&path).unwrap();
        store.enroll(record("S001", 1)).unwrap();
        store.set_consent("S001", Consent::OptedOut).unwrap();
        let loaded = Gallery::load(&path).unwrap();
        assert_eq!(loaded.version(), 2);
        assert_eq!(loaded.get("S001").unwrap().consent, Consent::OptedOut);
        assert!(store.matchable("S001").is_none());
        assert!(store.snapshot().entries.is_empty());
    }

    #[test]
    fn failed_mutation_does_not_persist() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.ndjson");
        let store = GalleryStore::open(&path).unwrap();
        store.enroll(record("S001", 1)).unwrap();
        let before = fs::read(&path).unwrap();
        assert!(store.enroll(record("S001", 2)).is_err());
        assert_eq!(fs::read(&path).unwrap(), before);
    }
}
