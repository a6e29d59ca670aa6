//! Cassette record/replay.
//!
//! File format (versioned, line-delimited JSON): the first record is a
//! header `{"kind":"meta","version":1,"suite":...,"recorded_at":...}`;
//! every following record is
//! `{"kind":"entry","digest":...,"request":{...},"response":...}` where
//! `request` is the canonical snapshot that reproduces `digest`.

use super::{BackendError, BackendRequest, LlmBackend};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

pub const CASSETTE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct CassetteEntry {
    pub digest: String,
    pub request: BackendRequest,
    pub response: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum CassetteRecord {
    Meta {
        version: u32,
        suite: String,
        recorded_at: String,
    },
    Entry(CassetteEntry),
}

#[derive(Clone, Debug, Default)]
pub struct Cassette {
    pub suite: String,
    pub recorded_at: String,
    entries: Vec<CassetteEntry>,
    index: HashMap<String, usize>,
}

impl Cassette {
    pub fn new(suite: &str, recorded_at: &str) -> Self {
        Cassette {
            suite: suite.to_string(),
            recorded_at: recorded_at.to_string(),
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[CassetteEntry] {
        &self.entries
    }

    /// Append an entry; digests are unique per cassette, so a re-recorded
    /// digest must carry the identical response.
    pub fn push(&mut self, entry: CassetteEntry) -> Result<(), BackendError> {
        if let Some(&i) = self.index.get(&entry.digest) {
            if self.entries[i].response != entry.response {
                return Err(BackendError::MalformedCassette(format!(
                    "conflicting responses recorded for digest {}",
                    entry.digest
                )));
            }
            return Ok(());
        }
        self.index.insert(entry.digest.clone(), self.entries.len());
        self.entries.push(entry);
        Ok(())
    }

    pub fn lookup(&self, digest: &str) -> Option<&CassetteEntry> {
        self.index.get(digest).map(|&i| &self.entries[i])
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)?;
        let mut cassette = Cassette::default();
        let mut saw_meta = false;
        for (line_no, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record: CassetteRecord = serde_json::from_str(line).map_err(|e| {
                BackendError::MalformedCassette(format!("line {}: {e}", line_no + 1))
            })?;
            match record {
                CassetteRecord::Meta {
                    version,
                    suite,
                    recorded_at,
                } => {
                    if version != CASSETTE_FORMAT_VERSION {
                        return Err(BackendError::MalformedCassette(format!(
                            "unsupported cassette version {version}"
                        )));
                    }
                    cassette.suite = suite;
                    cassette.recorded_at = recorded_at;
                    saw_meta = true;
                }
                CassetteRecord::Entry(entry) => {
                    if entry.request.digest() != entry.digest {
                        return Err(BackendError::MalformedCassette(format!(
                            "line {}: snapshot does not reproduce digest",
                            line_no + 1
                        )));
                    }
                    cassette.push(entry)?;
                }
            }
        }
        if !saw_meta {
            return Err(BackendError::MalformedCassette(
                "missing meta header".into(),
            ));
        }
        Ok(cassette)
    }

    pub fn save(&self, path: &Path) -> Result<(), BackendError> {
        let mut out = String::new();
        let meta = CassetteRecord::Meta {
            version: CASSETTE_FORMAT_VERSION,
            suite: self.suite.clone(),
            recorded_at: self.recorded_at.clone(),
        };
        out.push_str(&serde_json::to_string(&meta).expect("meta serializes"));
        out.push('\n');
        for entry in &self.entries {
            let record = CassetteRecord::Entry(entry.clone());
            out.push_str(&serde_json::to_string(&record).expect("entry serializes"));
            out.push('\n');
        }
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Replay backend. In strict mode a miss is an error naming the digest and
/// the nearest recorded request; non-strict mode falls back to a configured
/// stub response.
pub struct CassetteBackend {
    cassette: Cassette,
    strict: bool,
    fallback: Option<String>,
}

impl CassetteBackend {
    pub fn new(cassette: Cassette, strict: bool, fallback: Option<String>) -> Self {
        CassetteBackend {
            cassette,
            strict,
            fallback,
        }
    }

    fn nearest(&self, req: &BackendRequest) -> String {
        let canonical = req.canonical();
        let target = format!("{}\n{}\n{}", canonical.prompt, canonical.meta, canonical.task);
        self.cassette
            .entries
            .iter()
            .filter(|e| e.request.role == req.role)
            .max_by_key(|e| {
                let other = format!(
                    "{}\n{}\n{}",
                    e.request.prompt, e.request.meta, e.request.task
                );
                common_prefix_len(&target, &other)
            })
            .map(|e| format!("digest {} (task: {})", e.digest, truncate(&e.request.task, 80)))
            .unwrap_or_else(|| "none with this role".to_string())
    }
}

fn common_prefix_len(a: &str, b: &str) -> usize {
    a.bytes().zip(b.bytes()).take_while(|(x, y)| x == y).count()
}

fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        s.to_string()
    } else {
        let mut end = max;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        format!("{}…", &s[..end])
    }
}

impl LlmBackend for CassetteBackend {
    fn name(&self) -> &str {
        "cassette"
    }

    fn invoke(&self, req: &BackendRequest) -> Result<String, BackendError> {
        let digest = req.digest();
        if let Some(entry) = self.cassette.lookup(&digest) {
            return Ok(entry.response.clone());
        }
        if !self.strict {
            if let Some(fallback) = &self.fallback {
                return Ok(fallback.clone());
            }
        }
        Err(BackendError::CassetteMiss {
            digest,
            role: req.role.as_str().to_string(),
            nearest: self.nearest(req),
        })
    }
}

/// Wraps any backend and records every exchange.
pub struct RecordingBackend<B> {
    inner: B,
    entries: Mutex<Vec<CassetteEntry>>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        RecordingBackend {
            inner,
            entries: Mutex::new(Vec::new()),
        }
    }

    pub fn into_cassette(self, suite: &str, recorded_at: &str) -> Result<Cassette, BackendError> {
        let mut cassette = Cassette::new(suite, recorded_at);
        for entry in self.entries.into_inner().expect("recorder lock") {
            cassette.push(entry)?;
        }
        Ok(cassette)
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn name(&self) -> &str {
        "recording"
    }

    fn invoke(&self, req: &BackendRequest) -> Result<String, BackendError> {
        let response = self.inner.invoke(req)?;
        self.entries.lock().expect("recorder lock").push(CassetteEntry {
            digest: req.digest(),
            request: req.canonical(),
            response: response.clone(),
        });
        Ok(response)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::Role;

    fn entry(task: &str, response: &str) -> CassetteEntry {
        let req = BackendRequest::new(Role::Decide, "p", "m", task).canonical();
        CassetteEntry {
            digest: req.digest(),
            request: req,
            response: response.to_string(),
        }
    }

    #[test]
    fn replay_hit_is_byte_identical() {
        let mut cassette = Cassette::new("t", "now");
        cassette.push(entry("task", "recorded response")).unwrap();
        let backend = CassetteBackend::new(cassette, true, None);
        let got = backend
            .invoke(&BackendRequest::new(Role::Decide, "p", "m", "task"))
            .unwrap();
        assert_eq!(got, "recorded response");
    }

    #[test]
    fn strict_miss_names_digest_and_nearest() {
        let mut cassette = Cassette::new("t", "now");
        cassette.push(entry("task one", "r")).unwrap();
        let backend = CassetteBackend::new(cassette, true, None);
        let req = BackendRequest::new(Role::Decide, "p", "m", "task two");
        match backend.invoke(&req).unwrap_err() {
            BackendError::CassetteMiss { digest, nearest, .. } => {
                assert_eq!(digest, req.digest());
                assert!(nearest.contains("task one"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn non_strict_miss_uses_fallback() {
        let backend =
            CassetteBackend::new(Cassette::new("t", "now"), false, Some("stub".into()));
        let got = backend
            .invoke(&BackendRequest::new(Role::Decide, "p", "m", "x"))
            .unwrap();
        assert_eq!(got, "stub");
    }

    #[test]
    fn one_byte_change_misses() {
        let mut cassette = Cassette::new("t", "now");
        cassette.push(entry("task", "r")).unwrap();
        let backend = CassetteBackend::new(cassette, true, None);
        let req = BackendRequest::new(Role::Decide, "p!", "m", "task");
        assert!(matches!(
            backend.invoke(&req),
            Err(BackendError::CassetteMiss { .. })
        ));
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let mut cassette = Cassette::new("suite", "2026-01-01T00:00:00Z");
        cassette.push(entry("task", "resp")).unwrap();
        cassette.save(&path).unwrap();
        let loaded = Cassette::load(&path).unwrap();
        assert_eq!(loaded.suite, "suite");
        assert_eq!(loaded.entries(), cassette.entries());
    }

    #[test]
    fn empty_recording_yields_empty_cassette() {
        let recorder = RecordingBackend::new(CassetteBackend::new(
            Cassette::new("t", "now"),
            false,
            Some("stub".into()),
        ));
        let cassette = recorder.into_cassette("s", "now").unwrap();
        assert!(cassette.is_empty());
    }
}
