//! File-backed event store: `<root>/<session_id>/events.jsonl` plus a
//! periodic `snapshot.json`.
//!
//! The event log is the source of truth. A snapshot is only trusted when it
//! parses and its `next_seq` does not run past the log; otherwise the session
//! is rebuilt from the events alone. A final line without its newline is a
//! torn write and is dropped on load.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use super::{Session, SessionError, SessionEvent};

pub const DEFAULT_SNAPSHOT_EVERY: u64 = 8;
const EVENTS_FILE: &str = "events.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("session {0} not found")]
    NotFound(String),
    #[error("session {0} already exists")]
    AlreadyExists(String),
    #[error("invalid session id {0:?}")]
    InvalidId(String),
    #[error("corrupt event log at line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Replay(#[from] SessionError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone)]
pub struct SessionStore {
    root: PathBuf,
    snapshot_every: u64,
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

fn event_line(event: &SessionEvent) -> String {
    let mut line = serde_json::to_string(event).expect("events serialize");
    line.push('\n');
    line
}

/// Parses a JSONL event log. A torn (unterminated, unparsable) last line is
/// ignored and its byte offset returned so the caller can truncate it.
pub(crate) fn parse_events(text: &str) -> Result<(Vec<SessionEvent>, Option<usize>), StoreError> {
    let mut events = Vec::new();
    let mut offset = 0;
    for (n, line) in text.split_inclusive('\n').enumerate() {
        let terminated = line.ends_with('\n');
        let body = line.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() {
            offset += line.len();
            continue;
        }
        if !terminated {
            return Ok((events, Some(offset)));
        }
        let event = serde_json::from_str::<SessionEvent>(body).map_err(|e| StoreError::Corrupt {
            line: n + 1,
            message: e.to_string(),
        })?;
        events.push(event);
        offset += line.len();
    }
    Ok((events, None))
}

impl SessionStore {
    pub fn open(root: impl Into<PathBuf>) -> io::Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(SessionStore {
            root,
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        })
    }

    pub fn with_snapshot_every(mut self, every: u64) -> Self {
        self.snapshot_every = every.max(1);
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn dir(&self, id: &str) -> Result<PathBuf, StoreError> {
        if !valid_id(id) {
            return Err(StoreError::InvalidId(id.to_string()));
        }
        Ok(self.root.join(id))
    }

    pub fn exists(&self, id: &str) -> bool {
        self.dir(id).map(|d| d.join(EVENTS_FILE).is_file()).unwrap_or(false)
    }

    /// Session ids with an event log, sorted.
    pub fn list(&self) -> io::Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(&self.root)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if valid_id(&name) && entry.path().join(EVENTS_FILE).is_file() {
                ids.push(name);
            }
        }
        ids.sort();
        Ok(ids)
    }

    /// Writes the genesis event of a new session.
    pub fn create(&self, genesis: &SessionEvent) -> Result<Session, StoreError> {
        let session = Session::genesis(genesis)?;
        let dir = self.dir(&session.session_id)?;
        if dir.join(EVENTS_FILE).exists() {
            return Err(StoreError::AlreadyExists(session.session_id));
        }
        fs::create_dir_all(&dir)?;
        let mut file = OpenOptions::new()
            .create_new(true)
            .write(true)
            .open(dir.join(EVENTS_FILE))?;
        file.write_all(event_line(genesis).as_bytes())?;
        file.sync_data()?;
        Ok(session)
    }

    /// Appends one event. `after` is the session with the event applied and
    /// is snapshotted every `snapshot_every` events.
    pub fn append(&self, after: &Session, event: &SessionEvent) -> Result<(), StoreError> {
        let dir = self.dir(&after.session_id)?;
        let path = dir.join(EVENTS_FILE);
        if !path.is_file() {
            return Err(StoreError::NotFound(after.session_id.clone()));
        }
        let mut file = OpenOptions::new().append(true).open(&path)?;
        file.write_all(event_line(event).as_bytes())?;
        file.sync_data()?;
        if after.next_seq.is_multiple_of(self.snapshot_every) {
            self.write_snapshot(after)?;
        }
        Ok(())
    }

    /// Atomically replaces the snapshot (temp file, fsync, rename).
    pub fn write_snapshot(&self, session: &Session) -> Result<(), StoreError> {
        let dir = self.dir(&session.session_id)?;
        let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        {
            let mut file = File::create(&tmp)?;
            file.write_all(serde_json::to_string(session).expect("sessions serialize").as_bytes())?;
            file.sync_all()?;
        }
        fs::rename(&tmp, dir.join(SNAPSHOT_FILE))?;
        Ok(())
    }

    /// Reads the event log, truncating a torn final line in place.
    pub fn events(&self, id: &str) -> Result<Vec<SessionEvent>, StoreError> {
        let path = self.dir(id)?.join(EVENTS_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::NotFound(id.to_string())),
            Err(e) => return Err(e.into()),
        };
        let (events, torn_at) = parse_events(&text)?;
        if let Some(offset) = torn_at {
            tracing::warn!(session = id, offset, "dropping torn final event line");
            OpenOptions::new().write(true).open(&path)?.set_len(offset as u64)?;
        }
        Ok(events)
    }

    fn read_snapshot(&self, id: &str) -> Option<Session> {
        let path = self.dir(id).ok()?.join(SNAPSHOT_FILE);
        let text = fs::read_to_string(path).ok()?;
        match serde_json::from_str::<Session>(&text) {
            Ok(s) if s.session_id == id => Some(s),
            Ok(_) => None,
            Err(e) => {
                tracing::warn!(session = id, error = %e, "ignoring unreadable snapshot");
                None
            }
        }
    }

    /// Restores a session from its snapshot plus newer events, falling back
    /// to a full replay.
    pub fn load(&self, id: &str) -> Result<Session, StoreError> {
        let events = self.events(id)?;
        if let Some(mut snap) = self.read_snapshot(id) {
            let from = snap.next_seq as usize;
            if from >= 1 && from <= events.len() && events[from - 1].timestamp == snap.updated_at {
                let mut ok = true;
                for ev in &events[from..] {
                    if snap.apply(ev).is_err() {
                        ok = false;
                        break;
                    }
                }
                if ok {
                    return Ok(snap);
                }
            }
            tracing::warn!(session = id, "snapshot does not match the event log; replaying");
        }
        Ok(Session::replay(&events)?)
    }

    /// The session's events as JSONL.
    pub fn export(&self, id: &str) -> Result<String, StoreError> {
        Ok(self.events(id)?.iter().map(event_line).collect())
    }

    /// Validates an exported log by replaying it, then stores it as a new
    /// session.
    pub fn import(&self, jsonl: &str) -> Result<Session, StoreError> {
        let (events, torn_at) = parse_events(jsonl)?;
        if torn_at.is_some() && !jsonl.trim_end().is_empty() {
            // An import must be complete; a missing final newline on a valid
            // line is tolerated by re-parsing with one appended.
            let (fixed, torn) = parse_events(&format!("{jsonl}\n"))?;
            if torn.is_some() {
                return Err(StoreError::Corrupt {
                    line: fixed.len() + 1,
                    message: "truncated event".into(),
                });
            }
            return self.import_events(&fixed);
        }
        self.import_events(&events)
    }

    fn import_events(&self, events: &[SessionEvent]) -> Result<Session, StoreError> {
        let session = Session::replay(events)?;
        let dir = self.dir(&session.session_id)?;
        if dir.join(EVENTS_FILE).exists() {
            return Err(StoreError::AlreadyExists(session.session_id));
        }
        fs::create_dir_all(&dir)?;
        let text: String = events.iter().map(event_line).collect();
        let tmp = dir.join(format!("{EVENTS_FILE}.tmp"));
        {
            let mut file = File::create(&tmp)?;
            file.write_all(text.as_bytes())?;
            file.sync_all()?;
        }
        fs::rename(&tmp, dir.join(EVENTS_FILE))?;
        self.write_snapshot(&session)?;
        Ok(session)
    }
}
