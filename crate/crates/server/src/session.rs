//! In-memory session registry backed by one temp directory per key.

use std::collections::HashMap;
use std::io;
use std::net::IpAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, SystemTime};

use axum::body::Bytes;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::Serialize;
use tinyseg::batch::Input;
use tinyseg::mask::{EditOverlay, ObjectRegion, DEFAULT_THRESHOLD};
use tinyseg::ProbMap;
use uuid::Uuid;

pub const UPLOAD_FILE: &str = "upload";
pub const PROB_FILE: &str = "prob.npy";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Detecting,
    Ready,
    Expired,
}

/// Audit view of a session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionRecord {
    pub key: String,
    pub client_uuid: Uuid,
    pub client_ip: IpAddr,
    pub temp_paths: Vec<PathBuf>,
    pub created_at: SystemTime,
    pub last_access: SystemTime,
    pub state: SessionState,
}

/// Mask parameters last posted by the client.
#[derive(Debug, Clone, PartialEq)]
pub struct EditParams {
    pub threshold: f64,
    pub dilation: usize,
    pub overlay: Option<EditOverlay>,
}

impl Default for EditParams {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            dilation: 0,
            overlay: None,
        }
    }
}

/// Detection results and edit state of a ready session.
#[derive(Debug, Clone)]
pub struct SessionData {
    pub input: Arc<Input>,
    pub prob: Arc<ProbMap>,
    pub objects: Arc<Vec<ObjectRegion>>,
    pub edit: EditParams,
    /// Encoded FrameV1, built on first request.
    pub frame: Option<Bytes>,
}

#[derive(Debug)]
struct Meta {
    state: SessionState,
    last_access: SystemTime,
}

#[derive(Debug)]
pub struct Session {
    key: String,
    client_uuid: Uuid,
    client_ip: IpAddr,
    dir: PathBuf,
    filename: String,
    created_at: SystemTime,
    meta: Mutex<Meta>,
    /// Per-key lock: requests for one session run one at a time.
    data: Arc<tokio::sync::Mutex<Option<SessionData>>>,
}

impl Session {
    pub fn key(&self) -> &str {
        &self.key
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn upload_path(&self) -> PathBuf {
        self.dir.join(UPLOAD_FILE)
    }

    pub fn prob_path(&self) -> PathBuf {
        self.dir.join(PROB_FILE)
    }

    /// Client-supplied name of the uploaded file.
    pub fn filename(&self) -> &str {
        &self.filename
    }

    pub fn state(&self) -> SessionState {
        lock(&self.meta).state
    }

    pub fn data(&self) -> &tokio::sync::Mutex<Option<SessionData>> {
        &self.data
    }

    pub fn data_owned(&self) -> Arc<tokio::sync::Mutex<Option<SessionData>>> {
        Arc::clone(&self.data)
    }

    fn record(&self) -> SessionRecord {
        let meta = lock(&self.meta);
        SessionRecord {
            key: self.key.clone(),
            client_uuid: self.client_uuid,
            client_ip: self.client_ip,
            temp_paths: vec![self.upload_path(), self.prob_path()],
            created_at: self.created_at,
            last_access: meta.last_access,
            state: meta.state,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LookupError {
    Unknown,
    Expired,
}

enum Slot {
    Live(Arc<Session>),
    Expired,
}

type KeySource = Box<dyn Fn() -> String + Send + Sync>;

pub struct Registry {
    root: PathBuf,
    slots: Mutex<HashMap<String, Slot>>,
    keys: KeySource,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

/// 128 random bits from the OS, hex encoded.
pub fn random_key() -> String {
    let mut b = [0u8; 16];
    OsRng.fill_bytes(&mut b);
    hex::encode(b)
}

impl Registry {
    /// Sessions live in subdirectories of `root`, which must exist.
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self::with_key_source(root, Box::new(random_key))
    }

    pub fn with_key_source(root: impl Into<PathBuf>, keys: KeySource) -> Self {
        Self {
            root: root.into(),
            slots: Mutex::new(HashMap::new()),
            keys,
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Registers a session in the `Detecting` state and creates its
    /// directory. A key already in use (live or expired) is regenerated.
    pub fn create(&self, client_uuid: Uuid, client_ip: IpAddr, filename: &str) -> io::Result<Arc<Session>> {
        let now = SystemTime::now();
        let session = {
            let mut slots = lock(&self.slots);
            let key = loop {
                let k = (self.keys)();
                if !slots.contains_key(&k) {
                    break k;
                }
            };
            let session = Arc::new(Session {
                dir: self.root.join(&key),
                key: key.clone(),
                client_uuid,
                client_ip,
                filename: filename.to_string(),
                created_at: now,
                meta: Mutex::new(Meta {
                    state: SessionState::Detecting,
                    last_access: now,
                }),
                data: Arc::new(tokio::sync::Mutex::new(None)),
            });
            slots.insert(key, Slot::Live(Arc::clone(&session)));
            session
        };
        if let Err(e) = std::fs::create_dir(&session.dir) {
            self.discard(&session.key);
            return Err(e);
        }
        Ok(session)
    }

    /// Stores detection results and marks the session ready.
    pub async fn mark_ready(&self, session: &Session, data: SessionData) {
        *session.data.lock().await = Some(data);
        let mut meta = lock(&session.meta);
        meta.state = SessionState::Ready;
        meta.last_access = SystemTime::now();
    }

    /// Finds a session and refreshes its last access time.
    pub fn lookup(&self, key: &str) -> Result<Arc<Session>, LookupError> {
        let slots = lock(&self.slots);
        match slots.get(key) {
            None => Err(LookupError::Unknown),
            Some(Slot::Expired) => Err(LookupError::Expired),
            Some(Slot::Live(s)) => {
                lock(&s.meta).last_access = SystemTime::now();
                Ok(Arc::clone(s))
            }
        }
    }

    /// Forgets a session entirely (no tombstone) and deletes its files.
    pub fn discard(&self, key: &str) {
        let removed = lock(&self.slots).remove(key);
        if let Some(Slot::Live(s)) = removed {
            remove_dir(&s.dir);
        }
    }

    /// Expires ready sessions idle for longer than `ttl` and deletes their
    /// files. Expired keys keep a tombstone. Returns the number expired.
    pub fn gc(&self, now: SystemTime, ttl: Duration) -> usize {
        let mut doomed = Vec::new();
        {
            let mut slots = lock(&self.slots);
            for slot in slots.values_mut() {
                let Slot::Live(s) = slot else { continue };
                let mut meta = lock(&s.meta);
                let idle = now.duration_since(meta.last_access).unwrap_or_default();
                if meta.state == SessionState::Ready && idle > ttl {
                    meta.state = SessionState::Expired;
                    drop(meta);
                    doomed.push(Arc::clone(s));
                    *slot = Slot::Expired;
                }
            }
        }
        for s in &doomed {
            remove_dir(&s.dir);
        }
        doomed.len()
    }

    pub fn record(&self, key: &str) -> Option<SessionRecord> {
        match lock(&self.slots).get(key)? {
            Slot::Live(s) => Some(s.record()),
            Slot::Expired => None,
        }
    }

    /// Number of live sessions.
    pub fn live(&self) -> usize {
        lock(&self.slots).values().filter(|s| matches!(s, Slot::Live(_))).count()
    }
}

fn remove_dir(dir: &Path) {
    if let Err(e) = std::fs::remove_dir_all(dir) {
        if e.kind() != io::ErrorKind::NotFound {
            tracing::warn!(dir = %dir.display(), error = %e, "could not delete session files");
        }
    }
}
