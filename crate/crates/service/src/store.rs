//! In-memory session store with TTL eviction.
//!
//! Datasets are immutable once stored, so audits run without holding any
//! lock; only appending to a session's report history takes the session
//! mutex.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use parityd_core::{AuditReport, Dataset, Diagnostic};

pub struct Session {
    pub id: String,
    pub dataset: Arc<Dataset>,
    pub diagnostics: Vec<Diagnostic>,
    pub created_at: SystemTime,
    pub expires_at: SystemTime,
    reports: Mutex<Vec<AuditReport>>,
}

impl Session {
    pub fn reports(&self) -> Vec<AuditReport> {
        self.reports.lock().expect("session lock poisoned").clone()
    }

    /// Appends a report and returns its 1-based position in the history.
    pub fn push_report(&self, report: AuditReport) -> usize {
        let mut reports = self.reports.lock().expect("session lock poisoned");
        reports.push(report);
        reports.len()
    }
}

pub fn unix_seconds(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

pub struct Store {
    ttl: Duration,
    persist_dir: Option<PathBuf>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl Store {
    pub fn new(ttl: Duration, persist_dir: Option<PathBuf>) -> Self {
        Store {
            ttl,
            persist_dir,
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn insert(&self, dataset: Dataset, diagnostics: Vec<Diagnostic>) -> Arc<Session> {
        let now = SystemTime::now();
        let session = Arc::new(Session {
            id: uuid::Uuid::new_v4().simple().to_string(),
            dataset: Arc::new(dataset),
            diagnostics,
            created_at: now,
            expires_at: now + self.ttl,
            reports: Mutex::new(Vec::new()),
        });
        self.sessions
            .write()
            .expect("store lock poisoned")
            .insert(session.id.clone(), session.clone());
        session
    }

    pub fn get(&self, id: &str) -> Option<Arc<Session>> {
        let session = self.sessions.read().expect("store lock poisoned").get(id).cloned()?;
        (session.expires_at > SystemTime::now()).then_some(session)
    }

    /// Drops sessions whose expiry is at or before `now`; returns how many.
    pub fn evict_expired(&self, now: SystemTime) -> usize {
        let mut sessions = self.sessions.write().expect("store lock poisoned");
        let before = sessions.len();
        sessions.retain(|_, s| s.expires_at > now);
        before - sessions.len()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("store lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes a report to `<persist_dir>/<session>/audit-NNNN.json` when
    /// persistence is enabled.
    pub fn persist(&self, session: &Session, seq: usize, json: &[u8]) -> std::io::Result<()> {
        let Some(dir) = &self.persist_dir else {
            return Ok(());
        };
        let dir = dir.join(&session.id);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(format!("audit-{seq:04}.json")), json)
    }
}
