use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::Serialize;

use gcodeloop::corrector::LoopResult;
use gcodeloop::params::TaskParameters;

#[derive(Debug, Clone, Serialize)]
pub struct Session {
    pub id: String,
    pub description: String,
    pub params: TaskParameters,
    pub missing: Vec<String>,
    pub shape_count: usize,
    pub warnings: Vec<String>,
    pub verified: bool,
    pub result: Option<LoopResult>,
}

struct Entry {
    session: Arc<tokio::sync::Mutex<Session>>,
    touched: Instant,
}

/// Sessions expire `ttl` after their last access.
pub struct SessionStore {
    ttl: Duration,
    entries: Mutex<HashMap<String, Entry>>,
}

impl SessionStore {
    pub fn new(ttl: Duration) -> Self {
        SessionStore {
            ttl,
            entries: Mutex::new(HashMap::new()),
        }
    }

    fn sweep(&self, map: &mut HashMap<String, Entry>) {
        let now = Instant::now();
        map.retain(|_, e| now.duration_since(e.touched) < self.ttl);
    }

    pub fn insert(&self, session: Session) {
        let mut map = self.entries.lock().unwrap_or_else(|p| p.into_inner());
        self.sweep(&mut map);
        map.insert(
            session.id.clone(),
            Entry {
                session: Arc::new(tokio::sync::Mutex::new(session)),
                touched: Instant::now(),
            },
        );
    }

    /// The session's handle; hold its lock to serialize work on it.
    pub fn get(&self, id: &str) -> Option<Arc<tokio::sync::Mutex<Session>>> {
        let mut map = self.entries.lock().unwrap_or_else(|p| p.into_inner());
        self.sweep(&mut map);
        let entry = map.get_mut(id)?;
        entry.touched = Instant::now();
        Some(entry.session.clone())
    }

    pub fn len(&self) -> usize {
        let mut map = self.entries.lock().unwrap_or_else(|p| p.into_inner());
        self.sweep(&mut map);
        map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
