//! Embedded SQLite store for session plans and trial records.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use coadapt_core::protocol::SessionPlan;
use coadapt_core::records::write_trials_csv;
use coadapt_core::TrialRecord;
use rusqlite::{params, Connection, OpenFlags, OptionalExtension};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("trial {trial_index} of {participant_key} was already stored with different contents")]
    Conflict { participant_key: String, trial_index: usize },
    #[error(transparent)]
    Sqlite(#[from] rusqlite::Error),
    #[error(transparent)]
    Core(#[from] coadapt_core::Error),
    #[error("lock poisoned")]
    Poisoned,
}

pub type StoreResult<T> = Result<T, StoreError>;

const SCHEMA: &str = "
CREATE TABLE IF NOT EXISTS trials (
    id              INTEGER PRIMARY KEY,
    participant_key TEXT NOT NULL,
    session_id      TEXT NOT NULL,
    trial_index     INTEGER NOT NULL,
    alpha           REAL NOT NULL,
    received_at_ms  INTEGER NOT NULL,
    payload         TEXT NOT NULL,
    UNIQUE (participant_key, session_id, trial_index)
);
CREATE TABLE IF NOT EXISTS sessions (
    participant_key TEXT PRIMARY KEY,
    plan            TEXT NOT NULL
);
";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoredTrial {
    pub trial_id: i64,
    pub participant_key: String,
    pub session_id: String,
    pub received_at_ms: i64,
    pub record: TrialRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Inserted {
    pub trial_id: i64,
    /// False when an identical record was already stored.
    pub created: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExportFilter {
    pub participant_key: Option<String>,
    pub alpha: Option<f64>,
}

/// All writes go through one connection behind a mutex; reads open their own
/// connection and run alongside writes under WAL.
pub struct Store {
    path: PathBuf,
    writer: Mutex<Connection>,
}

fn now_ms() -> i64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as i64)
}

impl Store {
    pub fn open(path: impl AsRef<Path>) -> StoreResult<Self> {
        let path = path.as_ref().to_path_buf();
        let conn = Connection::open(&path)?;
        conn.pragma_update(None, "journal_mode", "WAL")?;
        conn.pragma_update(None, "synchronous", "FULL")?;
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        conn.execute_batch(SCHEMA)?;
        Ok(Self { path, writer: Mutex::new(conn) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn reader(&self) -> StoreResult<Connection> {
        let conn = Connection::open_with_flags(&self.path, OpenFlags::SQLITE_OPEN_READ_ONLY)?;
        conn.busy_timeout(std::time::Duration::from_secs(5))?;
        Ok(conn)
    }

    /// Stores a validated record. Resending an identical record returns the
    /// original id; a different record under the same key triple is a conflict.
    pub fn insert_trial(&self, record: &TrialRecord) -> StoreResult<Inserted> {
        record.validate()?;
        let payload = record.to_canonical_json();
        let conn = self.writer.lock().map_err(|_| StoreError::Poisoned)?;
        let existing: Option<(i64, String)> = conn
            .query_row(
                "SELECT id, payload FROM trials WHERE participant_key = ?1 AND session_id = ?2 AND trial_index = ?3",
                params![record.participant_key, record.session_id, record.trial_index as i64],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?;
        if let Some((trial_id, stored)) = existing {
            return if stored == payload {
                Ok(Inserted { trial_id, created: false })
            } else {
                Err(StoreError::Conflict {
                    participant_key: record.participant_key.clone(),
                    trial_index: record.trial_index,
                })
            };
        }
        conn.execute(
            "INSERT INTO trials (participant_key, session_id, trial_index, alpha, received_at_ms, payload)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6)",
            params![
                record.participant_key,
                record.session_id,
                record.trial_index as i64,
                record.alpha,
                now_ms(),
                payload
            ],
        )?;
        Ok(Inserted { trial_id: conn.last_insert_rowid(), created: true })
    }

    pub fn trial_count(&self) -> StoreResult<usize> {
        let n: i64 = self.reader()?.query_row("SELECT COUNT(*) FROM trials", [], |r| r.get(0))?;
        Ok(n as usize)
    }

    /// Stored trials in arrival order.
    pub fn trials(&self, filter: &ExportFilter) -> StoreResult<Vec<StoredTrial>> {
        let conn = self.reader()?;
        let mut stmt = conn.prepare(
            "SELECT id, participant_key, session_id, received_at_ms, payload, alpha FROM trials
             WHERE (?1 IS NULL OR participant_key = ?1) ORDER BY id",
        )?;
        let rows = stmt.query_map(params![filter.participant_key], |r| {
            Ok((r.get::<_, i64>(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get::<_, String>(4)?, r.get::<_, f64>(5)?))
        })?;
        let mut out = Vec::new();
        for row in rows {
            let (trial_id, participant_key, session_id, received_at_ms, payload, alpha) = row?;
            if filter.alpha.is_some_and(|a| a != alpha) {
                continue;
            }
            let record = TrialRecord::from_json(&payload)?;
            out.push(StoredTrial { trial_id, participant_key, session_id, received_at_ms, record });
        }
        Ok(out)
    }

    /// Writes the sample table for matching trials. Returns the row count.
    pub fn export_csv<W: Write>(&self, filter: &ExportFilter, out: W) -> StoreResult<usize> {
        let trials = self.trials(filter)?;
        Ok(write_trials_csv(trials.iter().map(|t| &t.record), out)?)
    }

    pub fn session(&self, participant_key: &str) -> StoreResult<Option<SessionPlan>> {
        let text: Option<String> = self
            .reader()?
            .query_row("SELECT plan FROM sessions WHERE participant_key = ?1", [participant_key], |r| r.get(0))
            .optional()?;
        Ok(text.map(|t| SessionPlan::from_json(&t)).transpose()?)
    }

    /// Persists `plan` unless the participant already has one; returns the
    /// plan that is on record.
    pub fn session_or_insert(&self, plan: &SessionPlan) -> StoreResult<SessionPlan> {
        let conn = self.writer.lock().map_err(|_| StoreError::Poisoned)?;
        conn.execute(
            "INSERT OR IGNORE INTO sessions (participant_key, plan) VALUES (?1, ?2)",
            params![plan.participant_key, plan.to_json()],
        )?;
        let text: String =
            conn.query_row("SELECT plan FROM sessions WHERE participant_key = ?1", [&plan.participant_key], |r| r.get(0))?;
        Ok(SessionPlan::from_json(&text)?)
    }
}
