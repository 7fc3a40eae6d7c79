//! Jobs DB: an append-only JSON-lines file of job snapshots, replayed into an
//! in-memory index on open. The last snapshot of a job is its state.

use crate::job::{Job, JobStatus};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("job {job_id}: {from:?} -> {to:?} is not a valid transition")]
    Transition { job_id: String, from: Option<JobStatus>, to: JobStatus },
    #[error("job {0}: bundle_key must be set exactly when completed")]
    Inconsistent(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub at: DateTime<Utc>,
    pub job: Job,
}

#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: File,
    seq: u64,
    jobs: HashMap<String, Job>,
    /// job ids in submission order
    order: Vec<String>,
}

impl Journal {
    /// Opens or creates the journal. Unreadable lines (a torn final write)
    /// are skipped and reported.
    pub fn open(path: &Path) -> Result<(Self, Vec<String>), JournalError> {
        let io = |source| JournalError::Io { path: path.to_owned(), source };
        let mut file = OpenOptions::new().create(true).read(true).append(true).open(path).map_err(io)?;
        let (events, warnings) = read_events_from(&mut file, path)?;
        // a torn line must not swallow the next append
        let len = file.metadata().map_err(io)?.len();
        if len > 0 {
            let mut last = [0u8];
            file.seek(SeekFrom::Start(len - 1)).map_err(io)?;
            file.read_exact(&mut last).map_err(io)?;
            if last[0] != b'\n' {
                file.write_all(b"\n").map_err(io)?;
            }
        }
        let mut j = Journal { path: path.to_owned(), file, seq: 0, jobs: HashMap::new(), order: Vec::new() };
        for e in events {
            j.seq = j.seq.max(e.seq);
            j.index(e.job);
        }
        Ok((j, warnings))
    }

    fn index(&mut self, job: Job) {
        if !self.jobs.contains_key(&job.job_id) {
            self.order.push(job.job_id.clone());
        }
        self.jobs.insert(job.job_id.clone(), job);
    }

    /// Appends a snapshot after checking the transition from the job's
    /// current state.
    pub fn record(&mut self, job: Job) -> Result<u64, JournalError> {
        let from = self.jobs.get(&job.job_id).map(|j| j.status);
        let ok = match from {
            None => job.status == JobStatus::Scheduled,
            Some(f) => f.can_become(job.status),
        };
        if !ok {
            return Err(JournalError::Transition { job_id: job.job_id, from, to: job.status });
        }
        if !job.is_consistent() {
            return Err(JournalError::Inconsistent(job.job_id));
        }
        let event = Event { seq: self.seq + 1, at: Utc::now(), job };
        let mut line = serde_json::to_string(&event).expect("event serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.sync_data())
            .map_err(|source| JournalError::Io { path: self.path.clone(), source })?;
        self.seq = event.seq;
        self.index(event.job);
        Ok(self.seq)
    }

    pub fn get(&self, job_id: &str) -> Option<&Job> {
        self.jobs.get(job_id)
    }

    /// Jobs in submission order.
    pub fn jobs(&self) -> impl Iterator<Item = &Job> {
        self.order.iter().map(|id| &self.jobs[id])
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

/// Every event in the journal at `path`, oldest first.
pub fn read_events(path: &Path) -> Result<Vec<Event>, JournalError> {
    let mut f = File::open(path).map_err(|source| JournalError::Io { path: path.to_owned(), source })?;
    Ok(read_events_from(&mut f, path)?.0)
}

fn read_events_from(file: &mut File, path: &Path) -> Result<(Vec<Event>, Vec<String>), JournalError> {
    let io = |source| JournalError::Io { path: path.to_owned(), source };
    file.seek(SeekFrom::Start(0)).map_err(io)?;
    let mut events = Vec::new();
    let mut warnings = Vec::new();
    for (i, line) in BufReader::new(&mut *file).lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Event>(&line) {
            Ok(e) => events.push(e),
            Err(e) => warnings.push(format!("{}:{}: unreadable journal entry skipped: {e}", path.display(), i + 1)),
        }
    }
    Ok((events, warnings))
}
