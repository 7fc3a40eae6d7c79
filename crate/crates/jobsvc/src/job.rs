use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobStatus {
    Scheduled,
    Running,
    Completed,
    Failed,
}

impl JobStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobStatus::Completed | JobStatus::Failed)
    }

    /// scheduled → running → completed | failed
    pub fn can_become(self, next: JobStatus) -> bool {
        use JobStatus::*;
        matches!((self, next), (Scheduled, Running) | (Running, Completed) | (Running, Failed))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobStatus::Scheduled => "scheduled",
            JobStatus::Running => "running",
            JobStatus::Completed => "completed",
            JobStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobStats {
    pub files: usize,
    pub bytes: u64,
    pub lines: usize,
    /// Milliseconds per pipeline stage.
    pub wall_time_ms: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub job_id: String,
    pub status: JobStatus,
    pub submitted: DateTime<Utc>,
    pub started: Option<DateTime<Utc>>,
    pub finished: Option<DateTime<Utc>>,
    pub input_key: String,
    pub bundle_key: Option<String>,
    pub stats: JobStats,
    pub error: Option<String>,
    /// `section.key=value` settings applied on top of the service config.
    #[serde(default)]
    pub overrides: Vec<String>,
}

impl Job {
    pub fn new(job_id: String, input_key: String, overrides: Vec<String>) -> Self {
        Self {
            job_id,
            status: JobStatus::Scheduled,
            submitted: Utc::now(),
            started: None,
            finished: None,
            input_key,
            bundle_key: None,
            stats: JobStats::default(),
            error: None,
            overrides,
        }
    }

    /// bundle_key is present exactly when completed.
    pub fn is_consistent(&self) -> bool {
        self.bundle_key.is_some() == (self.status == JobStatus::Completed)
    }
}

/// Appended to the usage log once per job reaching a terminal status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub job_id: String,
    pub status: JobStatus,
    pub submitted: DateTime<Utc>,
    pub finished: DateTime<Utc>,
    pub total_ms: u64,
    pub files: usize,
    pub bytes: u64,
    pub lines: usize,
    pub stage_ms: BTreeMap<String, u64>,
    pub error: Option<String>,
}

impl UsageRecord {
    pub fn of(job: &Job) -> Self {
        let finished = job.finished.unwrap_or_else(Utc::now);
        let start = job.started.unwrap_or(job.submitted);
        Self {
            job_id: job.job_id.clone(),
            status: job.status,
            submitted: job.submitted,
            finished,
            total_ms: (finished - start).num_milliseconds().max(0) as u64,
            files: job.stats.files,
            bytes: job.stats.bytes,
            lines: job.stats.lines,
            stage_ms: job.stats.wall_time_ms.clone(),
            error: job.error.clone(),
        }
    }
}
