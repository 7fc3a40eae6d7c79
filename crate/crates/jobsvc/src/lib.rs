//! Schedules log dump analyses, runs them on a worker pool, and serves
//! status, bundles, usage statistics and feedback over HTTP.
//!
//! State lives under one data directory:
//!
//! ```text
//! jobs.jsonl      job snapshots, append-only
//! usage.jsonl     one record per finished job
//! feedback.jsonl  survey answers
//! blobs/          uploads and bundles
//! ```

pub mod blob;
pub mod feedback;
pub mod http;
pub mod job;
pub mod journal;
mod service;

pub use blob::{BlobError, BlobStore, FsBlobStore, MemBlobStore};
pub use feedback::{FeedbackEntry, FeedbackSummary, TimeSaved, Useful};
pub use job::{Job, JobStats, JobStatus, UsageRecord};
pub use service::{Input, JobError, JobService, ServiceConfig, Workers};
