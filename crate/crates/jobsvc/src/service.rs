//! Job scheduling, the worker pool, and the stores behind the HTTP API.

use crate::blob::{BlobError, BlobStore, FsBlobStore};
use crate::feedback::{summarize, FeedbackEntry, FeedbackSummary};
use crate::job::{Job, JobStats, JobStatus, UsageRecord};
use crate::journal::{read_events, Event, Journal, JournalError};
use chrono::Utc;
use logan_core::{analyze, RunConfig};
use std::collections::{HashSet, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::{mpsc, Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JobError {
    #[error("unknown job {0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("job {job_id} is {}, no bundle yet", status.as_str())]
    NotReady { job_id: String, status: JobStatus },
    #[error("storage unavailable: {0}")]
    Storage(#[from] BlobError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("{what}: {source}")]
    Io { what: String, source: std::io::Error },
    #[error("bad environment: {0}")]
    Env(String),
}

fn io_err(what: impl Into<String>) -> impl FnOnce(std::io::Error) -> JobError {
    let what = what.into();
    move |source| JobError::Io { what, source }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub pool_size: usize,
    /// Receives a JSON POST whenever a job completes or fails.
    pub webhook_url: Option<String>,
    /// Analysis config applied to every job before its own overrides.
    pub config_file: Option<PathBuf>,
    pub max_upload_bytes: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            data_dir: PathBuf::from("logan-data"),
            pool_size: 2,
            webhook_url: None,
            config_file: None,
            max_upload_bytes: 1 << 30,
        }
    }
}

impl ServiceConfig {
    /// Reads LOGAN_DATA_DIR, LOGAN_POOL_SIZE and LOGAN_WEBHOOK_URL over the defaults.
    pub fn from_env<I: IntoIterator<Item = (String, String)>>(vars: I) -> Result<Self, JobError> {
        let mut cfg = Self::default();
        for (k, v) in vars {
            match k.as_str() {
                "LOGAN_DATA_DIR" if v.trim().is_empty() => {
                    return Err(JobError::Env("LOGAN_DATA_DIR is empty".into()))
                }
                "LOGAN_DATA_DIR" => cfg.data_dir = PathBuf::from(v),
                "LOGAN_POOL_SIZE" => {
                    cfg.pool_size = v.trim().parse().ok().filter(|&n: &usize| n > 0).ok_or_else(|| {
                        JobError::Env(format!("LOGAN_POOL_SIZE must be a positive integer, got {v:?}"))
                    })?
                }
                "LOGAN_WEBHOOK_URL" if v.is_empty() => cfg.webhook_url = None,
                "LOGAN_WEBHOOK_URL" => {
                    if !(v.starts_with("http://") || v.starts_with("https://")) {
                        return Err(JobError::Env(format!("LOGAN_WEBHOOK_URL must be an http(s) URL, got {v:?}")));
                    }
                    cfg.webhook_url = Some(v)
                }
                _ => {}
            }
        }
        Ok(cfg)
    }
}

/// What a job analyzes.
#[derive(Debug, Clone)]
pub enum Input {
    /// Uploaded files as (relative name, contents).
    Files(Vec<(String, Vec<u8>)>),
    /// A file or directory readable by the server.
    Path(PathBuf),
}

#[derive(Debug, Default)]
struct Queue {
    items: VecDeque<String>,
    shutdown: bool,
}

struct Inner {
    cfg: ServiceConfig,
    blobs: Arc<dyn BlobStore>,
    journal: Mutex<Journal>,
    queue: Mutex<Queue>,
    ready: Condvar,
    usage_path: PathBuf,
    usage: Mutex<File>,
    feedback: Mutex<(File, Vec<FeedbackEntry>)>,
    notifier: Option<mpsc::Sender<Job>>,
}

#[derive(Clone)]
pub struct JobService {
    inner: Arc<Inner>,
}

impl JobService {
    /// Opens the service over `data_dir` with a filesystem blob store.
    pub fn open(cfg: ServiceConfig) -> Result<(Self, Vec<String>), JobError> {
        let blobs = Arc::new(FsBlobStore::new(cfg.data_dir.join("blobs"))?);
        Self::open_with_store(cfg, blobs)
    }

    /// Replays the journal: scheduled jobs are queued again in submission
    /// order, jobs caught running are failed as interrupted.
    pub fn open_with_store(cfg: ServiceConfig, blobs: Arc<dyn BlobStore>) -> Result<(Self, Vec<String>), JobError> {
        if cfg.pool_size == 0 {
            return Err(JobError::Env("pool size must be positive".into()));
        }
        let dir = &cfg.data_dir;
        fs::create_dir_all(dir).map_err(io_err(format!("creating {}", dir.display())))?;
        let _ = fs::remove_dir_all(dir.join("work"));
        let (journal, mut warnings) = Journal::open(&dir.join("jobs.jsonl"))?;
        let append = |p: &Path| {
            OpenOptions::new().create(true).append(true).open(p).map_err(io_err(format!("opening {}", p.display())))
        };
        let usage_path = dir.join("usage.jsonl");
        let usage = append(&usage_path)?;
        let fb_path = dir.join("feedback.jsonl");
        let fb_file = append(&fb_path)?;
        let mut entries = Vec::new();
        let reader = BufReader::new(File::open(&fb_path).map_err(io_err("reading feedback"))?);
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(io_err("reading feedback"))?;
            match serde_json::from_str(&line) {
                Ok(e) => entries.push(e),
                Err(_) if line.trim().is_empty() => {}
                Err(e) => warnings.push(format!("feedback.jsonl:{}: skipped: {e}", i + 1)),
            }
        }
        let notifier = cfg.webhook_url.clone().map(spawn_notifier);
        let interrupted: Vec<Job> = journal.jobs().filter(|j| j.status == JobStatus::Running).cloned().collect();
        let queued = journal.jobs().filter(|j| j.status == JobStatus::Scheduled).map(|j| j.job_id.clone()).collect();

        let svc = JobService {
            inner: Arc::new(Inner {
                cfg,
                blobs,
                journal: Mutex::new(journal),
                queue: Mutex::new(Queue { items: queued, shutdown: false }),
                ready: Condvar::new(),
                usage_path,
                usage: Mutex::new(usage),
                feedback: Mutex::new((fb_file, entries)),
                notifier,
            }),
        };
        for mut job in interrupted {
            warnings.push(format!("job {} was running at shutdown; marked failed", job.job_id));
            job.status = JobStatus::Failed;
            job.error = Some("interrupted".into());
            job.finished = Some(Utc::now());
            svc.inner.finish(job)?;
        }
        Ok((svc, warnings))
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.inner.cfg
    }

    pub fn blobs(&self) -> &Arc<dyn BlobStore> {
        &self.inner.blobs
    }

    /// Stores the payload and queues the job. Nothing is queued when storage fails.
    pub fn schedule(&self, input: Input, overrides: Vec<String>) -> Result<Job, JobError> {
        let inner = &self.inner;
        RunConfig::load(inner.cfg.config_file.as_deref(), std::iter::empty(), &overrides)
            .map_err(|e| JobError::BadRequest(format!("config: {e}")))?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let input_key = match input {
            Input::Files(files) => {
                if files.iter().all(|(_, b)| b.is_empty()) {
                    return Err(JobError::BadRequest("empty payload: no file content received".into()));
                }
                let prefix = format!("inputs/{id}/");
                let mut names = HashSet::new();
                for (i, (name, bytes)) in files.iter().enumerate() {
                    let mut name = sanitize(name, i);
                    if !names.insert(name.clone()) {
                        name = format!("{i}-{name}");
                        names.insert(name.clone());
                    }
                    if let Err(e) = inner.blobs.put(&format!("{prefix}{name}"), bytes) {
                        for k in inner.blobs.list(&prefix).unwrap_or_default() {
                            let _ = inner.blobs.delete(&k);
                        }
                        return Err(e.into());
                    }
                }
                prefix
            }
            Input::Path(path) => {
                let abs = path
                    .canonicalize()
                    .map_err(|e| JobError::BadRequest(format!("{}: {e}", path.display())))?;
                let key = format!("inputs/{id}.path");
                inner.blobs.put(&key, abs.to_string_lossy().as_bytes())?;
                key
            }
        };
        let job = Job::new(id, input_key, overrides);
        inner.journal.lock().unwrap().record(job.clone())?;
        inner.queue.lock().unwrap().items.push_back(job.job_id.clone());
        inner.ready.notify_one();
        Ok(job)
    }

    pub fn query(&self, job_id: &str) -> Result<Job, JobError> {
        self.inner.journal.lock().unwrap().get(job_id).cloned().ok_or_else(|| JobError::NotFound(job_id.into()))
    }

    /// All jobs in submission order.
    pub fn jobs(&self) -> Vec<Job> {
        self.inner.journal.lock().unwrap().jobs().cloned().collect()
    }

    /// Canonical bundle JSON of a completed job.
    pub fn bundle(&self, job_id: &str) -> Result<Vec<u8>, JobError> {
        let job = self.query(job_id)?;
        match (&job.bundle_key, job.status) {
            (Some(key), JobStatus::Completed) => Ok(self.inner.blobs.get(key)?),
            _ => Err(JobError::NotReady { job_id: job.job_id, status: job.status }),
        }
    }

    /// Every status change so far, oldest first.
    pub fn history(&self) -> Result<Vec<Event>, JobError> {
        let j = self.inner.journal.lock().unwrap();
        Ok(read_events(j.path())?)
    }

    pub fn submit_feedback(&self, entry: FeedbackEntry) -> Result<(), JobError> {
        self.query(&entry.job_id)?;
        let mut fb = self.inner.feedback.lock().unwrap();
        let mut line = serde_json::to_string(&entry).expect("feedback serializes");
        line.push('\n');
        fb.0.write_all(line.as_bytes()).map_err(io_err("writing feedback"))?;
        fb.1.push(entry);
        Ok(())
    }

    pub fn feedback_summary(&self) -> FeedbackSummary {
        summarize(&self.inner.feedback.lock().unwrap().1)
    }

    /// The usage log as JSON lines, one per finished job.
    pub fn usage_snapshot(&self) -> Result<String, JobError> {
        let _guard = self.inner.usage.lock().unwrap();
        fs::read_to_string(&self.inner.usage_path).map_err(io_err("reading usage log"))
    }

    /// Polls until the job is completed or failed.
    pub fn wait_for(&self, job_id: &str, timeout: Duration) -> Result<Option<Job>, JobError> {
        let deadline = Instant::now() + timeout;
        loop {
            let job = self.query(job_id)?;
            if job.status.is_terminal() {
                return Ok(Some(job));
            }
            if Instant::now() >= deadline {
                return Ok(None);
            }
            thread::sleep(Duration::from_millis(10));
        }
    }

    /// Starts `pool_size` workers. Dropping the handle stops them once their
    /// current jobs finish.
    pub fn start(&self) -> Workers {
        self.inner.queue.lock().unwrap().shutdown = false;
        let handles = (0..self.inner.cfg.pool_size)
            .map(|i| {
                let inner = Arc::clone(&self.inner);
                thread::Builder::new()
                    .name(format!("logan-worker-{i}"))
                    .spawn(move || worker(inner))
                    .expect("spawn worker")
            })
            .collect();
        Workers { inner: Arc::clone(&self.inner), handles }
    }
}

pub struct Workers {
    inner: Arc<Inner>,
    handles: Vec<JoinHandle<()>>,
}

impl Workers {
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.inner.queue.lock().unwrap().shutdown = true;
        self.inner.ready.notify_all();
        for h in self.handles.drain(..) {
            let _ = h.join();
        }
    }
}

impl Drop for Workers {
    fn drop(&mut self) {
        self.stop();
    }
}

fn worker(inner: Arc<Inner>) {
    loop {
        let id = {
            let mut q = inner.queue.lock().unwrap();
            loop {
                if q.shutdown {
                    return;
                }
                if let Some(id) = q.items.pop_front() {
                    break id;
                }
                q = inner.ready.wait(q).unwrap();
            }
        };
        if let Err(e) = inner.run(&id) {
            tracing::error!(job_id = %id, "job bookkeeping failed: {e}");
        }
    }
}

impl Inner {
    fn run(&self, id: &str) -> Result<(), JobError> {
        let mut job = {
            let mut j = self.journal.lock().unwrap();
            let Some(mut job) = j.get(id).cloned().filter(|j| j.status == JobStatus::Scheduled) else {
                return Ok(());
            };
            job.status = JobStatus::Running;
            job.started = Some(Utc::now());
            j.record(job.clone())?;
            job
        };
        tracing::info!(job_id = %id, "running");
        let outcome = match catch_unwind(AssertUnwindSafe(|| self.execute(&job))) {
            Ok(r) => r,
            Err(panic) => Err(format!(
                "internal error: {}",
                panic
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| panic.downcast_ref::<&str>().copied())
                    .unwrap_or("panic")
            )),
        };
        match outcome.and_then(|(bundle, stats)| {
            let key = format!("bundles/{id}.json");
            self.blobs.put(&key, &bundle).map_err(|e| format!("storing bundle: {e}"))?;
            Ok((key, stats))
        }) {
            Ok((key, stats)) => {
                job.status = JobStatus::Completed;
                job.bundle_key = Some(key);
                job.stats = stats;
            }
            Err(msg) => {
                tracing::warn!(job_id = %id, "failed: {msg}");
                job.status = JobStatus::Failed;
                job.error = Some(msg);
            }
        }
        job.finished = Some(Utc::now());
        self.finish(job)
    }

    fn execute(&self, job: &Job) -> Result<(Vec<u8>, JobStats), String> {
        let config = RunConfig::load(self.cfg.config_file.as_deref(), std::iter::empty(), &job.overrides)
            .map_err(|e| format!("config: {e}"))?
            .config;
        let work = self.cfg.data_dir.join("work").join(&job.job_id);
        let root = if job.input_key.ends_with('/') {
            self.materialize(&job.input_key, &work)?;
            work.clone()
        } else {
            let bytes = self.blobs.get(&job.input_key).map_err(|e| e.to_string())?;
            PathBuf::from(String::from_utf8_lossy(&bytes).into_owned())
        };
        let result = analyze(&[&root], &config);
        let _ = fs::remove_dir_all(&work);
        let a = result.map_err(|e| e.to_string())?;
        let json = a.bundle.to_canonical_json().map_err(|e| e.to_string())?;
        let stats = JobStats { files: a.stats.files, bytes: a.stats.bytes, lines: a.stats.lines, wall_time_ms: a.stats.stage_ms };
        Ok((json.into_bytes(), stats))
    }

    /// Copies the uploaded blobs to a scratch directory the ingester can walk.
    fn materialize(&self, prefix: &str, dir: &Path) -> Result<(), String> {
        let keys = self.blobs.list(prefix).map_err(|e| e.to_string())?;
        if keys.is_empty() {
            return Err(format!("no input stored under {prefix}"));
        }
        for key in keys {
            let path = dir.join(&key[prefix.len()..]);
            let bytes = self.blobs.get(&key).map_err(|e| e.to_string())?;
            fs::create_dir_all(path.parent().unwrap_or(dir))
                .and_then(|_| fs::write(&path, bytes))
                .map_err(|e| format!("staging {key}: {e}"))?;
        }
        Ok(())
    }

    /// Records a terminal job, appends its usage record and fires the webhook.
    fn finish(&self, job: Job) -> Result<(), JobError> {
        debug_assert!(job.status.is_terminal());
        self.journal.lock().unwrap().record(job.clone())?;
        let mut line = serde_json::to_string(&UsageRecord::of(&job)).expect("usage serializes");
        line.push('\n');
        self.usage.lock().unwrap().write_all(line.as_bytes()).map_err(io_err("writing usage log"))?;
        if let Some(tx) = &self.notifier {
            let _ = tx.send(job);
        }
        Ok(())
    }
}

/// Keeps the relative path of an upload, dropping anything that could escape it.
fn sanitize(name: &str, index: usize) -> String {
    let parts: Vec<&str> = name.split(['/', '\\']).filter(|s| !s.is_empty() && *s != "." && *s != "..").collect();
    if parts.is_empty() {
        format!("upload-{index}.log")
    } else {
        parts.join("/")
    }
}

/// Posts terminal jobs from a dedicated thread so a slow endpoint never
/// holds up a worker.
fn spawn_notifier(url: String) -> mpsc::Sender<Job> {
    let (tx, rx) = mpsc::channel::<Job>();
    thread::Builder::new()
        .name("logan-webhook".into())
        .spawn(move || {
            let client = match reqwest::blocking::Client::builder().timeout(Duration::from_secs(10)).build() {
                Ok(c) => c,
                Err(e) => return tracing::error!("webhook disabled: {e}"),
            };
            for job in rx {
                let body = serde_json::json!({
                    "event": "job.finished",
                    "job_id": job.job_id,
                    "status": job.status,
                    "job": job,
                });
                if let Err(e) = client.post(&url).json(&body).send().and_then(|r| r.error_for_status()) {
                    tracing::warn!(job_id = %job.job_id, "webhook failed: {e}");
                }
            }
        })
        .expect("spawn webhook thread");
    tx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upload_names_stay_inside() {
        assert_eq!(sanitize("../../etc/passwd", 0), "etc/passwd");
        assert_eq!(sanitize("dump\\app.log", 0), "dump/app.log");
        assert_eq!(sanitize("..", 3), "upload-3.log");
    }

    #[test]
    fn env_is_checked() {
        let v = |k: &str, x: &str| vec![(k.to_owned(), x.to_owned())];
        assert!(ServiceConfig::from_env(v("LOGAN_POOL_SIZE", "0")).is_err());
        assert!(ServiceConfig::from_env(v("LOGAN_POOL_SIZE", "two")).is_err());
        assert!(ServiceConfig::from_env(v("LOGAN_WEBHOOK_URL", "ftp://x")).is_err());
        assert_eq!(ServiceConfig::from_env(v("LOGAN_POOL_SIZE", "4")).unwrap().pool_size, 4);
        assert_eq!(ServiceConfig::from_env(v("HOME", "/root")).unwrap().pool_size, 2);
    }
}
