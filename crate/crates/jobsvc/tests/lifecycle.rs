mod common;

use common::{dump, open};
use logan_core::ReportBundle;
use logan_jobsvc::journal::Journal;
use logan_jobsvc::{
    BlobError, BlobStore, Input, JobError, JobService, JobStatus, MemBlobStore, ServiceConfig, UsageRecord,
};
use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

const LIMIT: Duration = Duration::from_secs(60);

fn upload(name: &str, text: &str) -> Input {
    Input::Files(vec![(name.to_owned(), text.as_bytes().to_vec())])
}

fn max_running(svc: &JobService) -> usize {
    let mut running = HashSet::new();
    let mut peak = 0;
    for e in svc.history().unwrap() {
        if e.job.status == JobStatus::Running {
            running.insert(e.job.job_id);
        } else {
            running.remove(&e.job.job_id);
        }
        peak = peak.max(running.len());
    }
    peak
}

#[test]
fn four_jobs_on_two_workers() {
    let d = tempfile::tempdir().unwrap();
    let svc = open(d.path(), 2);
    let ids: Vec<String> =
        (0..4).map(|i| svc.schedule(upload("app.log", &dump(4000, i)), vec![]).unwrap().job_id).collect();
    assert_eq!(ids.iter().collect::<HashSet<_>>().len(), 4);
    assert!(ids.iter().all(|id| svc.query(id).unwrap().status == JobStatus::Scheduled));

    let workers = svc.start();
    for id in &ids {
        let job = svc.wait_for(id, LIMIT).unwrap().expect("job finished in time");
        assert_eq!(job.status, JobStatus::Completed, "{:?}", job.error);
        assert_eq!(job.bundle_key.as_deref(), Some(format!("bundles/{id}.json").as_str()));
        assert_eq!((job.stats.files, job.stats.lines), (1, 4000));
        let b = ReportBundle::from_json(std::str::from_utf8(&svc.bundle(id).unwrap()).unwrap()).unwrap();
        assert_eq!(b.meta.counters.total_lines, 4000);
    }
    workers.shutdown();
    let peak = max_running(&svc);
    assert!((1..=2).contains(&peak), "peak running {peak}");
}

#[test]
fn corrupt_job_fails_alone() {
    let d = tempfile::tempdir().unwrap();
    let svc = open(d.path(), 2);
    let good1 = svc.schedule(upload("a.log", &dump(500, 1)), vec![]).unwrap().job_id;
    let bad = svc
        .schedule(Input::Files(vec![("dump.zip".into(), b"PK\x03\x04\x14\0\0\0garbage".to_vec())]), vec![])
        .unwrap()
        .job_id;
    let good2 = svc.schedule(upload("b.log", &dump(500, 2)), vec![]).unwrap().job_id;
    let _w = svc.start();
    let failed = svc.wait_for(&bad, LIMIT).unwrap().unwrap();
    assert_eq!(failed.status, JobStatus::Failed);
    assert!(failed.error.as_deref().unwrap().to_lowercase().contains("zip"), "{:?}", failed.error);
    assert!(failed.bundle_key.is_none());
    assert!(matches!(svc.bundle(&bad), Err(JobError::NotReady { .. })));
    for id in [good1, good2] {
        assert_eq!(svc.wait_for(&id, LIMIT).unwrap().unwrap().status, JobStatus::Completed);
    }
}

#[test]
fn restart_fails_interrupted_jobs_and_resumes_queue() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = {
        let svc = open(d.path(), 1);
        let a = svc.schedule(upload("a.log", &dump(200, 0)), vec![]).unwrap();
        let b = svc.schedule(upload("b.log", &dump(200, 1)), vec![]).unwrap();
        (a, b)
    };
    // crash while `a` was running
    {
        let (mut j, _) = Journal::open(&d.path().join("jobs.jsonl")).unwrap();
        let mut running = a.clone();
        running.status = JobStatus::Running;
        running.started = Some(chrono::Utc::now());
        j.record(running).unwrap();
    }
    let (svc, warnings) = JobService::open(common::config(d.path(), 1)).unwrap();
    assert!(warnings.iter().any(|w| w.contains(&a.job_id)));
    let ja = svc.query(&a.job_id).unwrap();
    assert_eq!((ja.status, ja.error.as_deref()), (JobStatus::Failed, Some("interrupted")));
    assert_eq!(svc.query(&b.job_id).unwrap().status, JobStatus::Scheduled);

    let _w = svc.start();
    assert_eq!(svc.wait_for(&b.job_id, LIMIT).unwrap().unwrap().status, JobStatus::Completed);
    // at most once: `a` never runs again
    assert_eq!(svc.query(&a.job_id).unwrap().status, JobStatus::Failed);
    let usage: Vec<UsageRecord> =
        svc.usage_snapshot().unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let ids: Vec<_> = usage.iter().map(|u| u.job_id.as_str()).collect();
    assert_eq!(ids, [a.job_id.as_str(), b.job_id.as_str()]);
}

#[test]
fn completed_implies_bundle_and_one_usage_record_each() {
    let d = tempfile::tempdir().unwrap();
    let svc = open(d.path(), 3);
    let ids: Vec<_> = (0..5).map(|i| svc.schedule(upload("x.log", &dump(300, i)), vec![]).unwrap().job_id).collect();
    let w = svc.start();
    for id in &ids {
        svc.wait_for(id, LIMIT).unwrap().unwrap();
    }
    w.shutdown();
    let usage = svc.usage_snapshot().unwrap();
    assert_eq!(usage.lines().count(), 5);
    for job in svc.jobs() {
        assert_eq!(job.status, JobStatus::Completed);
        assert!(svc.blobs().get(job.bundle_key.as_ref().unwrap()).is_ok());
        assert_eq!(usage.matches(&job.job_id).count(), 1);
    }
    // scratch copies are cleaned up
    assert!(std::fs::read_dir(d.path().join("work")).map(|mut r| r.next().is_none()).unwrap_or(true));
}

#[test]
fn server_local_path_and_overrides() {
    let d = tempfile::tempdir().unwrap();
    let src = tempfile::tempdir().unwrap();
    std::fs::write(src.path().join("svc.log"), dump(600, 3)).unwrap();
    let svc = open(d.path(), 1);
    let job = svc
        .schedule(Input::Path(src.path().to_owned()), vec!["reports.granularity=30s".into()])
        .unwrap();
    let _w = svc.start();
    let done = svc.wait_for(&job.job_id, LIMIT).unwrap().unwrap();
    assert_eq!(done.status, JobStatus::Completed, "{:?}", done.error);
    let b = ReportBundle::from_json(std::str::from_utf8(&svc.bundle(&job.job_id).unwrap()).unwrap()).unwrap();
    assert_eq!(b.meta.granularity, 30);
}

#[test]
fn bad_requests_are_rejected_before_queueing() {
    let d = tempfile::tempdir().unwrap();
    let svc = open(d.path(), 1);
    assert!(matches!(svc.schedule(Input::Files(vec![]), vec![]), Err(JobError::BadRequest(_))));
    assert!(matches!(svc.schedule(upload("e.log", ""), vec![]), Err(JobError::BadRequest(_))));
    assert!(matches!(
        svc.schedule(Input::Path(d.path().join("missing")), vec![]),
        Err(JobError::BadRequest(_))
    ));
    assert!(matches!(
        svc.schedule(upload("a.log", "x\n"), vec!["causal.interval=-5".into()]),
        Err(JobError::BadRequest(_))
    ));
    assert!(svc.jobs().is_empty());
    assert!(matches!(svc.query("nope"), Err(JobError::NotFound(_))));
}

struct BrokenStore;

impl BlobStore for BrokenStore {
    fn put(&self, key: &str, _: &[u8]) -> Result<(), BlobError> {
        Err(BlobError::Io { key: key.into(), source: std::io::Error::other("disk gone") })
    }
    fn get(&self, key: &str) -> Result<Vec<u8>, BlobError> {
        Err(BlobError::NotFound(key.into()))
    }
    fn list(&self, _: &str) -> Result<Vec<String>, BlobError> {
        Ok(vec![])
    }
    fn delete(&self, _: &str) -> Result<(), BlobError> {
        Ok(())
    }
}

#[test]
fn storage_failure_enqueues_nothing() {
    let d = tempfile::tempdir().unwrap();
    let (svc, _) = JobService::open_with_store(common::config(d.path(), 1), Arc::new(BrokenStore)).unwrap();
    assert!(matches!(svc.schedule(upload("a.log", "hello\n"), vec![]), Err(JobError::Storage(_))));
    assert!(svc.jobs().is_empty());
}

#[test]
fn memory_store_runs_jobs() {
    let d = tempfile::tempdir().unwrap();
    let (svc, _) =
        JobService::open_with_store(common::config(d.path(), 1), Arc::new(MemBlobStore::new())).unwrap();
    let id = svc.schedule(upload("nested/dir/a.log", &dump(100, 0)), vec![]).unwrap().job_id;
    let _w = svc.start();
    assert_eq!(svc.wait_for(&id, LIMIT).unwrap().unwrap().status, JobStatus::Completed);
}

/// Accepts HTTP requests and keeps their bodies.
fn webhook_sink() -> (String, Arc<Mutex<Vec<serde_json::Value>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/hook", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&seen);
    std::thread::spawn(move || {
        for stream in listener.incoming().flatten() {
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 || line == "\r\n" {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            sink.lock().unwrap().push(serde_json::from_slice(&body).unwrap());
            let mut out = stream;
            let _ = out.write_all(b"HTTP/1.1 200 OK\r\nContent-Length: 0\r\nConnection: close\r\n\r\n");
        }
    });
    (url, seen)
}

#[test]
fn webhook_fires_once_per_terminal_transition() {
    let d = tempfile::tempdir().unwrap();
    let (url, seen) = webhook_sink();
    let cfg = ServiceConfig { webhook_url: Some(url), ..common::config(d.path(), 2) };
    let (svc, _) = JobService::open(cfg).unwrap();
    let ok = svc.schedule(upload("a.log", &dump(200, 0)), vec![]).unwrap().job_id;
    let bad = svc.schedule(upload("b.tar.gz", "\u{1f}\u{8b}junk"), vec![]).unwrap().job_id;
    let w = svc.start();
    svc.wait_for(&ok, LIMIT).unwrap().unwrap();
    svc.wait_for(&bad, LIMIT).unwrap().unwrap();
    let deadline = std::time::Instant::now() + Duration::from_secs(20);
    while seen.lock().unwrap().len() < 2 && std::time::Instant::now() < deadline {
        std::thread::sleep(Duration::from_millis(20));
    }
    w.shutdown();
    std::thread::sleep(Duration::from_millis(200));
    let mut got: Vec<(String, String)> = seen
        .lock()
        .unwrap()
        .iter()
        .map(|v| (v["job_id"].as_str().unwrap().to_owned(), v["status"].as_str().unwrap().to_owned()))
        .collect();
    got.sort();
    let mut want = vec![(ok, "completed".to_owned()), (bad, "failed".to_owned())];
    want.sort();
    assert_eq!(got, want);
}
