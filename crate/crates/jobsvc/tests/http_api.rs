mod common;

use common::{dump, open};
use logan_core::ReportBundle;
use logan_jobsvc::http::serve;
use logan_jobsvc::{JobService, Workers};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};
use std::time::{Duration, Instant};

struct Server {
    base: String,
    client: Client,
    _workers: Option<Workers>,
    _dir: tempfile::TempDir,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
    }
}

async fn start(with_workers: bool) -> Server {
    let dir = tempfile::tempdir().unwrap();
    let svc: JobService = open(dir.path(), 2);
    let workers = with_workers.then(|| svc.start());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(serve(listener, svc, async {
        let _ = rx.await;
    }));
    Server { base, client: Client::new(), _workers: workers, _dir: dir, stop: Some(tx) }
}

const BOUNDARY: &str = "logan-test-boundary";

fn multipart(files: &[(&str, &str)], sets: &[&str]) -> Vec<u8> {
    let mut body = String::new();
    for (name, text) in files {
        body += &format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{name}\"\r\nContent-Type: text/plain\r\n\r\n{text}\r\n"
        );
    }
    for s in sets {
        body += &format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"set\"\r\n\r\n{s}\r\n");
    }
    body += &format!("--{BOUNDARY}--\r\n");
    body.into_bytes()
}

impl Server {
    async fn upload(&self, files: &[(&str, &str)], sets: &[&str]) -> reqwest::Response {
        self.client
            .post(format!("{}/schedule", self.base))
            .header("content-type", format!("multipart/form-data; boundary={BOUNDARY}"))
            .body(multipart(files, sets))
            .send()
            .await
            .unwrap()
    }

    async fn get(&self, path: &str) -> reqwest::Response {
        self.client.get(format!("{}{path}", self.base)).send().await.unwrap()
    }

    async fn post_json(&self, path: &str, body: Value) -> reqwest::Response {
        self.client.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap()
    }

    async fn wait(&self, id: &str) -> Value {
        let deadline = Instant::now() + Duration::from_secs(60);
        loop {
            let job: Value = self.get(&format!("/query?job_id={id}")).await.json().await.unwrap();
            if job["status"] == "completed" || job["status"] == "failed" || Instant::now() > deadline {
                return job;
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn upload_poll_fetch_round_trip() {
    let s = start(true).await;
    let r = s.upload(&[("app.log", &dump(800, 0)), ("db/db.log", &dump(300, 5))], &["causal.max_lag=3"]).await;
    assert_eq!(r.status(), StatusCode::ACCEPTED);
    let v: Value = r.json().await.unwrap();
    assert_eq!(v["status"], "scheduled");
    let id = v["job_id"].as_str().unwrap().to_owned();

    let job = s.wait(&id).await;
    assert_eq!(job["status"], "completed", "{job}");
    assert_eq!(job["stats"]["files"], 2);
    assert_eq!(job["bundle_key"], format!("bundles/{id}.json"));

    let r = s.get(&format!("/bundle?job_id={id}")).await;
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.headers()["content-type"], "application/json");
    let b = ReportBundle::from_json(&r.text().await.unwrap()).unwrap();
    assert_eq!(b.meta.counters.total_lines, 1100);
    assert_eq!(b.causal.params.max_lag, 3);

    let stats = s.get("/stats").await.text().await.unwrap();
    let rec: Value = serde_json::from_str(stats.lines().next().unwrap()).unwrap();
    assert_eq!((rec["job_id"].as_str(), rec["files"].as_u64()), (Some(id.as_str()), Some(2)));
}

#[tokio::test(flavor = "multi_thread")]
async fn two_rapid_uploads_get_distinct_ids() {
    let s = start(true).await;
    let (da, db) = (dump(400, 1), dump(400, 2));
    let (fa, fb) = ([("a.log", da.as_str())], [("b.log", db.as_str())]);
    let (a, b) = tokio::join!(s.upload(&fa, &[]), s.upload(&fb, &[]));
    let a: Value = a.json().await.unwrap();
    let b: Value = b.json().await.unwrap();
    assert_ne!(a["job_id"], b["job_id"]);
    for v in [a, b] {
        assert_eq!(s.wait(v["job_id"].as_str().unwrap()).await["status"], "completed");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn server_local_path() {
    let s = start(true).await;
    let src = tempfile::tempdir().unwrap();
    std::fs::write(src.path().join("x.log"), dump(200, 0)).unwrap();
    let r = s.post_json("/schedule", json!({ "path": src.path() })).await;
    assert_eq!(r.status(), StatusCode::ACCEPTED);
    let id = r.json::<Value>().await.unwrap()["job_id"].as_str().unwrap().to_owned();
    assert_eq!(s.wait(&id).await["status"], "completed");
}

#[tokio::test(flavor = "multi_thread")]
async fn error_statuses() {
    let s = start(false).await;
    let empty = s.upload(&[], &[]).await;
    assert_eq!(empty.status(), StatusCode::BAD_REQUEST);
    assert!(empty.json::<Value>().await.unwrap()["error"].as_str().unwrap().contains("empty payload"));
    assert_eq!(s.upload(&[("a.log", "x\n")], &["nosuch.key=1"]).await.status(), StatusCode::ACCEPTED);
    assert_eq!(s.upload(&[("a.log", "x\n")], &["causal.alpha=2"]).await.status(), StatusCode::BAD_REQUEST);
    assert_eq!(s.post_json("/schedule", json!({ "nopath": 1 })).await.status(), StatusCode::BAD_REQUEST);
    assert_eq!(s.post_json("/schedule", json!({ "path": "/no/such/dir" })).await.status(), StatusCode::BAD_REQUEST);

    assert_eq!(s.get("/query").await.status(), StatusCode::BAD_REQUEST);
    assert_eq!(s.get("/query?job_id=missing").await.status(), StatusCode::NOT_FOUND);
    assert_eq!(s.get("/bundle?job_id=missing").await.status(), StatusCode::NOT_FOUND);

    // no workers: the job stays scheduled
    let id = s.upload(&[("a.log", "hello\n")], &[]).await.json::<Value>().await.unwrap()["job_id"]
        .as_str()
        .unwrap()
        .to_owned();
    assert_eq!(s.get(&format!("/query?job_id={id}")).await.json::<Value>().await.unwrap()["status"], "scheduled");
    assert_eq!(s.get(&format!("/bundle?job_id={id}")).await.status(), StatusCode::CONFLICT);
}

#[tokio::test(flavor = "multi_thread")]
async fn feedback_is_stored_and_summarized() {
    let s = start(false).await;
    let mut ids = Vec::new();
    for i in 0..3 {
        let v: Value = s.upload(&[("a.log", &dump(10, i))], &[]).await.json().await.unwrap();
        ids.push(v["job_id"].as_str().unwrap().to_owned());
    }
    let answers = [("yes", "More than 30 minutes"), ("no", "none"), ("yes", "6-15m")];
    for (id, (q1, q2)) in ids.iter().zip(answers) {
        let r = s
            .post_json("/feedback", json!({ "job_id": id, "q1_useful": q1, "q2_time_saved": q2, "q3_text": "thanks" }))
            .await;
        assert_eq!(r.status(), StatusCode::OK);
    }
    let unknown = json!({ "job_id": "zzz", "q1_useful": "yes", "q2_time_saved": "none" });
    assert_eq!(s.post_json("/feedback", unknown).await.status(), StatusCode::NOT_FOUND);
    let malformed = json!({ "job_id": ids[0], "q1_useful": "perhaps", "q2_time_saved": "none" });
    assert_eq!(s.post_json("/feedback", malformed).await.status(), StatusCode::BAD_REQUEST);

    let sum: Value = s.get("/feedback/summary").await.json().await.unwrap();
    assert_eq!(sum["entries"], 3);
    assert!((sum["useful_rate"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(sum["q2"], json!({ "none": 1, "1-5m": 0, "6-15m": 1, ">30m": 1 }));

    // resubmitting replaces the earlier answer
    let again = json!({ "job_id": ids[1], "q1_useful": "yes", "q2_time_saved": "1-5 minutes" });
    assert_eq!(s.post_json("/feedback", again).await.status(), StatusCode::OK);
    let sum: Value = s.get("/feedback/summary").await.json().await.unwrap();
    assert_eq!((sum["entries"].as_u64(), sum["useful"].as_u64()), (Some(3), Some(3)));
    assert_eq!(sum["q2"]["none"], 0);
}

#[tokio::test(flavor = "multi_thread")]
async fn cors_allows_the_viewer() {
    let s = start(false).await;
    let r = s
        .client
        .request(reqwest::Method::OPTIONS, format!("{}/bundle", s.base))
        .header("origin", "http://localhost:5173")
        .header("access-control-request-method", "GET")
        .send()
        .await
        .unwrap();
    assert!(r.headers().contains_key("access-control-allow-origin"));
}
