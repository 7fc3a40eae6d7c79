use super::{
    BackendError, Capabilities, ClassifierBackend, Entity, FaultCategory, GoldenSignal, Task,
    TaskOutput,
};
use serde::Deserialize;
use std::collections::BTreeSet;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

/// HTTP classifier: `POST {endpoint}/classify` with `{task, lines}`,
/// answered by `{labels: [...]}` holding one task-shaped entry per line.
pub struct RemoteBackend {
    id: String,
    url: String,
    client: reqwest::blocking::Client,
    retries: u32,
    batch_limit: usize,
    capabilities: Capabilities,
    gate: Gate,
}

/// Caps the number of requests in flight.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n.max(1)), cv: Condvar::new() }
    }

    fn run<T>(&self, f: impl FnOnce() -> T) -> T {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        drop(free);
        let out = f();
        *self.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.cv.notify_one();
        out
    }
}

#[derive(Deserialize)]
struct Response {
    labels: Vec<serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum GscLabel {
    Plain(GoldenSignal),
    Scored { label: GoldenSignal, confidence: Option<f64> },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum FcpLabel {
    Plain(BTreeSet<FaultCategory>),
    Scored { categories: BTreeSet<FaultCategory> },
}

impl RemoteBackend {
    pub fn new(
        endpoint: &str,
        timeout: Duration,
        retries: u32,
        pool: usize,
        batch_limit: usize,
        capabilities: Capabilities,
    ) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .pool_max_idle_per_host(pool.max(1))
            .build()
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(Self {
            id: format!("remote:{endpoint}"),
            url: format!("{}/classify", endpoint.trim_end_matches('/')),
            client,
            retries,
            batch_limit: batch_limit.max(1),
            capabilities,
            gate: Gate::new(pool),
        })
    }

    fn post(&self, task: Task, lines: &[&str]) -> Result<Vec<serde_json::Value>, String> {
        let body = serde_json::json!({ "task": task, "lines": lines });
        let resp = self.client.post(&self.url).json(&body).send().map_err(|e| e.to_string())?;
        let status = resp.status();
        if !status.is_success() {
            return Err(format!("HTTP {status}"));
        }
        let parsed: Response = resp.json().map_err(|e| format!("bad response body: {e}"))?;
        Ok(parsed.labels)
    }

    fn decode(task: Task, labels: Vec<serde_json::Value>) -> Result<TaskOutput, BackendError> {
        let bad = |e: serde_json::Error| BackendError::Protocol(format!("{task} label: {e}"));
        Ok(match task {
            Task::Gsc => TaskOutput::Golden(
                labels
                    .into_iter()
                    .map(|v| {
                        serde_json::from_value::<GscLabel>(v).map(|l| match l {
                            GscLabel::Plain(g) => (g, None),
                            GscLabel::Scored { label, confidence } => (label, confidence),
                        })
                    })
                    .collect::<Result<_, _>>()
                    .map_err(bad)?,
            ),
            Task::Fcp => TaskOutput::Faults(
                labels
                    .into_iter()
                    .map(|v| {
                        serde_json::from_value::<FcpLabel>(v).map(|l| match l {
                            FcpLabel::Plain(c) | FcpLabel::Scored { categories: c } => c,
                        })
                    })
                    .collect::<Result<_, _>>()
                    .map_err(bad)?,
            ),
            Task::Ner => TaskOutput::Entities(
                labels
                    .into_iter()
                    .map(serde_json::from_value::<Vec<Entity>>)
                    .collect::<Result<_, _>>()
                    .map_err(bad)?,
            ),
        })
    }
}

impl ClassifierBackend for RemoteBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        self.capabilities
    }

    fn batch_limit(&self) -> usize {
        self.batch_limit
    }

    fn classify(&self, task: Task, lines: &[&str]) -> Result<TaskOutput, BackendError> {
        let attempts = self.retries + 1;
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.gate.run(|| self.post(task, lines)) {
                Ok(labels) if labels.len() == lines.len() => return Self::decode(task, labels),
                Ok(labels) => {
                    return Err(BackendError::Protocol(format!(
                        "{} labels for {} lines",
                        labels.len(),
                        lines.len()
                    )))
                }
                Err(e) => {
                    tracing::debug!(attempt, error = %e, "classifier request failed");
                    last = e;
                    if attempt < attempts {
                        std::thread::sleep(Duration::from_millis(25 * u64::from(attempt)));
                    }
                }
            }
        }
        Err(BackendError::Transport { attempts, message: last })
    }
}
