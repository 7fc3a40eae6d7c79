//! Golden signal, fault category and entity labels behind pluggable
//! classifier backends.

mod ner;
mod recall;
mod remote;
mod rules;

pub use ner::rule_based_entities;
pub use recall::{macro_recall, RecallError};
pub use remote::RemoteBackend;
pub use rules::{rule_based_golden, KeywordTables, RuleSet, VariableRule};

use crate::templatizer::Masker;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GoldenSignal {
    Latency,
    Traffic,
    Error,
    Saturation,
    Availability,
    Information,
}

impl GoldenSignal {
    pub const ALL: [GoldenSignal; 6] = [
        Self::Latency,
        Self::Traffic,
        Self::Error,
        Self::Saturation,
        Self::Availability,
        Self::Information,
    ];

    /// Order in which the rule backend tries the problematic signals.
    pub const PRIORITY: [GoldenSignal; 5] =
        [Self::Error, Self::Availability, Self::Saturation, Self::Latency, Self::Traffic];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Latency => "latency",
            Self::Traffic => "traffic",
            Self::Error => "error",
            Self::Saturation => "saturation",
            Self::Availability => "availability",
            Self::Information => "information",
        }
    }

    pub fn is_problematic(self) -> bool {
        self != Self::Information
    }
}

impl fmt::Display for GoldenSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GoldenSignal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown golden signal `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultCategory {
    Memory,
    Network,
    Authentication,
    Io,
    Device,
    Application,
    Other,
}

impl FaultCategory {
    pub const ALL: [FaultCategory; 7] = [
        Self::Memory,
        Self::Network,
        Self::Authentication,
        Self::Io,
        Self::Device,
        Self::Application,
        Self::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Memory => "memory",
            Self::Network => "network",
            Self::Authentication => "authentication",
            Self::Io => "io",
            Self::Device => "device",
            Self::Application => "application",
            Self::Other => "other",
        }
    }
}

impl fmt::Display for FaultCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub type FaultSet = BTreeSet<FaultCategory>;

pub fn other_only() -> FaultSet {
    BTreeSet::from([FaultCategory::Other])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EntityType {
    DateTime,
    Level,
    ProcessID,
    ErrorCode,
    #[serde(rename = "URL")]
    Url,
    Cause,
    Symptom,
    NVPair,
    FileOrDir,
}

impl EntityType {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DateTime => "DateTime",
            Self::Level => "Level",
            Self::ProcessID => "ProcessID",
            Self::ErrorCode => "ErrorCode",
            Self::Url => "URL",
            Self::Cause => "Cause",
            Self::Symptom => "Symptom",
            Self::NVPair => "NVPair",
            Self::FileOrDir => "FileOrDir",
        }
    }
}

/// An entity with a byte span into the text it was extracted from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entity {
    #[serde(rename = "type")]
    pub entity_type: EntityType,
    pub start: usize,
    pub end: usize,
    pub text: String,
}

impl Entity {
    pub fn is_anchored_in(&self, text: &str) -> bool {
        self.start <= self.end && text.get(self.start..self.end) == Some(self.text.as_str())
    }
}

/// Labels for one line. Entity spans refer to the text that was classified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSet {
    pub golden: GoldenSignal,
    pub faults: FaultSet,
    pub entities: Vec<Entity>,
    pub backend_id: String,
    /// Golden-signal confidence when the backend reports one; not used by
    /// reports.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<f64>,
}

impl LabelSet {
    pub fn fallback(backend_id: &str) -> Self {
        Self {
            golden: GoldenSignal::Information,
            faults: other_only(),
            entities: Vec::new(),
            backend_id: backend_id.to_owned(),
            confidence: None,
        }
    }

    pub fn is_problematic(&self) -> bool {
        self.golden.is_problematic()
    }

    /// Relevant for diagnosis: a problematic signal or a real fault.
    pub fn is_faulty(&self) -> bool {
        self.faults.iter().any(|c| *c != FaultCategory::Other)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Gsc,
    Fcp,
    Ner,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Gsc, Task::Fcp, Task::Ner];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Gsc => "gsc",
            Task::Fcp => "fcp",
            Task::Ner => "ner",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub gsc: bool,
    pub fcp: bool,
    pub ner: bool,
}

impl Capabilities {
    pub const ALL: Self = Self { gsc: true, fcp: true, ner: true };

    pub fn serves(&self, task: Task) -> bool {
        match task {
            Task::Gsc => self.gsc,
            Task::Fcp => self.fcp,
            Task::Ner => self.ner,
        }
    }

    pub fn tasks(&self) -> impl Iterator<Item = Task> + '_ {
        Task::ALL.into_iter().filter(|t| self.serves(*t))
    }

    pub fn from_tasks(tasks: &[Task]) -> Self {
        Self {
            gsc: tasks.contains(&Task::Gsc),
            fcp: tasks.contains(&Task::Fcp),
            ner: tasks.contains(&Task::Ner),
        }
    }
}

/// Per-task answer for a batch, one entry per line.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskOutput {
    Golden(Vec<(GoldenSignal, Option<f64>)>),
    Faults(Vec<FaultSet>),
    Entities(Vec<Vec<Entity>>),
}

impl TaskOutput {
    fn len(&self) -> usize {
        match self {
            TaskOutput::Golden(v) => v.len(),
            TaskOutput::Faults(v) => v.len(),
            TaskOutput::Entities(v) => v.len(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("batch of {got} exceeds limit {limit}")]
    BatchTooLarge { got: usize, limit: usize },
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport { .. })
    }
}

#[derive(Debug, Error)]
pub enum LabelerError {
    #[error("labeler configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// A classifier for some subset of the three tasks. Implementations must be
/// callable from several threads at once.
pub trait ClassifierBackend: Send + Sync {
    fn id(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    fn batch_limit(&self) -> usize;

    fn classify(&self, task: Task, lines: &[&str]) -> Result<TaskOutput, BackendError>;
}

/// Labels `lines` with every task the backend serves; other tasks keep
/// their defaults (information, {other}, no entities).
pub fn classify_batch(
    backend: &dyn ClassifierBackend,
    lines: &[&str],
) -> Result<Vec<LabelSet>, BackendError> {
    let limit = backend.batch_limit();
    if lines.len() > limit {
        return Err(BackendError::BatchTooLarge { got: lines.len(), limit });
    }
    let mut out: Vec<LabelSet> = lines.iter().map(|_| LabelSet::fallback(backend.id())).collect();
    for task in backend.capabilities().tasks() {
        let res = backend.classify(task, lines)?;
        if res.len() != lines.len() {
            return Err(BackendError::Protocol(format!(
                "{task}: {} answers for {} lines",
                res.len(),
                lines.len()
            )));
        }
        match res {
            TaskOutput::Golden(v) => {
                for (l, (g, c)) in out.iter_mut().zip(v) {
                    l.golden = g;
                    l.confidence = c;
                }
            }
            TaskOutput::Faults(v) => {
                for (l, mut f) in out.iter_mut().zip(v) {
                    if f.is_empty() {
                        f = other_only();
                    } else if f.len() > 1 {
                        f.remove(&FaultCategory::Other);
                    }
                    l.faults = f;
                }
            }
            TaskOutput::Entities(v) => {
                for (l, e) in out.iter_mut().zip(v) {
                    l.entities = e;
                }
            }
        }
    }
    Ok(out)
}

/// Deterministic keyword and regex classifier.
#[derive(Debug, Clone)]
pub struct RuleBackend {
    id: String,
    rules: RuleSet,
}

impl RuleBackend {
    pub fn new(tables: &KeywordTables) -> Result<Self, LabelerError> {
        let rules = RuleSet::new(tables)?;
        let id = if rules.has_variable_rules() { "rule+variable" } else { "rule" };
        Ok(Self { id: id.to_owned(), rules })
    }

    pub fn rules(&self) -> &RuleSet {
        &self.rules
    }

    pub fn label(&self, text: &str) -> LabelSet {
        LabelSet {
            golden: self.rules.golden(text),
            faults: self.rules.faults(text),
            entities: rule_based_entities(text),
            backend_id: self.id.clone(),
            confidence: None,
        }
    }
}

impl Default for RuleBackend {
    fn default() -> Self {
        Self { id: "rule".to_owned(), rules: RuleSet::default() }
    }
}

impl ClassifierBackend for RuleBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::ALL
    }

    fn batch_limit(&self) -> usize {
        usize::MAX
    }

    fn classify(&self, task: Task, lines: &[&str]) -> Result<TaskOutput, BackendError> {
        Ok(match task {
            Task::Gsc => TaskOutput::Golden(lines.iter().map(|l| (self.rules.golden(l), None)).collect()),
            Task::Fcp => TaskOutput::Faults(lines.iter().map(|l| self.rules.faults(l)).collect()),
            Task::Ner => TaskOutput::Entities(lines.iter().map(|l| rule_based_entities(l)).collect()),
        })
    }
}

/// Masks every line with the templatizer's rules before handing it on, so
/// the answer depends only on the masked token sequence (template-pure).
pub struct MaskedInput<B> {
    inner: B,
    masker: Masker,
    id: String,
}

impl<B: ClassifierBackend> MaskedInput<B> {
    pub fn new(inner: B, masker: Masker) -> Self {
        let id = format!("masked:{}", inner.id());
        Self { inner, masker, id }
    }

    pub fn mask(&self, line: &str) -> String {
        crate::templatizer::tokenize(line, &self.masker).tokens.join(" ")
    }
}

impl<B: ClassifierBackend> ClassifierBackend for MaskedInput<B> {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn batch_limit(&self) -> usize {
        self.inner.batch_limit()
    }

    fn classify(&self, task: Task, lines: &[&str]) -> Result<TaskOutput, BackendError> {
        let masked: Vec<String> = lines.iter().map(|l| self.mask(l)).collect();
        let refs: Vec<&str> = masked.iter().map(String::as_str).collect();
        self.inner.classify(task, &refs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Rule,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelerConfig {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub timeout_ms: u64,
    pub retries: u32,
    pub pool: usize,
    pub batch_limit: usize,
    /// Tasks served by the remote backend.
    pub tasks: Vec<Task>,
    /// Keyword tables file (JSON or TOML); built-in tables when absent.
    pub keywords: Option<PathBuf>,
    /// Classify masked text instead of the raw body.
    pub template_pure: bool,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        Self {
            backend: BackendKind::Rule,
            endpoint: None,
            timeout_ms: 10_000,
            retries: 2,
            pool: 4,
            batch_limit: 32,
            tasks: Task::ALL.to_vec(),
            keywords: None,
            template_pure: false,
        }
    }
}

/// A backend plus a rule-based fallback for lines the backend could not
/// label. Fallbacks and dropped entities are recorded as warnings.
pub struct Labeler {
    backend: Arc<dyn ClassifierBackend>,
    fallback: RuleBackend,
    warnings: Mutex<Vec<String>>,
}

impl Labeler {
    pub fn new(backend: Arc<dyn ClassifierBackend>, fallback: RuleBackend) -> Self {
        Self { backend, fallback, warnings: Mutex::new(Vec::new()) }
    }

    pub fn rule() -> Self {
        Self::new(Arc::new(RuleBackend::default()), RuleBackend::default())
    }

    pub fn from_config(cfg: &LabelerConfig, masker: &Masker) -> Result<Self, LabelerError> {
        let tables = match &cfg.keywords {
            Some(p) => KeywordTables::from_path(p)?,
            None => KeywordTables::default(),
        };
        let rule = RuleBackend::new(&tables)?;
        let backend: Arc<dyn ClassifierBackend> = match cfg.backend {
            BackendKind::Rule if cfg.template_pure => {
                Arc::new(MaskedInput::new(rule.clone(), masker.clone()))
            }
            BackendKind::Rule => Arc::new(rule.clone()),
            BackendKind::Remote => {
                let endpoint = cfg.endpoint.as_deref().ok_or_else(|| {
                    LabelerError::Config("remote backend needs labeler.endpoint".into())
                })?;
                let remote = RemoteBackend::new(
                    endpoint,
                    Duration::from_millis(cfg.timeout_ms),
                    cfg.retries,
                    cfg.pool,
                    cfg.batch_limit,
                    Capabilities::from_tasks(&cfg.tasks),
                )?;
                if cfg.template_pure {
                    Arc::new(MaskedInput::new(remote, masker.clone()))
                } else {
                    Arc::new(remote)
                }
            }
        };
        Ok(Self::new(backend, rule))
    }

    pub fn backend(&self) -> &dyn ClassifierBackend {
        self.backend.as_ref()
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn capabilities(&self) -> Capabilities {
        self.backend.capabilities()
    }

    fn warn(&self, msg: String) {
        tracing::warn!("{msg}");
        self.warnings.lock().unwrap_or_else(|e| e.into_inner()).push(msg);
    }

    pub fn take_warnings(&self) -> Vec<String> {
        std::mem::take(&mut *self.warnings.lock().unwrap_or_else(|e| e.into_inner()))
    }

    /// Labels any number of lines, chunked to the backend's batch limit.
    pub fn classify(&self, lines: &[&str]) -> Vec<LabelSet> {
        let limit = self.backend.batch_limit().max(1);
        let mut out = Vec::with_capacity(lines.len());
        for chunk in lines.chunks(limit) {
            match classify_batch(self.backend.as_ref(), chunk) {
                Ok(mut labels) => {
                    for (l, text) in labels.iter_mut().zip(chunk) {
                        let before = l.entities.len();
                        l.entities.retain(|e| e.is_anchored_in(text));
                        if l.entities.len() != before {
                            self.warn(format!(
                                "{}: dropped {} entities whose span does not match the text",
                                self.backend.id(),
                                before - l.entities.len()
                            ));
                        }
                    }
                    out.extend(labels);
                }
                Err(e) => {
                    self.warn(format!(
                        "{} failed for {} line(s), used rule fallback: {e}",
                        self.backend.id(),
                        chunk.len()
                    ));
                    out.extend(chunk.iter().map(|l| self.fallback.label(l)));
                }
            }
        }
        out
    }
}
