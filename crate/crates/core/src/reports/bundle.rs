use super::{canonical, LogWindow, SummaryRow, TemporalBucket};
use crate::causal::CausalGraph;
use crate::labeler::{EntityType, FaultCategory, GoldenSignal, Task};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

pub const SCHEMA_VERSION: &str = "1.0.0";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("bundle cross-reference: {0}")]
    CrossReference(String),
    #[error("bundle serialization: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileMeta {
    pub index: usize,
    pub path: String,
    pub byte_size: u64,
    pub line_count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub total_lines: usize,
    pub records: usize,
    pub timestamped_records: usize,
    pub blank_records: usize,
    pub templates: usize,
    pub problematic_records: usize,
    pub summary_rows: usize,
    /// `1 - summary_rows / records`.
    pub reduction: f64,
    pub classifier_calls: BTreeMap<Task, usize>,
    pub diagnosis_windows: usize,
    pub causal_edges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub golden: BTreeMap<GoldenSignal, String>,
    pub faults: BTreeMap<FaultCategory, String>,
    pub entities: BTreeMap<EntityType, String>,
}

fn colors<K: Ord + Copy>(v: &[(K, &str)]) -> BTreeMap<K, String> {
    v.iter().map(|(k, c)| (*k, c.to_string())).collect()
}

impl Default for Palette {
    fn default() -> Self {
        use EntityType as E;
        use FaultCategory as C;
        use GoldenSignal as G;
        Self {
            golden: colors(&[
                (G::Error, "#d62728"),
                (G::Availability, "#9467bd"),
                (G::Saturation, "#ff7f0e"),
                (G::Latency, "#bcbd22"),
                (G::Traffic, "#1f77b4"),
                (G::Information, "#7f7f7f"),
            ]),
            faults: colors(&[
                (C::Memory, "#8c564b"),
                (C::Network, "#17becf"),
                (C::Authentication, "#e377c2"),
                (C::Io, "#2ca02c"),
                (C::Device, "#ff9896"),
                (C::Application, "#aec7e8"),
                (C::Other, "#c7c7c7"),
            ]),
            entities: colors(&[
                (E::DateTime, "#6b6ecf"),
                (E::Level, "#b5cf6b"),
                (E::ProcessID, "#e7ba52"),
                (E::ErrorCode, "#d6616b"),
                (E::Url, "#3182bd"),
                (E::Cause, "#e6550d"),
                (E::Symptom, "#fd8d3c"),
                (E::NVPair, "#31a354"),
                (E::FileOrDir, "#756bb1"),
            ]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Meta {
    pub schema_version: String,
    pub run_id: String,
    pub generator: String,
    pub inputs: Vec<String>,
    pub files: Vec<FileMeta>,
    pub config_digest: String,
    pub config: serde_json::Value,
    /// Diagnosis window width, seconds.
    pub granularity: u64,
    /// Temporal bucket width, seconds.
    pub temporal_bucket: u64,
    pub window_cap: usize,
    pub counters: Counters,
    pub palette: Palette,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub meta: Meta,
    pub summary: Vec<SummaryRow>,
    pub diagnosis: Vec<LogWindow>,
    pub temporal: Vec<TemporalBucket>,
    pub causal: CausalGraph<f64>,
    pub warnings: Vec<String>,
}

impl ReportBundle {
    pub fn to_canonical_json(&self) -> Result<String, BundleError> {
        Ok(canonical::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, BundleError> {
        Ok(serde_json::from_str(text)?)
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), BundleError> {
    if ok {
        Ok(())
    } else {
        Err(BundleError::CrossReference(msg()))
    }
}

/// Cross-checks the parts and packs them. Non-finite F statistics (perfect
/// fits) are stored as `f64::MAX` since JSON has no infinity.
pub fn assemble_bundle(
    mut meta: Meta,
    summary: Vec<SummaryRow>,
    diagnosis: Vec<LogWindow>,
    temporal: Vec<TemporalBucket>,
    mut causal: CausalGraph<f64>,
    mut warnings: Vec<String>,
) -> Result<ReportBundle, BundleError> {
    let templates: BTreeSet<usize> = summary.iter().map(|r| r.template_id).collect();
    let n_files = meta.files.len();
    for r in &summary {
        check(r.files.iter().all(|&f| f < n_files), || {
            format!("summary row {} names an unknown file", r.template_id)
        })?;
    }
    let nodes: BTreeSet<usize> = causal.nodes.iter().map(|n| n.template_id).collect();
    for n in &nodes {
        check(templates.contains(n), || format!("causal node {n} has no summary row"))?;
    }
    for e in &mut causal.edges {
        check(nodes.contains(&e.from) && nodes.contains(&e.to), || {
            format!("causal edge {} -> {} points outside the node set", e.from, e.to)
        })?;
        if !e.f_stat.is_finite() {
            e.f_stat = f64::MAX;
        }
    }
    for w in &diagnosis {
        for en in &w.entries {
            check(templates.contains(&en.template_id), || {
                format!("diagnosis record {} has unknown template {}", en.record_id, en.template_id)
            })?;
            check(en.file < n_files, || format!("diagnosis record {} names an unknown file", en.record_id))?;
        }
    }
    if meta.counters.records == 0 {
        warnings.push("no log records found in the input".into());
    }
    meta.counters.summary_rows = summary.len();
    meta.counters.diagnosis_windows = diagnosis.len();
    meta.counters.causal_edges = causal.edges.len();
    Ok(ReportBundle { meta, summary, diagnosis, temporal, causal, warnings })
}
