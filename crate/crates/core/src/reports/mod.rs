//! Summary, diagnosis and temporal views over enriched records, and the
//! bundle that carries them.

mod bundle;
pub mod canonical;

pub use bundle::{
    assemble_bundle, BundleError, Counters, FileMeta, Meta, Palette, ReportBundle,
    SCHEMA_VERSION,
};

use crate::broadcast::EnrichedRecord;
use crate::ingest::{MasterStream, Timestamp};
use crate::labeler::{Entity, FaultSet, GoldenSignal, LabelSet};
use crate::templatizer::{TemplateId, TemplateStore};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportsConfig {
    /// Diagnosis window width in seconds.
    pub granularity: u64,
    /// Allowed values for `granularity`.
    pub granularities: Vec<u64>,
    /// Temporal trend bucket width in seconds.
    pub temporal_bucket: u64,
    /// Records per window carried inline in the bundle.
    pub window_cap: usize,
    /// The temporal bucket is widened (by whole multiples) to stay under this.
    pub max_temporal_buckets: usize,
}

impl Default for ReportsConfig {
    fn default() -> Self {
        Self {
            granularity: 60,
            granularities: vec![30, 60, 300],
            temporal_bucket: 3600,
            window_cap: 500,
            max_temporal_buckets: 10_000,
        }
    }
}

impl ReportsConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !self.granularities.contains(&self.granularity) {
            return Err(format!(
                "reports.granularity {} is not one of {:?}",
                self.granularity, self.granularities
            ));
        }
        if self.granularity == 0 || self.temporal_bucket == 0 {
            return Err("report intervals must be positive".into());
        }
        if self.max_temporal_buckets == 0 {
            return Err("reports.max_temporal_buckets must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub template_id: TemplateId,
    pub template: String,
    pub representative_record_id: usize,
    pub representative_text: String,
    pub golden: GoldenSignal,
    pub faults: FaultSet,
    pub entities: Vec<Entity>,
    pub frequency: usize,
    pub first_seen: Option<Timestamp>,
    pub last_seen: Option<Timestamp>,
    /// Indices into `meta.files`.
    pub files: Vec<usize>,
}

/// One row per non-blank template, rarest first (ties by template id).
pub fn build_summary(
    records: &[EnrichedRecord<'_>],
    stream: &MasterStream,
    store: &TemplateStore,
    labels: &[Arc<LabelSet>],
) -> Vec<SummaryRow> {
    struct Acc {
        n: usize,
        first: Option<Timestamp>,
        last: Option<Timestamp>,
        files: BTreeSet<usize>,
    }
    let mut acc: BTreeMap<TemplateId, Acc> = BTreeMap::new();
    for e in records {
        if store.template(e.template_id).blank {
            continue;
        }
        let a = acc.entry(e.template_id).or_insert(Acc {
            n: 0,
            first: None,
            last: None,
            files: BTreeSet::new(),
        });
        a.n += 1;
        if let Some(t) = e.record.effective_ts {
            a.first = Some(a.first.map_or(t, |f| f.min(t)));
            a.last = Some(a.last.map_or(t, |l| l.max(t)));
        }
        a.files.insert(e.record.source);
    }
    let mut rows: Vec<SummaryRow> = acc
        .into_iter()
        .map(|(tid, a)| {
            let t = store.template(tid);
            let l = &labels[tid];
            let rep = &stream.records[t.representative_record_id];
            SummaryRow {
                template_id: tid,
                template: t.text(),
                representative_record_id: t.representative_record_id,
                representative_text: rep.raw.clone(),
                golden: l.golden,
                faults: l.faults.clone(),
                // labels were computed on the body; re-anchor to the raw text
                entities: l
                    .entities
                    .iter()
                    .map(|e| Entity {
                        start: e.start + rep.body_offset,
                        end: e.end + rep.body_offset,
                        ..e.clone()
                    })
                    .filter(|e| e.is_anchored_in(&rep.raw))
                    .collect(),
                frequency: a.n,
                first_seen: a.first,
                last_seen: a.last,
                files: a.files.into_iter().collect(),
            }
        })
        .collect();
    rows.sort_by_key(|r| (r.frequency, r.template_id));
    rows
}

/// `1 - rows / records`, computed as `(records - rows) / records`.
pub fn reduction(records: usize, rows: usize) -> f64 {
    if records == 0 {
        0.0
    } else {
        (records - rows.min(records)) as f64 / records as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowEntry {
    pub record_id: usize,
    pub file: usize,
    pub line_start: usize,
    pub line_end: usize,
    pub ts: Option<Timestamp>,
    pub template_id: TemplateId,
    pub golden: GoldenSignal,
    pub faults: FaultSet,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogWindow {
    pub window_start: Timestamp,
    /// Seconds.
    pub granularity: u64,
    /// Every record in the window, in stream order.
    pub record_ids: Vec<usize>,
    /// The first `window_cap` records with text and provenance.
    pub entries: Vec<WindowEntry>,
    /// Records not carried in `entries`.
    pub overflow: usize,
    pub trigger_signals: BTreeSet<GoldenSignal>,
}

/// Problematic golden signal or a fault other than `other`.
pub fn is_relevant(labels: &LabelSet) -> bool {
    labels.is_problematic() || labels.is_faulty()
}

fn align(t: Timestamp, width_secs: u64) -> Timestamp {
    let w = width_secs as i64 * 1000;
    let ms = t.timestamp_millis();
    DateTime::<Utc>::from_timestamp_millis(ms.div_euclid(w) * w).expect("aligned instant in range")
}

/// Epoch-aligned windows holding at least one relevant record. Returns the
/// windows and warnings about relevant records without a timestamp.
pub fn build_diagnosis(
    records: &[EnrichedRecord<'_>],
    blank: Option<TemplateId>,
    granularity: u64,
    cap: usize,
) -> (Vec<LogWindow>, Vec<String>) {
    assert!(granularity > 0, "granularity must be positive");
    let mut by_window: BTreeMap<Timestamp, Vec<&EnrichedRecord<'_>>> = BTreeMap::new();
    let mut undated = 0;
    for e in records {
        if Some(e.template_id) == blank {
            continue;
        }
        match e.record.effective_ts {
            Some(t) => by_window.entry(align(t, granularity)).or_default().push(e),
            None if is_relevant(&e.labels) => undated += 1,
            None => {}
        }
    }
    let mut warnings = Vec::new();
    if undated > 0 {
        warnings.push(format!(
            "{undated} problematic record(s) carry no timestamp and appear in no diagnosis window"
        ));
    }
    let windows = by_window
        .into_iter()
        .filter(|(_, recs)| recs.iter().any(|e| is_relevant(&e.labels)))
        .map(|(start, recs)| LogWindow {
            window_start: start,
            granularity,
            record_ids: recs.iter().map(|e| e.record.record_id).collect(),
            entries: recs
                .iter()
                .take(cap)
                .map(|e| WindowEntry {
                    record_id: e.record.record_id,
                    file: e.record.source,
                    line_start: e.record.line_start,
                    line_end: e.record.line_end,
                    ts: e.record.effective_ts,
                    template_id: e.template_id,
                    golden: e.labels.golden,
                    faults: e.labels.faults.clone(),
                    text: e.record.raw.clone(),
                })
                .collect(),
            overflow: recs.len().saturating_sub(cap),
            trigger_signals: recs
                .iter()
                .filter(|e| is_relevant(&e.labels))
                .map(|e| e.labels.golden)
                .collect(),
        })
        .collect();
    (windows, warnings)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalBucket {
    pub bucket_start: Timestamp,
    pub counts: BTreeMap<GoldenSignal, u64>,
}

impl TemporalBucket {
    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }
}

/// Smallest multiple of `bucket` (seconds) that covers the dated records in
/// at most `max_buckets` buckets.
pub fn fit_bucket(records: &[EnrichedRecord<'_>], bucket: u64, max_buckets: usize) -> u64 {
    let dated = records.iter().filter_map(|e| e.record.effective_ts);
    let (Some(first), Some(last)) = (dated.clone().min(), dated.max()) else {
        return bucket;
    };
    let span = (last - first).num_seconds().max(0) as u64;
    let max = max_buckets.max(2) as u64;
    // aligned buckets covering `span` number at most span/width + 2
    let mut k = (span / (bucket * (max - 2))).saturating_sub(1).max(1);
    while span / (bucket * k) + 2 > max {
        k += 1;
    }
    bucket * k
}

/// Contiguous epoch-aligned buckets from the first to the last timestamped
/// record, every signal present (zero when absent).
pub fn build_temporal(records: &[EnrichedRecord<'_>], bucket: u64) -> Vec<TemporalBucket> {
    assert!(bucket > 0, "bucket must be positive");
    let dated: Vec<(Timestamp, GoldenSignal)> = records
        .iter()
        .filter_map(|e| e.record.effective_ts.map(|t| (t, e.labels.golden)))
        .collect();
    let (Some(first), Some(last)) =
        (dated.iter().map(|d| d.0).min(), dated.iter().map(|d| d.0).max())
    else {
        return Vec::new();
    };
    let start = align(first, bucket);
    let w = bucket as i64 * 1000;
    let n = ((last - start).num_milliseconds() / w) as usize + 1;
    let zero: BTreeMap<GoldenSignal, u64> = GoldenSignal::ALL.iter().map(|g| (*g, 0)).collect();
    let mut out: Vec<TemporalBucket> = (0..n)
        .map(|i| TemporalBucket {
            bucket_start: start + chrono::Duration::milliseconds(w * i as i64),
            counts: zero.clone(),
        })
        .collect();
    for (t, g) in dated {
        let i = ((t - start).num_milliseconds() / w) as usize;
        *out[i].counts.get_mut(&g).expect("all signals present") += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reduction_is_exact_for_round_numbers() {
        assert_eq!(reduction(1000, 10), 0.99);
        assert_eq!(reduction(1, 1), 0.0);
        assert_eq!(reduction(0, 0), 0.0);
    }

    #[test]
    fn alignment() {
        let t = DateTime::parse_from_rfc3339("2024-01-01T10:00:50.500Z").unwrap().to_utc();
        assert_eq!(align(t, 60).to_rfc3339(), "2024-01-01T10:00:00+00:00");
        assert_eq!(align(t, 3600).to_rfc3339(), "2024-01-01T10:00:00+00:00");
        assert_eq!(align(t, 30).to_rfc3339(), "2024-01-01T10:00:30+00:00");
    }

    #[test]
    fn config_validation() {
        assert!(ReportsConfig::default().validate().is_ok());
        let bad = ReportsConfig { granularity: 45, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
