//! Classify one representative per template and copy its labels to every
//! member record.

use crate::ingest::{LogRecord, MasterStream};
use crate::labeler::{rule_based_entities, Entity, LabelSet, Labeler, Task};
use crate::templatizer::{TemplateId, TemplateStore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BroadcastMode {
    /// Templatize everything first, then classify representatives.
    #[default]
    Offline,
    /// Classify each template the moment it is discovered.
    Online,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BroadcastConfig {
    pub mode: BroadcastMode,
    /// Re-run rule NER on every record so entity spans fit its own text.
    pub span_entities: bool,
}

#[derive(Debug, Clone)]
pub struct EnrichedRecord<'a> {
    pub record: &'a LogRecord,
    pub template_id: TemplateId,
    pub labels: Arc<LabelSet>,
    /// Entities anchored to `record.raw`, when requested.
    pub per_line_entities: Option<Vec<Entity>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BroadcastStats {
    pub lines_processed: usize,
    pub templates_discovered: usize,
    /// Lines sent to the classifier, per task.
    pub classifier_calls: BTreeMap<Task, usize>,
    #[serde(skip)]
    pub wall_time: BTreeMap<String, Duration>,
}

impl BroadcastStats {
    pub fn calls(&self, task: Task) -> usize {
        self.classifier_calls.get(&task).copied().unwrap_or(0)
    }
}

#[derive(Default)]
struct Counters {
    calls: [AtomicUsize; 3],
}

impl Counters {
    fn add(&self, labeler: &Labeler, n: usize) {
        for (i, t) in Task::ALL.into_iter().enumerate() {
            if labeler.capabilities().serves(t) {
                self.calls[i].fetch_add(n, Ordering::Relaxed);
            }
        }
    }

    fn snapshot(&self) -> BTreeMap<Task, usize> {
        Task::ALL
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, self.calls[i].load(Ordering::Relaxed)))
            .collect()
    }
}

pub struct Enriched<'a> {
    pub records: Vec<EnrichedRecord<'a>>,
    /// Labels per template id.
    pub template_labels: Vec<Arc<LabelSet>>,
    pub stats: BroadcastStats,
}

fn classify_parallel(labeler: &Labeler, lines: &[&str], counters: &Counters) -> Vec<LabelSet> {
    lines
        .par_chunks(CHUNK)
        .flat_map_iter(|chunk| {
            counters.add(labeler, chunk.len());
            labeler.classify(chunk)
        })
        .collect()
}

fn line_entities(rec: &LogRecord, on: bool) -> Option<Vec<Entity>> {
    on.then(|| rule_based_entities(&rec.raw))
}

/// Offline broadcast over a finalized store: each distinct template token
/// sequence is classified once, on its representative's body.
pub fn enrich_stream<'a>(
    stream: &'a MasterStream,
    store: &TemplateStore,
    labeler: &Labeler,
    config: &BroadcastConfig,
) -> Enriched<'a> {
    let started = Instant::now();
    let counters = Counters::default();
    let blank = Arc::new(LabelSet::fallback(labeler.backend_id()));

    // one classification per distinct token sequence
    let mut key_of: Vec<Option<usize>> = vec![None; store.len()];
    let mut keys: HashMap<&[String], usize> = HashMap::new();
    let mut bodies: Vec<&str> = Vec::new();
    for t in store.templates() {
        if t.blank {
            continue;
        }
        let next = keys.len();
        let k = *keys.entry(t.tokens.as_slice()).or_insert_with(|| {
            bodies.push(stream.records[t.representative_record_id].body());
            next
        });
        key_of[t.template_id] = Some(k);
    }
    let labels: Vec<Arc<LabelSet>> =
        classify_parallel(labeler, &bodies, &counters).into_iter().map(Arc::new).collect();
    let template_labels: Vec<Arc<LabelSet>> = key_of
        .iter()
        .map(|k| k.map_or_else(|| blank.clone(), |k| labels[k].clone()))
        .collect();
    let classified = Instant::now();

    let records: Vec<EnrichedRecord<'a>> = stream
        .records
        .par_iter()
        .map(|r| {
            let tid = store.template_of(r.record_id).expect("record was templatized");
            EnrichedRecord {
                record: r,
                template_id: tid,
                labels: template_labels[tid].clone(),
                per_line_entities: line_entities(r, config.span_entities),
            }
        })
        .collect();

    let mut stats = BroadcastStats {
        lines_processed: records.len(),
        templates_discovered: store.templates().iter().filter(|t| !t.blank).count(),
        classifier_calls: counters.snapshot(),
        wall_time: BTreeMap::new(),
    };
    stats.wall_time.insert("classify".into(), classified - started);
    stats.wall_time.insert("broadcast".into(), classified.elapsed());
    Enriched { records, template_labels, stats }
}

/// Templatizes `stream` into `store` and classifies each template on first
/// sight, using the discovering record's body.
pub fn enrich_online<'a>(
    stream: &'a MasterStream,
    store: &mut TemplateStore,
    labeler: &Labeler,
    config: &BroadcastConfig,
) -> Enriched<'a> {
    let started = Instant::now();
    let counters = Counters::default();
    let blank = Arc::new(LabelSet::fallback(labeler.backend_id()));
    let mut template_labels: Vec<Arc<LabelSet>> = Vec::new();
    let mut records = Vec::with_capacity(stream.len());
    for r in &stream.records {
        let (tid, is_new) = store.insert_body(r.body(), r.record_id);
        if is_new {
            let l = if store.template(tid).blank {
                blank.clone()
            } else {
                counters.add(labeler, 1);
                Arc::new(labeler.classify(&[r.body()]).remove(0))
            };
            debug_assert_eq!(template_labels.len(), tid);
            template_labels.push(l);
        }
        records.push(EnrichedRecord {
            record: r,
            template_id: tid,
            labels: template_labels[tid].clone(),
            per_line_entities: line_entities(r, config.span_entities),
        });
    }
    let mut stats = BroadcastStats {
        lines_processed: records.len(),
        templates_discovered: store.templates().iter().filter(|t| !t.blank).count(),
        classifier_calls: counters.snapshot(),
        wall_time: BTreeMap::new(),
    };
    stats.wall_time.insert("online".into(), started.elapsed());
    Enriched { records, template_labels, stats }
}

/// Baseline without broadcasting: every record body is classified.
pub fn enrich_per_line<'a>(
    stream: &'a MasterStream,
    store: &TemplateStore,
    labeler: &Labeler,
    config: &BroadcastConfig,
) -> Enriched<'a> {
    let started = Instant::now();
    let counters = Counters::default();
    let bodies: Vec<&str> = stream.records.iter().map(LogRecord::body).collect();
    let labels = classify_parallel(labeler, &bodies, &counters);
    let mut template_labels: Vec<Option<Arc<LabelSet>>> = vec![None; store.len()];
    let records: Vec<EnrichedRecord<'a>> = stream
        .records
        .iter()
        .zip(labels)
        .map(|(r, l)| {
            let tid = store.template_of(r.record_id).expect("record was templatized");
            let l = Arc::new(l);
            template_labels[tid].get_or_insert_with(|| l.clone());
            EnrichedRecord {
                record: r,
                template_id: tid,
                labels: l,
                per_line_entities: line_entities(r, config.span_entities),
            }
        })
        .collect();
    let fallback = Arc::new(LabelSet::fallback(labeler.backend_id()));
    let mut stats = BroadcastStats {
        lines_processed: records.len(),
        templates_discovered: store.templates().iter().filter(|t| !t.blank).count(),
        classifier_calls: counters.snapshot(),
        wall_time: BTreeMap::new(),
    };
    stats.wall_time.insert("classify".into(), started.elapsed());
    Enriched {
        records,
        template_labels: template_labels.into_iter().map(|l| l.unwrap_or_else(|| fallback.clone())).collect(),
        stats,
    }
}

/// Writes one JSON object per record.
pub fn write_jsonl<W: Write>(
    mut w: W,
    stream: &MasterStream,
    records: &[EnrichedRecord<'_>],
) -> std::io::Result<()> {
    for e in records {
        let r = e.record;
        let entities = e.per_line_entities.as_ref().unwrap_or(&e.labels.entities);
        let line = serde_json::json!({
            "record_id": r.record_id,
            "file": stream.file_of(r).path.display().to_string(),
            "line_start": r.line_start,
            "line_end": r.line_end,
            "ts": r.timestamp.map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Millis, true)),
            "template_id": e.template_id,
            "golden": e.labels.golden,
            "faults": e.labels.faults,
            "entities": entities,
        });
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{assemble_text, consolidate, FormatTable, SourceFile};
    use crate::labeler::GoldenSignal;
    use crate::templatizer::{templatize, TemplatizerConfig};

    fn stream(text: &str) -> MasterStream {
        let a = assemble_text(text, 0, &FormatTable::default());
        let f = SourceFile { path: "x.log".into(), index: 0, byte_size: text.len() as u64, line_count: a.line_count };
        consolidate(vec![f], vec![a.records])
    }

    const TEXT: &str = "\
2024-01-01 00:00:00 worker 1 started
2024-01-01 00:00:01 worker 2 started
2024-01-01 00:00:02 request 17 timed out
2024-01-01 00:00:03 worker 3 started
2024-01-01 00:00:04 request 18 timed out
";

    #[test]
    fn one_call_per_template_and_consistent_labels() {
        let s = stream(TEXT);
        let store = templatize(&s, &TemplatizerConfig::default()).unwrap();
        let l = Labeler::rule();
        let e = enrich_stream(&s, &store, &l, &BroadcastConfig::default());
        assert_eq!(e.stats.templates_discovered, 2);
        for t in Task::ALL {
            assert_eq!(e.stats.calls(t), 2);
        }
        assert_eq!(e.records.len(), 5);
        assert_eq!(e.records[2].labels.golden, GoldenSignal::Latency);
        assert_eq!(e.records[4].labels, e.records[2].labels);

        let p = enrich_per_line(&s, &store, &l, &BroadcastConfig::default());
        assert_eq!(p.stats.calls(Task::Gsc), 5);
        for (a, b) in e.records.iter().zip(&p.records) {
            assert_eq!(a.labels.golden, b.labels.golden);
            assert_eq!(a.labels.faults, b.labels.faults);
        }
    }

    #[test]
    fn online_matches_offline() {
        let s = stream(TEXT);
        let l = Labeler::rule();
        let mut store = crate::templatizer::TemplateStore::new(&TemplatizerConfig::default()).unwrap();
        let on = enrich_online(&s, &mut store, &l, &BroadcastConfig::default());
        let store2 = templatize(&s, &TemplatizerConfig::default()).unwrap();
        let off = enrich_stream(&s, &store2, &l, &BroadcastConfig::default());
        assert_eq!(on.stats.calls(Task::Gsc), off.stats.calls(Task::Gsc));
        for (a, b) in on.records.iter().zip(&off.records) {
            assert_eq!(a.labels, b.labels);
            assert_eq!(a.template_id, b.template_id);
        }
    }

    #[test]
    fn single_line_and_empty() {
        let s = stream("2024-01-01 00:00:00 hello\n");
        let store = templatize(&s, &TemplatizerConfig::default()).unwrap();
        let e = enrich_stream(&s, &store, &Labeler::rule(), &BroadcastConfig::default());
        assert_eq!((e.records.len(), e.stats.calls(Task::Ner)), (1, 1));

        let s = MasterStream::default();
        let store = templatize(&s, &TemplatizerConfig::default()).unwrap();
        let e = enrich_per_line(&s, &store, &Labeler::rule(), &BroadcastConfig::default());
        assert!(e.records.is_empty());
        assert_eq!(e.stats.calls(Task::Gsc), 0);
    }

    #[test]
    fn blank_bodies_are_not_classified() {
        let s = stream("2024-01-01 00:00:00 \n2024-01-01 00:00:01 x failed\n");
        let store = templatize(&s, &TemplatizerConfig::default()).unwrap();
        let e = enrich_stream(&s, &store, &Labeler::rule(), &BroadcastConfig::default());
        assert_eq!(e.stats.calls(Task::Gsc), 1);
        assert_eq!(e.records[0].labels.golden, GoldenSignal::Information);
    }

    #[test]
    fn jsonl_schema() {
        let s = stream("2024-01-01 00:00:00 pid=42 wrote /var/log/x.log\n");
        let store = templatize(&s, &TemplatizerConfig::default()).unwrap();
        let cfg = BroadcastConfig { span_entities: true, ..Default::default() };
        let e = enrich_stream(&s, &store, &Labeler::rule(), &cfg);
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &s, &e.records).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["file"], "x.log");
        assert_eq!(v["ts"], "2024-01-01T00:00:00.000Z");
        assert_eq!(v["golden"], "information");
        assert_eq!(v["faults"], serde_json::json!(["other"]));
        let ents = v["entities"].as_array().unwrap();
        // anchored to the raw line, so the timestamp itself is an entity
        assert_eq!(ents[0]["type"], "DateTime");
        assert_eq!(ents[1]["type"], "NVPair");
        assert_eq!(ents[1]["start"], 20);
    }
}
