//! End-to-end analysis of a dump: ingest, templatize, broadcast labels,
//! causal graph, reports.

use crate::broadcast::{enrich_online, enrich_stream, write_jsonl, BroadcastMode, BroadcastStats};
use crate::causal::{build_graph, build_matrix, interval_count, CausalGraph};
use crate::config::{hex, RunConfig};
use crate::ingest::{ingest, IngestError, MasterStream};
use crate::labeler::{GoldenSignal, Labeler, LabelerError};
use crate::reports::{
    assemble_bundle, build_diagnosis, build_summary, build_temporal, fit_bucket, reduction, BundleError,
    Counters, FileMeta, Meta, Palette, ReportBundle, SCHEMA_VERSION,
};
use crate::templatizer::{templatize, TemplateStore, TemplatizerError};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;
use thiserror::Error;

pub const GENERATOR: &str = concat!("logan ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Templatizer(#[from] TemplatizerError),
    #[error(transparent)]
    Labeler(#[from] LabelerError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("writing {what}: {source}")]
    Io { what: String, source: std::io::Error },
}

/// Wall-clock and volume figures for one run. Kept out of the bundle so the
/// bundle stays reproducible.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunStats {
    pub files: usize,
    pub bytes: u64,
    pub lines: usize,
    pub records: usize,
    pub templates: usize,
    pub stage_ms: BTreeMap<String, u64>,
    pub broadcast: BroadcastStats,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub bundle: ReportBundle,
    pub stats: RunStats,
}

/// SHA-256 over the config digest and each file's path, size and line count.
pub fn run_id(config_digest: &str, stream: &MasterStream) -> String {
    let mut h = Sha256::new();
    h.update(config_digest.as_bytes());
    for f in &stream.files {
        h.update(b"\0");
        h.update(f.path.to_string_lossy().as_bytes());
        h.update(b"\0");
        h.update(f.byte_size.to_le_bytes());
        h.update((f.line_count as u64).to_le_bytes());
    }
    hex(&h.finalize())
}

pub fn analyze<P: AsRef<Path>>(inputs: &[P], config: &RunConfig) -> Result<Analysis, PipelineError> {
    config.validate()?;
    let mut stage_ms = BTreeMap::new();
    let mut lap = {
        let mut last = Instant::now();
        move |name: &str, stage_ms: &mut BTreeMap<String, u64>| {
            let now = Instant::now();
            stage_ms.insert(name.to_owned(), (now - last).as_millis() as u64);
            last = now;
        }
    };

    let ingested = ingest(inputs, &config.ingest)?;
    let stream = ingested.stream;
    let mut warnings = ingested.warnings;
    lap("ingest", &mut stage_ms);

    let mut store = TemplateStore::new(&config.templatizer)?;
    let labeler = Labeler::from_config(&config.labeler, store.masker())?;
    let enriched = match config.broadcast.mode {
        BroadcastMode::Offline => {
            store = templatize(&stream, &config.templatizer)?;
            lap("templatize", &mut stage_ms);
            enrich_stream(&stream, &store, &labeler, &config.broadcast)
        }
        // Labels come from the discovering record, so it stays the
        // representative whatever the configured mode.
        BroadcastMode::Online => enrich_online(&stream, &mut store, &labeler, &config.broadcast),
    };
    warnings.extend(labeler.take_warnings());
    lap("broadcast", &mut stage_ms);

    if let Some(path) = &config.output.enriched {
        let io = |source| PipelineError::Io { what: path.display().to_string(), source };
        let f = std::fs::File::create(path).map_err(io)?;
        let mut w = std::io::BufWriter::new(f);
        write_jsonl(&mut w, &stream, &enriched.records).map_err(io)?;
        std::io::Write::flush(&mut w).map_err(io)?;
    }

    let records = &enriched.records;
    let labels = &enriched.template_labels;
    let summary = build_summary(records, &stream, &store, labels);
    let (diagnosis, diag_warnings) = build_diagnosis(
        records,
        store.blank_template(),
        config.reports.granularity,
        config.reports.window_cap,
    );
    warnings.extend(diag_warnings);
    let bucket =
        fit_bucket(records, config.reports.temporal_bucket, config.reports.max_temporal_buckets);
    if bucket != config.reports.temporal_bucket {
        warnings.push(format!(
            "timeline too long for {} s temporal buckets; widened to {bucket} s",
            config.reports.temporal_bucket
        ));
    }
    let temporal = build_temporal(records, bucket);
    lap("reports", &mut stage_ms);

    let signals = GoldenSignal::PRIORITY;
    let n_intervals = interval_count(records, config.causal.interval, &signals);
    let matrix = if n_intervals > config.causal.max_intervals {
        warnings.push(format!(
            "causal graph skipped: problematic records span {n_intervals} intervals of {} s (limit {}); \
             check for mis-dated files or raise causal.interval",
            config.causal.interval, config.causal.max_intervals
        ));
        Default::default()
    } else {
        build_matrix(records, config.causal.interval, &signals)
    };
    warnings.extend(matrix.warnings.iter().cloned());
    let causal: CausalGraph<f64> = if matrix.is_empty() {
        CausalGraph::empty(config.causal.clone())
    } else {
        let (g, w) = build_graph(&matrix, &config.causal, |tid| {
            let t = store.template(tid);
            (stream.records[t.representative_record_id].raw.clone(), labels[tid].golden)
        });
        warnings.extend(w);
        g
    };
    lap("causal", &mut stage_ms);

    let blank = store.blank_template();
    let counters = Counters {
        total_lines: stream.total_lines,
        records: stream.len(),
        timestamped_records: stream.records.iter().filter(|r| r.effective_ts.is_some()).count(),
        blank_records: records.iter().filter(|e| Some(e.template_id) == blank).count(),
        templates: enriched.stats.templates_discovered,
        problematic_records: records
            .iter()
            .filter(|e| Some(e.template_id) != blank && e.labels.is_problematic())
            .count(),
        summary_rows: summary.len(),
        reduction: reduction(stream.len(), summary.len()),
        classifier_calls: enriched.stats.classifier_calls.clone(),
        diagnosis_windows: 0,
        causal_edges: 0,
    };
    let digest = config.digest();
    let meta = Meta {
        schema_version: SCHEMA_VERSION.into(),
        run_id: run_id(&digest, &stream),
        generator: GENERATOR.into(),
        inputs: inputs.iter().map(|p| p.as_ref().display().to_string()).collect(),
        files: stream
            .files
            .iter()
            .map(|f| FileMeta {
                index: f.index,
                path: f.path.display().to_string(),
                byte_size: f.byte_size,
                line_count: f.line_count,
            })
            .collect(),
        config_digest: digest,
        config: config.analysis_value(),
        granularity: config.reports.granularity,
        temporal_bucket: bucket,
        window_cap: config.reports.window_cap,
        counters,
        palette: Palette::default(),
    };
    let bundle = assemble_bundle(meta, summary, diagnosis, temporal, causal, warnings)?;
    lap("assemble", &mut stage_ms);

    let stats = RunStats {
        files: stream.files.len(),
        bytes: stream.files.iter().map(|f| f.byte_size).sum(),
        lines: stream.total_lines,
        records: stream.len(),
        templates: enriched.stats.templates_discovered,
        stage_ms,
        broadcast: enriched.stats.clone(),
    };
    Ok(Analysis { bundle, stats })
}
