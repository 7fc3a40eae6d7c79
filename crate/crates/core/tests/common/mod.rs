#![allow(dead_code)]

use logan_core::broadcast::{enrich_stream, BroadcastConfig, EnrichedRecord};
use logan_core::ingest::{assemble_text, consolidate, FormatTable, MasterStream, SourceFile};
use logan_core::templatizer::{templatize, TemplatizerConfig};
use logan_core::{Labeler, TemplateStore};

/// Each text becomes one source file.
pub fn stream_of(files: &[&str]) -> MasterStream {
    let table = FormatTable::default();
    let mut sources = Vec::new();
    let mut per_file = Vec::new();
    for (i, text) in files.iter().enumerate() {
        let a = assemble_text(text, i, &table);
        sources.push(SourceFile {
            path: format!("f{i}.log").into(),
            index: i,
            byte_size: text.len() as u64,
            line_count: a.line_count,
        });
        per_file.push(a.records);
    }
    consolidate(sources, per_file)
}

/// Templatize and broadcast rule labels, then hand everything to `f`.
pub fn with_enriched<R>(
    files: &[&str],
    f: impl FnOnce(&MasterStream, &TemplateStore, &[EnrichedRecord<'_>]) -> R,
) -> R {
    let stream = stream_of(files);
    let store = templatize(&stream, &TemplatizerConfig::default()).unwrap();
    let labeler = Labeler::rule();
    let e = enrich_stream(&stream, &store, &labeler, &BroadcastConfig::default());
    f(&stream, &store, &e.records)
}
