//! Log dump discovery, multi-line record assembly and chronological
//! consolidation into a single master stream.
//!
//! Every record keeps its provenance (file and 1-based line span). Records
//! that carry no timestamp of their own inherit the nearest preceding
//! timestamp of the same file for ordering purposes, so a stack trace that
//! was split off stays next to the line that triggered it.

mod assemble;
mod discover;
pub mod timestamp;

pub use assemble::{assemble_records, assemble_text};
pub use assemble::Assembled;
pub use discover::{discover, Discovered};
pub use timestamp::{parse_timestamp, FormatTable, ParsedTimestamp, TimestampFormat};

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub type Timestamp = DateTime<Utc>;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read input path {path}: {source}")]
    UnreadableRoot {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: archive inputs ({kind}) are not supported, extract the dump first")]
    UnsupportedArchive { path: PathBuf, kind: &'static str },
    #[error("invalid glob `{pattern}`: {message}")]
    BadGlob { pattern: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceFile {
    pub path: PathBuf,
    pub index: usize,
    pub byte_size: u64,
    pub line_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    /// Position in the master stream (assigned by [`consolidate`]).
    pub record_id: usize,
    /// Index of the [`SourceFile`] in [`MasterStream::files`].
    pub source: usize,
    pub line_start: usize,
    pub line_end: usize,
    /// Timestamp parsed from the record's first line.
    pub timestamp: Option<Timestamp>,
    /// Timestamp used for ordering and time bucketing; inherited from the
    /// preceding record of the same file when the record has none.
    pub effective_ts: Option<Timestamp>,
    /// Full text; continuation lines joined with `\n`.
    pub raw: String,
    /// Byte offset of the body inside `raw`.
    pub body_offset: usize,
}

impl LogRecord {
    /// Text after the recognised timestamp prefix.
    pub fn body(&self) -> &str {
        &self.raw[self.body_offset..]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MasterStream {
    pub records: Vec<LogRecord>,
    pub total_lines: usize,
    pub files: Vec<SourceFile>,
}

impl MasterStream {
    pub fn file_of(&self, record: &LogRecord) -> &SourceFile {
        &self.files[record.source]
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub formats: Vec<TimestampFormat>,
    pub include: Vec<String>,
    pub exclude: Vec<String>,
    /// Year assumed for syslog timestamps, which carry none.
    pub syslog_year: i32,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            formats: TimestampFormat::defaults(),
            include: Vec::new(),
            exclude: Vec::new(),
            syslog_year: 1970,
        }
    }
}

impl IngestConfig {
    pub fn format_table(&self) -> FormatTable {
        FormatTable::new(&self.formats, self.syslog_year)
    }
}

/// Result of ingesting a dump: the stream plus non-fatal warnings.
#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub stream: MasterStream,
    pub warnings: Vec<String>,
}

/// Merges per-file record sequences (each in file order) into one stream
/// ordered by `(effective timestamp, file index, line_start)`.
///
/// Records whose file has no timestamp at all sort after every dated record.
pub fn consolidate(files: Vec<SourceFile>, per_file: Vec<Vec<LogRecord>>) -> MasterStream {
    let mut records: Vec<LogRecord> = Vec::with_capacity(per_file.iter().map(Vec::len).sum());
    for mut seq in per_file {
        let first = seq.iter().find_map(|r| r.timestamp);
        let mut last = None;
        for r in &mut seq {
            if r.timestamp.is_some() {
                last = r.timestamp;
            }
            r.effective_ts = r.timestamp.or(last).or(first);
        }
        records.extend(seq);
    }
    records.sort_by(|a, b| {
        (a.effective_ts.is_none(), a.effective_ts, a.source, a.line_start).cmp(&(
            b.effective_ts.is_none(),
            b.effective_ts,
            b.source,
            b.line_start,
        ))
    });
    for (i, r) in records.iter_mut().enumerate() {
        r.record_id = i;
    }
    let total_lines = files.iter().map(|f| f.line_count).sum();
    MasterStream { records, total_lines, files }
}

/// Discover, assemble (one worker per file) and consolidate.
pub fn ingest<P: AsRef<Path>>(roots: &[P], config: &IngestConfig) -> Result<Ingested, IngestError> {
    let discovered = discover(roots, &config.include, &config.exclude)?;
    let mut warnings = discovered.warnings;
    let table = config.format_table();

    let results: Vec<_> = discovered
        .files
        .par_iter()
        .map(|f| assemble_records(f, &table))
        .collect();

    let mut files = Vec::with_capacity(results.len());
    let mut per_file = Vec::with_capacity(results.len());
    for (file, res) in discovered.files.into_iter().zip(results) {
        match res {
            Ok(a) => {
                warnings.extend(a.warnings);
                files.push(SourceFile { line_count: a.line_count, ..file });
                per_file.push(a.records);
            }
            Err(e) => warnings.push(format!("skipped {}: {e}", file.path.display())),
        }
    }
    // re-number in case a file was dropped
    for (i, (f, recs)) in files.iter_mut().zip(per_file.iter_mut()).enumerate() {
        f.index = i;
        for r in recs.iter_mut() {
            r.source = i;
        }
    }
    Ok(Ingested { stream: consolidate(files, per_file), warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn rec(source: usize, line: usize, ts: Option<i64>) -> LogRecord {
        LogRecord {
            record_id: 0,
            source,
            line_start: line,
            line_end: line,
            timestamp: ts.map(|s| Utc.timestamp_opt(s, 0).unwrap()),
            effective_ts: None,
            raw: format!("f{source} l{line}"),
            body_offset: 0,
        }
    }

    fn file(index: usize) -> SourceFile {
        SourceFile { path: format!("f{index}").into(), index, byte_size: 0, line_count: 1 }
    }

    fn order(s: &MasterStream) -> Vec<String> {
        s.records.iter().map(|r| r.raw.clone()).collect()
    }

    #[test]
    fn merges_by_time() {
        let s = consolidate(
            vec![file(0), file(1)],
            vec![vec![rec(0, 1, Some(10)), rec(0, 2, Some(30))], vec![rec(1, 1, Some(20))]],
        );
        assert_eq!(order(&s), ["f0 l1", "f1 l1", "f0 l2"]);
        assert_eq!(s.records.iter().map(|r| r.record_id).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn ties_go_to_lower_file_index() {
        let s = consolidate(
            vec![file(0), file(1)],
            vec![vec![rec(0, 5, Some(10))], vec![rec(1, 1, Some(10))]],
        );
        assert_eq!(order(&s), ["f0 l5", "f1 l1"]);
    }

    #[test]
    fn untimestamped_inherits_from_preceding_record_of_same_file() {
        // A: t1 (line 1), u (line 2, no ts), t3 (line 3); B: t2 (between t1 and t3), t4
        let s = consolidate(
            vec![file(0), file(1)],
            vec![
                vec![rec(0, 1, Some(100)), rec(0, 2, None), rec(0, 3, Some(300))],
                vec![rec(1, 1, Some(200)), rec(1, 2, Some(400))],
            ],
        );
        assert_eq!(order(&s), ["f0 l1", "f0 l2", "f1 l1", "f0 l3", "f1 l2"]);
        assert_eq!(s.records[1].effective_ts, Some(Utc.timestamp_opt(100, 0).unwrap()));
        assert_eq!(s.records[1].timestamp, None);
    }

    #[test]
    fn head_of_file_inherits_first_timestamp_and_undated_files_go_last() {
        let s = consolidate(
            vec![file(0), file(1)],
            vec![vec![rec(0, 1, None), rec(0, 2, Some(50))], vec![rec(1, 1, None)]],
        );
        assert_eq!(order(&s), ["f0 l1", "f0 l2", "f1 l1"]);
        assert_eq!(s.records[0].effective_ts, s.records[1].effective_ts);
        assert_eq!(s.records[2].effective_ts, None);
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let bad: Result<IngestConfig, _> = serde_json::from_str(r#"{"formatz": []}"#);
        assert!(bad.is_err());
        let ok: IngestConfig = serde_json::from_str(r#"{"formats": ["iso8601"]}"#).unwrap();
        assert_eq!(ok.formats, vec![TimestampFormat::Iso8601]);
    }
}
